// SPDX-License-Identifier: Apache-2.0
// Reference forms of the graph, attention and fusion layers, built only
// from the dense helpers in oracle.hpp.
#pragma once

#include <vector>

#include "kgr/encoder.hpp"
#include "kgr/fusion.hpp"
#include "kgr/kgraph.hpp"
#include "kgr/layers.hpp"
#include "oracle.hpp"

namespace oracle {

// D^{-1/2} A D^{-1/2} by explicit dense products with a diagonal matrix.
inline std::vector<double> dense_normalize(const kgr::graph::SquareMatrix& a) {
  const std::size_t n = a.n;
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    d[i * n + i] = 1.0 / std::sqrt(deg);
  }
  auto mul = [n](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x[i * n + k] * y[k * n + j];
    return out;
  };
  return mul(mul(d, a.values), d);
}

/// Symmetric 0/1 graph with self-loops, 1..20 nodes.
inline kgr::graph::SquareMatrix random_graph(kgr::Rng& rng, double p = 0.3) {
  const std::size_t n = 1 + rng.below(20);
  kgr::graph::SquareMatrix a{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < p) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

inline Mat random_normalized_graph(std::size_t n, kgr::Rng& rng) {
  kgr::graph::SquareMatrix a{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.5) a(i, j) = a(j, i) = 1.0;
  }
  const auto an = kgr::graph::normalize_adjacency(a);
  Mat m(n, n);
  m.v = an.values;
  return m;
}

inline Mat permute_rows(const Mat& m, const std::vector<std::size_t>& p) {
  Mat out(m.r, m.c);
  for (std::size_t i = 0; i < m.r; ++i)
    for (std::size_t j = 0; j < m.c; ++j) out(i, j) = m(p[i], j);
  return out;
}

inline kgr::encoder::GcnLayer random_gcn(std::size_t d, kgr::Rng& rng) {
  kgr::encoder::GcnLayer layer = kgr::encoder::GcnLayer::create(d, rng);
  // Non-trivial affine parameters so the oracle sees them.
  randomize(layer.ln_propagate.gamma, rng, 0.5, 1.5);
  randomize(layer.ln_propagate.beta, rng, -0.5, 0.5);
  randomize(layer.ln_update.gamma, rng, 0.5, 1.5);
  randomize(layer.ln_update.beta, rng, -0.5, 0.5);
  return layer;
}

// phase1 = GELU(LN(A' (N W))); next = GELU(LN((N + phase1) W_u + N)).
inline Mat gcn_oracle(const Mat& nodes, const Mat& a_norm, const kgr::encoder::GcnLayer& layer) {
  const Mat phase1 = map(layer_norm(mm(a_norm, mm(nodes, of(layer.w_propagate))), of(layer.ln_propagate.gamma),
                                    of(layer.ln_propagate.beta)),
                         gelu);
  const Mat update = plus(mm(plus(nodes, phase1), of(layer.w_update)), nodes);
  return map(layer_norm(update, of(layer.ln_update.gamma), of(layer.ln_update.beta)), gelu);
}

inline Mat mha_oracle(const Mat& q, const Mat& kv, const kgr::MhaBlock& m, std::vector<Mat>* w = nullptr) {
  return mha(q, kv, of(m.w_q), of(m.w_k), of(m.w_v), of(m.w_o), m.heads, false, w);
}

inline Mat gate_oracle(const Mat& zv, const Mat& zg, const kgr::fusion::GateFusion& gf) {
  return map(mm(hcat(zv, zg), of(gf.w_gate)), sigmoid);
}

inline Mat element_oracle(const Mat& zv, const Mat& zg, const kgr::fusion::GateFusion& gf) {
  const Mat gate = gate_oracle(zv, zg, gf);
  Mat out(zv.r, zv.c);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = gate.v[i] * zv.v[i] + (1.0 - gate.v[i]) * zg.v[i];
  return out;
}

inline Mat expert_oracle(const Mat& x, const kgr::fusion::Expert& e) {
  return layer_norm(plus_row(mm(x, of(e.linear.weight)), of(e.linear.bias)), of(e.norm.gamma), of(e.norm.beta));
}

inline Mat mean_rows(const Mat& x) {
  Mat out(1, x.c);
  for (std::size_t i = 0; i < x.r; ++i)
    for (std::size_t j = 0; j < x.c; ++j) out(0, j) += x(i, j) / static_cast<double>(x.r);
  return out;
}

inline Mat router_oracle(const Mat& zv, const Mat& zg, const kgr::fusion::MoeFusion& mf) {
  const Mat pooled = hcat(mean_rows(zv), mean_rows(zg));
  const Mat hidden = map(plus_row(mm(pooled, of(mf.router_hidden.weight)), of(mf.router_hidden.bias)), gelu);
  return softmax_rows(plus_row(mm(hidden, of(mf.router_out.weight)), of(mf.router_out.bias)));
}

inline Mat modality_oracle(const Mat& zv, const Mat& zg, const kgr::fusion::MoeFusion& mf) {
  const Mat g = router_oracle(zv, zg, mf);
  const Mat e1 = expert_oracle(zv, mf.regional_expert), e2 = expert_oracle(zg, mf.disease_expert);
  Mat out(zv.r, zv.c);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = g.v[0] * e1.v[i] + g.v[1] * e2.v[i];
  return out;
}

inline kgr::fusion::MoeFusion random_moe(std::size_t d, kgr::Rng& rng) {
  kgr::fusion::MoeFusion mf = kgr::fusion::MoeFusion::create(d, rng);
  for (kgr::fusion::Expert* e : {&mf.regional_expert, &mf.disease_expert}) {
    randomize(e->linear.bias, rng);
    randomize(e->norm.gamma, rng, 0.5, 1.5);
    randomize(e->norm.beta, rng);
  }
  randomize(mf.router_hidden.bias, rng);
  randomize(mf.router_out.bias, rng);
  return mf;
}

}  // namespace oracle
