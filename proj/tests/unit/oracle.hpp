// SPDX-License-Identifier: Apache-2.0
//
// Clean-room dense reference math for the tests. Plain loops over
// std::vector, no tape and nothing shared with the library's kernels.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kgr/rng.hpp"
#include "kgr/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0) : r(rows), c(cols), v(rows * cols, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

inline Mat of(const kgr::ad::Tensor& t) {
  Mat m;
  if (t.rank() == 1) {
    m.r = 1;
    m.c = t.dim(0);
  } else {
    m.r = t.dim(0);
    m.c = t.dim(1);
  }
  m.v.assign(t.values().begin(), t.values().end());
  return m;
}

inline kgr::ad::Tensor tensor(const Mat& m, bool requires_grad = false) {
  return kgr::ad::Tensor::from({m.r, m.c}, m.v, requires_grad);
}

inline Mat random(std::size_t r, std::size_t c, kgr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (double& x : m.v) x = rng.uniform(lo, hi);
  return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.r, b.c);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < b.c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.c; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline Mat tr(const Mat& a) {
  Mat out(a.c, a.r);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < a.c; ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat plus(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

inline Mat plus_row(const Mat& a, const Mat& row) {
  Mat out = a;
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) += row.v[j];
  return out;
}

inline Mat cols(const Mat& a, std::size_t begin, std::size_t end) {
  Mat out(a.r, end - begin);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = a(i, j);
  return out;
}

inline Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.r, a.c + b.c);
  for (std::size_t i = 0; i < a.r; ++i) {
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.c; ++j) out(i, a.c + j) = b(i, j);
  }
  return out;
}

inline Mat softmax_rows(const Mat& a) {
  Mat out(a.r, a.c);
  for (std::size_t i = 0; i < a.r; ++i) {
    double mx = a(i, 0);
    for (std::size_t j = 1; j < a.c; ++j) mx = std::max(mx, a(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < a.c; ++j) z += std::exp(a(i, j) - mx);
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = std::exp(a(i, j) - mx) / z;
  }
  return out;
}

inline Mat layer_norm(const Mat& a, const Mat& gamma, const Mat& beta, double eps = 1e-5) {
  Mat out(a.r, a.c);
  for (std::size_t i = 0; i < a.r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < a.c; ++j) mu += a(i, j);
    mu /= static_cast<double>(a.c);
    double var = 0.0;
    for (std::size_t j = 0; j < a.c; ++j) var += (a(i, j) - mu) * (a(i, j) - mu);
    var /= static_cast<double>(a.c);
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = (a(i, j) - mu) / std::sqrt(var + eps) * gamma.v[j] + beta.v[j];
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat map(const Mat& a, double (*f)(double)) {
  Mat out = a;
  for (double& x : out.v) x = f(x);
  return out;
}

/// softmax(Q_h K_h^T / sqrt(d_k)) V_h per head, concatenated, times Wo.
inline Mat mha(const Mat& queries, const Mat& keys_values, const Mat& wq, const Mat& wk, const Mat& wv,
               const Mat& wo, std::size_t heads, bool causal = false, std::vector<Mat>* weights = nullptr) {
  const Mat q = mm(queries, wq), k = mm(keys_values, wk), v = mm(keys_values, wv);
  const std::size_t dk = wq.c / heads;
  Mat joined(queries.r, wq.c);
  for (std::size_t h = 0; h < heads; ++h) {
    Mat scores = mm(cols(q, h * dk, (h + 1) * dk), tr(cols(k, h * dk, (h + 1) * dk)));
    for (std::size_t i = 0; i < scores.r; ++i)
      for (std::size_t j = 0; j < scores.c; ++j) {
        scores(i, j) /= std::sqrt(static_cast<double>(dk));
        if (causal && j > i) scores(i, j) = -1e300;
      }
    const Mat w = softmax_rows(scores);
    if (weights) weights->push_back(w);
    const Mat head = mm(w, cols(v, h * dk, (h + 1) * dk));
    for (std::size_t i = 0; i < head.r; ++i)
      for (std::size_t j = 0; j < dk; ++j) joined(i, h * dk + j) = head(i, j);
  }
  return mm(joined, wo);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.v.size() != b.v.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

inline double max_abs_diff(const kgr::ad::Tensor& t, const Mat& b) { return max_abs_diff(of(t), b); }

/// Overwrites a parameter tensor with uniform values in [lo, hi).
inline void randomize(kgr::ad::Tensor& t, kgr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (double& x : t.mutable_values()) x = rng.uniform(lo, hi);
}

}  // namespace oracle
