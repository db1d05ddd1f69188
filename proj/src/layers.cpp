// SPDX-License-Identifier: Apache-2.0
#include "kgr/layers.hpp"

#include <cmath>

#include "kgr/error.hpp"
#include "kgr/ops.hpp"

namespace kgr {

ad::Tensor uniform_param(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return ad::Tensor::from(std::move(shape), std::move(values), true);
}

Linear Linear::create(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  Linear l;
  l.weight = uniform_param({in, out}, in, rng);
  if (with_bias) l.bias = ad::Tensor::zeros({out}, true);
  return l;
}

ad::Tensor Linear::forward(const ad::Tensor& x) const {
  ad::Tensor y = ad::matmul(x, weight);
  return bias.defined() ? ad::add_bias(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::create(std::size_t width) {
  return {ad::Tensor::full({width}, 1.0, true), ad::Tensor::zeros({width}, true)};
}

ad::Tensor LayerNormParams::forward(const ad::Tensor& x) const { return ad::layer_norm(x, gamma, beta, 1e-5); }

void LayerNormParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

MhaBlock MhaBlock::create(std::size_t q_in, std::size_t kv_in, std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide d_model " + std::to_string(d_model));
  }
  MhaBlock m;
  m.heads = heads;
  m.d_model = d_model;
  m.w_q = uniform_param({q_in, d_model}, q_in, rng);
  m.w_k = uniform_param({kv_in, d_model}, kv_in, rng);
  m.w_v = uniform_param({kv_in, d_model}, kv_in, rng);
  m.w_o = uniform_param({d_model, d_model}, d_model, rng);
  return m;
}

ad::Tensor MhaBlock::forward(const ad::Tensor& queries, const ad::Tensor& keys_values, bool causal,
                             std::vector<ad::Tensor>* attention) const {
  if (queries.rank() != 2 || queries.dim(1) != w_q.dim(0) || keys_values.rank() != 2 ||
      keys_values.dim(1) != w_k.dim(0)) {
    throw DimensionError("attention: queries " + ad::shape_str(queries.shape()) + " / keys " +
                         ad::shape_str(keys_values.shape()) + " do not match projections " +
                         ad::shape_str(w_q.shape()) + " / " + ad::shape_str(w_k.shape()));
  }
  return attend(ad::matmul(queries, w_q), ad::matmul(keys_values, w_k), ad::matmul(keys_values, w_v), causal,
                attention);
}

ad::Tensor MhaBlock::attend(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v, bool causal,
                            std::vector<ad::Tensor>* attention) const {
  const std::size_t dk = head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<ad::Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const ad::Tensor qh = heads == 1 ? q : ad::slice(q, 1, h * dk, (h + 1) * dk);
    const ad::Tensor kh = heads == 1 ? k : ad::slice(k, 1, h * dk, (h + 1) * dk);
    const ad::Tensor vh = heads == 1 ? v : ad::slice(v, 1, h * dk, (h + 1) * dk);
    ad::Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dk);
    if (causal) scores = ad::mask_future(scores);
    const ad::Tensor weights = ad::softmax(scores, 1);
    if (attention != nullptr) attention->push_back(weights);
    outputs.push_back(ad::matmul(weights, vh));
  }
  const ad::Tensor joined = heads == 1 ? outputs.front() : ad::concat(outputs, 1);
  return ad::matmul(joined, w_o);
}

void MhaBlock::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_q", w_q});
  out.push_back({prefix + ".w_k", w_k});
  out.push_back({prefix + ".w_v", w_v});
  out.push_back({prefix + ".w_o", w_o});
}

}  // namespace kgr
