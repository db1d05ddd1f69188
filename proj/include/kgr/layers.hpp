// SPDX-License-Identifier: Apache-2.0
//
// Parameterized building blocks shared by the encoder, fusion and decoder.
// Weights are stored input-major (in x out) so a layer computes x * W.
#pragma once

#include <string>
#include <vector>

#include "kgr/rng.hpp"
#include "kgr/tensor.hpp"

namespace kgr {

struct NamedParam {
  std::string name;
  ad::Tensor tensor;
};

using ParameterList = std::vector<NamedParam>;

/// Leaf of the given shape drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ad::Tensor uniform_param(ad::Shape shape, std::size_t fan_in, Rng& rng);

struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;  // undefined when the layer has no bias

  static Linear create(std::size_t in, std::size_t out, bool with_bias, Rng& rng);
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LayerNormParams {
  ad::Tensor gamma;
  ad::Tensor beta;

  static LayerNormParams create(std::size_t width);
  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Multi-head attention. Head h uses columns [h*d_k, (h+1)*d_k) of the
/// query/key/value projections, which is the same as keeping separate
/// per-head matrices.
struct MhaBlock {
  std::size_t heads = 1;
  std::size_t d_model = 0;
  ad::Tensor w_q;  // q_in x d_model
  ad::Tensor w_k;  // kv_in x d_model
  ad::Tensor w_v;  // kv_in x d_model
  ad::Tensor w_o;  // d_model x d_model

  static MhaBlock create(std::size_t q_in, std::size_t kv_in, std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t head_dim() const { return d_model / heads; }

  /// Softmax(Q_h K_h^T / sqrt(d_k)) V_h per head, concatenated, times W^O.
  /// With `causal`, query i only sees keys j <= i. When `attention` is
  /// non-null it receives the per-head weight matrices.
  ad::Tensor forward(const ad::Tensor& queries, const ad::Tensor& keys_values, bool causal = false,
                     std::vector<ad::Tensor>* attention = nullptr) const;

  /// The attention step on already-projected q (n x d_model) and k, v
  /// (m x d_model).
  ad::Tensor attend(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v, bool causal = false,
                    std::vector<ad::Tensor>* attention = nullptr) const;

  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace kgr
