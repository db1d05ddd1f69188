// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include "kgr/layers.hpp"
#include "kgr/tensor.hpp"

namespace kgr::fusion {

/// How regional features Z_v and aligned disease features are combined.
/// `kDisease` passes the aligned disease features through alone and
/// `kNone` passes Z_v through alone.
enum class Strategy { kElement, kModality, kAverage, kNone, kDisease };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

/// Aligned disease features: MHA with queries from Z_v and keys/values
/// from Z_g; the result has Z_v's shape.
ad::Tensor align(const ad::Tensor& regional, const ad::Tensor& disease, const MhaBlock& mha,
                 std::vector<ad::Tensor>* attention = nullptr);

struct GateFusion {
  ad::Tensor w_gate;  // 2d x d

  static GateFusion create(std::size_t d, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// gate = sigmoid([Z_v; Z~_g] W^g), one value per element;
/// Z_f = gate * Z_v + (1 - gate) * Z~_g.
ad::Tensor element_fuse(const ad::Tensor& regional, const ad::Tensor& aligned, const GateFusion& gf,
                        ad::Tensor* gate_out = nullptr);

struct Expert {
  Linear linear;
  LayerNormParams norm;

  ad::Tensor forward(const ad::Tensor& x) const { return norm.forward(linear.forward(x)); }
};

struct MoeFusion {
  Expert regional_expert;
  Expert disease_expert;
  Linear router_hidden;  // 2d -> d
  Linear router_out;     // d -> 2

  static MoeFusion create(std::size_t d, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Router weights (g1, g2) as a 1 x 2 tensor: mean-pool both streams over
/// positions, concatenate, MLP with GELU, softmax.
ad::Tensor route(const ad::Tensor& regional, const ad::Tensor& aligned, const MoeFusion& mf);

/// Z_f = g1 E1(Z_v) + g2 E2(Z~_g). `forced_weights` replaces the router
/// output, which isolates a single expert when set to (1, 0) or (0, 1).
ad::Tensor modality_fuse(const ad::Tensor& regional, const ad::Tensor& aligned, const MoeFusion& mf,
                         std::optional<std::pair<double, double>> forced_weights = std::nullopt,
                         ad::Tensor* weights_out = nullptr);

ad::Tensor average_fuse(const ad::Tensor& regional, const ad::Tensor& aligned);

}  // namespace kgr::fusion
