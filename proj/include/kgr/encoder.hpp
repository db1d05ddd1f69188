// SPDX-License-Identifier: Apache-2.0
//
// Regional feature extraction, node initialization by cross-attention and
// knowledge-graph distillation of disease-related features.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgr/layers.hpp"
#include "kgr/tensor.hpp"

namespace kgr::encoder {

inline constexpr std::size_t kDefaultGcnLayers = 3;

/// Trainable patch encoder: Z_v = patches * W_patch + positions.
struct VisualEncoder {
  std::size_t patches = 0;
  std::size_t patch_dim = 0;
  ad::Tensor w_patch;    // patch_dim x d
  ad::Tensor positions;  // patches x d

  static VisualEncoder create(std::size_t patches, std::size_t patch_dim, std::size_t d_model, Rng& rng);
  ad::Tensor forward(const ad::Tensor& image) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Disease-name embeddings E queried against regional features Z_v:
/// N0 = MHA(E, Z_v).
ad::Tensor node_init(const ad::Tensor& entity_embeddings, const ad::Tensor& regional, const MhaBlock& mha,
                     std::vector<ad::Tensor>* attention = nullptr);

struct GcnLayer {
  ad::Tensor w_propagate;  // d x d
  ad::Tensor w_update;     // d x d
  LayerNormParams ln_propagate;
  LayerNormParams ln_update;

  static GcnLayer create(std::size_t d, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// One propagate-then-update step:
///   phase1 = GELU(LN(A' (N W)))
///   next   = GELU(LN((N + phase1) W_update + N))
/// `a_norm` acts on the node dimension. `phase1_out` receives phase1.
ad::Tensor gcn_layer(const ad::Tensor& nodes, const ad::Tensor& a_norm, const GcnLayer& layer,
                     ad::Tensor* phase1_out = nullptr);

struct DistillOptions {
  bool use_gcn = true;
  /// Permits a layer count other than three.
  bool allow_layer_count_override = false;
};

/// Z_g = gcn(gcn(gcn(node_init(E, Z_v)))); with use_gcn off, Z_g is the
/// node initialization alone. `gcn_calls` counts gcn_layer invocations.
ad::Tensor distill(const ad::Tensor& regional, const ad::Tensor& entity_embeddings, const ad::Tensor& a_norm,
                   const MhaBlock& node_mha, std::span<const GcnLayer> layers, const DistillOptions& options = {},
                   std::size_t* gcn_calls = nullptr);

/// Row i is the mean of the embedding-table rows for entity i's name tokens.
ad::Tensor entity_embeddings(const ad::Tensor& embedding_table,
                             const std::vector<std::vector<std::int64_t>>& name_tokens);

}  // namespace kgr::encoder
