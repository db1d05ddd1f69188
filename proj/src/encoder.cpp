// SPDX-License-Identifier: Apache-2.0
#include "kgr/encoder.hpp"

#include "kgr/error.hpp"
#include "kgr/ops.hpp"

namespace kgr::encoder {

VisualEncoder VisualEncoder::create(std::size_t patches, std::size_t patch_dim, std::size_t d_model, Rng& rng) {
  VisualEncoder enc;
  enc.patches = patches;
  enc.patch_dim = patch_dim;
  enc.w_patch = uniform_param({patch_dim, d_model}, patch_dim, rng);
  enc.positions = uniform_param({patches, d_model}, d_model, rng);
  return enc;
}

ad::Tensor VisualEncoder::forward(const ad::Tensor& image) const {
  if (image.rank() != 2 || image.dim(0) != patches || image.dim(1) != patch_dim) {
    throw DimensionError("visual encoder: expected " + std::to_string(patches) + " patches of dim " +
                         std::to_string(patch_dim) + ", got " + ad::shape_str(image.shape()));
  }
  return ad::add(ad::matmul(image, w_patch), positions);
}

void VisualEncoder::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_patch", w_patch});
  out.push_back({prefix + ".positions", positions});
}

ad::Tensor node_init(const ad::Tensor& entity_embeddings, const ad::Tensor& regional, const MhaBlock& mha,
                     std::vector<ad::Tensor>* attention) {
  return mha.forward(entity_embeddings, regional, false, attention);
}

GcnLayer GcnLayer::create(std::size_t d, Rng& rng) {
  GcnLayer layer;
  layer.w_propagate = uniform_param({d, d}, d, rng);
  layer.w_update = uniform_param({d, d}, d, rng);
  layer.ln_propagate = LayerNormParams::create(d);
  layer.ln_update = LayerNormParams::create(d);
  return layer;
}

void GcnLayer::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_propagate", w_propagate});
  out.push_back({prefix + ".w_update", w_update});
  ln_propagate.collect(prefix + ".ln_propagate", out);
  ln_update.collect(prefix + ".ln_update", out);
}

ad::Tensor gcn_layer(const ad::Tensor& nodes, const ad::Tensor& a_norm, const GcnLayer& layer,
                     ad::Tensor* phase1_out) {
  if (nodes.rank() != 2 || a_norm.rank() != 2 || a_norm.dim(0) != nodes.dim(0) || a_norm.dim(1) != nodes.dim(0) ||
      layer.w_propagate.dim(0) != nodes.dim(1)) {
    throw DimensionError("gcn_layer: nodes " + ad::shape_str(nodes.shape()) + ", adjacency " +
                         ad::shape_str(a_norm.shape()) + ", weights " + ad::shape_str(layer.w_propagate.shape()));
  }
  const ad::Tensor aggregated = ad::matmul(a_norm, ad::matmul(nodes, layer.w_propagate));
  const ad::Tensor phase1 = ad::gelu(layer.ln_propagate.forward(aggregated));
  if (phase1_out != nullptr) *phase1_out = phase1;
  const ad::Tensor updated = ad::add(ad::matmul(ad::add(nodes, phase1), layer.w_update), nodes);
  return ad::gelu(layer.ln_update.forward(updated));
}

ad::Tensor distill(const ad::Tensor& regional, const ad::Tensor& entity_embeddings, const ad::Tensor& a_norm,
                   const MhaBlock& node_mha, std::span<const GcnLayer> layers, const DistillOptions& options,
                   std::size_t* gcn_calls) {
  if (options.use_gcn && layers.size() != kDefaultGcnLayers && !options.allow_layer_count_override) {
    throw ConfigError("distill: expected " + std::to_string(kDefaultGcnLayers) + " GCN layers, got " +
                      std::to_string(layers.size()));
  }
  ad::Tensor nodes = node_init(entity_embeddings, regional, node_mha);
  if (!options.use_gcn) return nodes;
  for (const GcnLayer& layer : layers) {
    nodes = gcn_layer(nodes, a_norm, layer);
    if (gcn_calls != nullptr) ++*gcn_calls;
  }
  return nodes;
}

ad::Tensor entity_embeddings(const ad::Tensor& embedding_table,
                             const std::vector<std::vector<std::int64_t>>& name_tokens) {
  std::vector<ad::Tensor> rows;
  rows.reserve(name_tokens.size());
  for (const auto& ids : name_tokens) {
    if (ids.empty()) throw InvalidArgument("entity embeddings: entity name has no tokens");
    rows.push_back(ad::mean(ad::gather_rows(embedding_table, ids), 0));
  }
  return ad::concat(rows, 0);
}

}  // namespace kgr::encoder
