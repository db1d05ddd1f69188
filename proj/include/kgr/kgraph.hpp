// SPDX-License-Identifier: Apache-2.0
//
// Fixed 14-node chest-disease graph. Nodes in the same anatomical region
// are fully connected, "global" nodes connect to every node, and every
// node carries a self-loop so the symmetric normalization is defined.
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/tensor.hpp"

namespace kgr::graph {

enum class Region { kLung, kHeart, kPleura, kGlobal };

std::string_view region_name(Region r);
std::optional<Region> parse_region(std::string_view name);

struct DiseaseEntity {
  std::string name;
  Region region;
  std::size_t index;
};

inline constexpr std::size_t kNumEntities = 14;

/// CheXpert label names in canonical order.
const std::array<std::string_view, kNumEntities>& chexpert_labels();

/// Row-major n x n matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

/// D^{-1/2} A D^{-1/2} with D the diagonal of row sums. Rejects
/// non-square, asymmetric or negative input and any zero-degree row.
SquareMatrix normalize_adjacency(const SquareMatrix& adjacency);

class KnowledgeGraph {
 public:
  KnowledgeGraph(std::vector<DiseaseEntity> entities, SquareMatrix adjacency);

  const std::vector<DiseaseEntity>& entities() const { return entities_; }
  const SquareMatrix& adjacency() const { return adjacency_; }
  const SquareMatrix& normalized() const { return normalized_; }
  std::size_t size() const { return entities_.size(); }

  /// Index of the entity named `name`, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;

  /// The normalized adjacency as a constant tensor for graph propagation.
  ad::Tensor normalized_tensor() const;

  /// Golden text form: one row of 0/1 per line, space-separated.
  std::string adjacency_text() const;

 private:
  std::vector<DiseaseEntity> entities_;
  SquareMatrix adjacency_;
  SquareMatrix normalized_;
};

/// Default graph over the CheXpert labels.
KnowledgeGraph build_chexpert_graph();

/// Builds a graph from an override document:
///
///   node <name> <region>    reassigns a label's region
///   edge <name> <name>      adds an undirected edge
///
/// Names may be double-quoted or use '_' in place of spaces. When the
/// document lists any edge, the edge set is exactly those edges plus
/// self-loops; otherwise edges follow the region rule. Unknown names and
/// duplicate edges (in either direction) are rejected.
KnowledgeGraph parse_graph_override(std::string_view text);
KnowledgeGraph load_graph_override(const std::string& path);

}  // namespace kgr::graph
