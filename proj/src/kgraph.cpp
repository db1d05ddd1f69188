// SPDX-License-Identifier: Apache-2.0
#include "kgr/kgraph.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "kgr/error.hpp"

namespace kgr::graph {

std::string_view region_name(Region r) {
  switch (r) {
    case Region::kLung:
      return "lung";
    case Region::kHeart:
      return "heart";
    case Region::kPleura:
      return "pleura";
    case Region::kGlobal:
      return "global";
  }
  return "global";
}

std::optional<Region> parse_region(std::string_view name) {
  for (Region r : {Region::kLung, Region::kHeart, Region::kPleura, Region::kGlobal})
    if (region_name(r) == name) return r;
  return std::nullopt;
}

const std::array<std::string_view, kNumEntities>& chexpert_labels() {
  static const std::array<std::string_view, kNumEntities> labels = {
      "No Finding",     "Enlarged Cardiomediastinum", "Cardiomegaly", "Lung Opacity", "Lung Lesion",
      "Edema",          "Consolidation",              "Pneumonia",    "Atelectasis",  "Pneumothorax",
      "Pleural Effusion", "Pleural Other",            "Fracture",     "Support Devices"};
  return labels;
}

namespace {

Region default_region(std::size_t index) {
  switch (index) {
    case 1:
    case 2:
      return Region::kHeart;
    case 3:
    case 4:
    case 5:
    case 6:
    case 7:
    case 8:
    case 9:
      return Region::kLung;
    case 10:
    case 11:
      return Region::kPleura;
    default:
      return Region::kGlobal;
  }
}

std::vector<DiseaseEntity> default_entities() {
  std::vector<DiseaseEntity> out;
  for (std::size_t i = 0; i < kNumEntities; ++i)
    out.push_back({std::string(chexpert_labels()[i]), default_region(i), i});
  return out;
}

SquareMatrix region_adjacency(const std::vector<DiseaseEntity>& entities) {
  const std::size_t n = entities.size();
  SquareMatrix a{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Region ri = entities[i].region, rj = entities[j].region;
      if (i == j || ri == rj || ri == Region::kGlobal || rj == Region::kGlobal) a(i, j) = 1.0;
    }
  }
  return a;
}

}  // namespace

SquareMatrix normalize_adjacency(const SquareMatrix& adjacency) {
  const std::size_t n = adjacency.n;
  if (adjacency.values.size() != n * n) throw DimensionError("normalize_adjacency: matrix is not square");
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = adjacency(i, j);
      if (v < 0.0) throw InvalidArgument("normalize_adjacency: negative entry");
      if (v != adjacency(j, i)) {
        throw InvalidArgument("normalize_adjacency: adjacency is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      deg += v;
    }
    if (deg <= 0.0) {
      throw InvalidArgument("normalize_adjacency: node " + std::to_string(i) +
                            " has zero degree; add self-loops before normalizing");
    }
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  SquareMatrix out{n, std::vector<double>(n * n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt_deg[i] * adjacency(i, j) * inv_sqrt_deg[j];
  return out;
}

KnowledgeGraph::KnowledgeGraph(std::vector<DiseaseEntity> entities, SquareMatrix adjacency)
    : entities_(std::move(entities)), adjacency_(std::move(adjacency)), normalized_(normalize_adjacency(adjacency_)) {
  if (adjacency_.n != entities_.size()) throw DimensionError("knowledge graph: adjacency does not match entity count");
}

std::optional<std::size_t> KnowledgeGraph::find(std::string_view name) const {
  for (const auto& e : entities_)
    if (e.name == name) return e.index;
  return std::nullopt;
}

ad::Tensor KnowledgeGraph::normalized_tensor() const {
  return ad::Tensor::from({normalized_.n, normalized_.n}, normalized_.values);
}

std::string KnowledgeGraph::adjacency_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < adjacency_.n; ++i) {
    for (std::size_t j = 0; j < adjacency_.n; ++j) os << (j ? " " : "") << static_cast<int>(adjacency_(i, j));
    os << '\n';
  }
  return os.str();
}

KnowledgeGraph build_chexpert_graph() {
  auto entities = default_entities();
  auto adjacency = region_adjacency(entities);
  return KnowledgeGraph(std::move(entities), std::move(adjacency));
}

namespace {

// Splits a line into words, honoring double quotes and mapping '_' to ' '
// in unquoted words.
std::vector<std::string> split_words(std::string_view line, std::size_t line_no) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::string word;
    if (line[i] == '"') {
      const std::size_t close = line.find('"', i + 1);
      if (close == std::string_view::npos) {
        throw FormatError("graph override line " + std::to_string(line_no) + ": unterminated quote");
      }
      word = std::string(line.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      for (; i < line.size() && line[i] != ' ' && line[i] != '\t'; ++i) word += line[i] == '_' ? ' ' : line[i];
    }
    words.push_back(std::move(word));
  }
  return words;
}

}  // namespace

KnowledgeGraph parse_graph_override(std::string_view text) {
  auto entities = default_entities();
  auto lookup = [&](const std::string& name, std::size_t line_no) {
    for (const auto& e : entities)
      if (e.name == name) return e.index;
    throw FormatError("graph override line " + std::to_string(line_no) + ": unknown entity '" + name + "'");
  };

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto words = split_words(line, line_no);
    if (words.empty()) continue;
    if (words[0] == "node") {
      if (words.size() != 3) throw FormatError("graph override line " + std::to_string(line_no) + ": expected 'node <name> <region>'");
      const std::size_t idx = lookup(words[1], line_no);
      const auto region = parse_region(words[2]);
      if (!region) throw FormatError("graph override line " + std::to_string(line_no) + ": unknown region '" + words[2] + "'");
      entities[idx].region = *region;
    } else if (words[0] == "edge") {
      if (words.size() != 3) throw FormatError("graph override line " + std::to_string(line_no) + ": expected 'edge <name> <name>'");
      const std::size_t a = lookup(words[1], line_no);
      const std::size_t b = lookup(words[2], line_no);
      if (a == b) throw FormatError("graph override line " + std::to_string(line_no) + ": self-loops are implicit");
      if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
        throw FormatError("graph override line " + std::to_string(line_no) + ": duplicate edge '" + words[1] + "' - '" +
                          words[2] + "'");
      }
      edges.emplace_back(a, b);
    } else {
      throw FormatError("graph override line " + std::to_string(line_no) + ": unknown directive '" + words[0] + "'");
    }
  }

  SquareMatrix adjacency;
  if (edges.empty()) {
    adjacency = region_adjacency(entities);
  } else {
    adjacency = SquareMatrix{kNumEntities, std::vector<double>(kNumEntities * kNumEntities, 0.0)};
    for (std::size_t i = 0; i < kNumEntities; ++i) adjacency(i, i) = 1.0;
    for (auto [a, b] : edges) adjacency(a, b) = adjacency(b, a) = 1.0;
  }
  return KnowledgeGraph(std::move(entities), std::move(adjacency));
}

KnowledgeGraph load_graph_override(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph override file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_graph_override(ss.str());
}

}  // namespace kgr::graph
