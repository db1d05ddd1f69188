// SPDX-License-Identifier: Apache-2.0
//
// The full report model: patch encoder, knowledge-graph distillation,
// alignment and fusion, then the prompted decoder.
#pragma once

#include <atomic>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kgr/config.hpp"
#include "kgr/encoder.hpp"
#include "kgr/fusion.hpp"
#include "kgr/generator.hpp"
#include "kgr/kgraph.hpp"
#include "kgr/tokenizer.hpp"

namespace kgr {

/// Vocabulary over the given reports, the disease names and the instruction.
Tokenizer build_tokenizer(std::span<const std::string> reports, const std::string& instruction);

/// The graph named by cfg.graph_file, or the default one.
graph::KnowledgeGraph graph_for(const TrainConfig& cfg);

struct ForwardTrace {
  ad::Tensor regional;  // Z_v
  ad::Tensor disease;   // Z_g, undefined when fusion is kNone
  ad::Tensor aligned;   // Z~_g, likewise
  ad::Tensor fused;     // Z_f
};

class ReportModel {
 public:
  /// Components that the configured fusion strategy does not read are
  /// not created. Each component initializes from its own labeled RNG
  /// substream, so shared components start identical across strategies.
  static ReportModel create(const TrainConfig& cfg, Tokenizer tokenizer, graph::KnowledgeGraph graph);

  const TrainConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const graph::KnowledgeGraph& graph() const { return graph_; }
  const generator::ToyDecoder& decoder() const { return decoder_; }

  /// Z_f for an S x patch_dim image.
  ad::Tensor fused_features(const ad::Tensor& image, ForwardTrace* trace = nullptr) const;
  generator::PromptSequence prompt(const ad::Tensor& image) const;

  /// Report-generation loss; `targets` should end with EOS.
  ad::Tensor loss(const ad::Tensor& image, std::span<const TokenId> targets) const;

  std::vector<generator::Hypothesis> generate(const ad::Tensor& image) const;

  /// Every trainable leaf with a stable dotted name, in a fixed order.
  ParameterList parameters() const;

  /// gcn_layer invocations since creation.
  std::size_t gcn_calls() const { return gcn_calls_->load(); }

  /// Image tensor for a flat row-major patch array.
  ad::Tensor image_tensor(std::span<const double> patches) const;
  std::vector<TokenId> target_ids(const std::string& report) const;

 private:
  TrainConfig cfg_;
  Tokenizer tokenizer_;
  graph::KnowledgeGraph graph_;
  ad::Tensor a_norm_;
  std::vector<TokenId> instruction_ids_;
  std::vector<std::vector<TokenId>> entity_name_ids_;

  encoder::VisualEncoder visual_;
  MhaBlock node_mha_;
  std::vector<encoder::GcnLayer> gcn_;
  MhaBlock align_mha_;
  fusion::GateFusion gate_;
  fusion::MoeFusion moe_;
  generator::ToyDecoder decoder_;

  std::shared_ptr<std::atomic<std::size_t>> gcn_calls_ = std::make_shared<std::atomic<std::size_t>>(0);

  ReportModel(TrainConfig cfg, Tokenizer tokenizer, graph::KnowledgeGraph graph);
};

}  // namespace kgr
