// SPDX-License-Identifier: Apache-2.0
#include "kgr/model.hpp"

#include "kgr/error.hpp"

namespace kgr {

Tokenizer build_tokenizer(std::span<const std::string> reports, const std::string& instruction) {
  std::vector<std::string> corpus(reports.begin(), reports.end());
  for (std::string_view name : graph::chexpert_labels()) corpus.emplace_back(name);
  corpus.push_back(instruction);
  return Tokenizer::build(corpus);
}

graph::KnowledgeGraph graph_for(const TrainConfig& cfg) {
  if (cfg.graph_file.empty()) return graph::build_chexpert_graph();
  return graph::load_graph_override(cfg.graph_file);
}

ReportModel::ReportModel(TrainConfig cfg, Tokenizer tokenizer, graph::KnowledgeGraph graph)
    : cfg_(std::move(cfg)), tokenizer_(std::move(tokenizer)), graph_(std::move(graph)) {}

ReportModel ReportModel::create(const TrainConfig& cfg, Tokenizer tokenizer, graph::KnowledgeGraph graph) {
  cfg.validate();
  ReportModel m(cfg, std::move(tokenizer), std::move(graph));
  const std::size_t d = cfg.d_model;
  const Rng root = Rng(cfg.seed).derive("init");

  std::size_t unknown = 0;
  m.instruction_ids_ = m.tokenizer_.encode(cfg.instruction, &unknown);
  if (unknown != 0) throw ConfigError("instruction contains words outside the vocabulary");
  const std::size_t prompt_len = m.instruction_ids_.size() + cfg.patches + generator::kPromptSpecials;
  if (prompt_len + cfg.max_gen_len > cfg.context + 1) {
    throw ConfigError("context " + std::to_string(cfg.context) + " cannot hold a prompt of " +
                      std::to_string(prompt_len) + " plus " + std::to_string(cfg.max_gen_len) + " generated tokens");
  }
  for (const auto& e : m.graph_.entities()) {
    m.entity_name_ids_.push_back(m.tokenizer_.encode(e.name, &unknown));
    if (unknown != 0) throw ConfigError("entity name '" + e.name + "' contains words outside the vocabulary");
  }
  m.a_norm_ = m.graph_.normalized_tensor();

  Rng visual_rng = root.derive("visual");
  m.visual_ = encoder::VisualEncoder::create(cfg.patches, cfg.patch_dim, d, visual_rng);

  const bool needs_disease = cfg.fusion != fusion::Strategy::kNone;
  if (needs_disease) {
    Rng node_rng = root.derive("node_mha");
    m.node_mha_ = MhaBlock::create(d, d, d, cfg.encoder_heads, node_rng);
    if (cfg.use_gcn) {
      for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
        Rng layer_rng = root.derive("gcn" + std::to_string(l));
        m.gcn_.push_back(encoder::GcnLayer::create(d, layer_rng));
      }
    }
    Rng align_rng = root.derive("align_mha");
    m.align_mha_ = MhaBlock::create(d, d, d, cfg.encoder_heads, align_rng);
  }
  if (cfg.fusion == fusion::Strategy::kElement) {
    Rng gate_rng = root.derive("gate");
    m.gate_ = fusion::GateFusion::create(d, gate_rng);
  }
  if (cfg.fusion == fusion::Strategy::kModality) {
    Rng moe_rng = root.derive("moe");
    m.moe_ = fusion::MoeFusion::create(d, moe_rng);
  }

  generator::DecoderConfig dc;
  dc.vocab = m.tokenizer_.size();
  dc.d_model = d;
  dc.layers = cfg.decoder_layers;
  dc.heads = cfg.decoder_heads;
  dc.context = cfg.context;
  Rng decoder_rng = root.derive("decoder");
  m.decoder_ = generator::ToyDecoder::create(dc, decoder_rng);

  // Parameters live on the float32 grid so checkpoints reload exactly.
  for (NamedParam& p : m.parameters()) {
    for (double& v : p.tensor.mutable_values()) v = static_cast<double>(static_cast<float>(v));
  }
  return m;
}

ad::Tensor ReportModel::fused_features(const ad::Tensor& image, ForwardTrace* trace) const {
  const ad::Tensor regional = visual_.forward(image);
  if (trace) trace->regional = regional;
  if (cfg_.fusion == fusion::Strategy::kNone) {
    if (trace) trace->fused = regional;
    return regional;
  }

  const ad::Tensor entities = encoder::entity_embeddings(decoder_.embedding(), entity_name_ids_);
  encoder::DistillOptions opts;
  opts.use_gcn = cfg_.use_gcn;
  opts.allow_layer_count_override = cfg_.allow_gcn_layer_override;
  std::size_t calls = 0;
  const ad::Tensor disease = encoder::distill(regional, entities, a_norm_, node_mha_, gcn_, opts, &calls);
  gcn_calls_->fetch_add(calls);
  const ad::Tensor aligned = fusion::align(regional, disease, align_mha_);

  ad::Tensor fused;
  switch (cfg_.fusion) {
    case fusion::Strategy::kElement:
      fused = fusion::element_fuse(regional, aligned, gate_);
      break;
    case fusion::Strategy::kModality:
      fused = fusion::modality_fuse(regional, aligned, moe_);
      break;
    case fusion::Strategy::kAverage:
      fused = fusion::average_fuse(regional, aligned);
      break;
    case fusion::Strategy::kDisease:
      fused = aligned;
      break;
    case fusion::Strategy::kNone:
      fused = regional;
      break;
  }
  if (trace) {
    trace->disease = disease;
    trace->aligned = aligned;
    trace->fused = fused;
  }
  return fused;
}

generator::PromptSequence ReportModel::prompt(const ad::Tensor& image) const {
  return generator::assemble_prompt(fused_features(image), instruction_ids_, decoder_.embedding());
}

ad::Tensor ReportModel::loss(const ad::Tensor& image, std::span<const TokenId> targets) const {
  if (targets.empty()) throw InvalidArgument("loss: no target tokens");
  const generator::PromptSequence p = prompt(image);
  const ad::Tensor logits = decoder_.forward(p, targets.first(targets.size() - 1));
  return generator::report_loss(logits, generator::report_targets(p.length(), targets), cfg_.loss_reduction);
}

std::vector<generator::Hypothesis> ReportModel::generate(const ad::Tensor& image) const {
  generator::PromptSequence p;
  {
    ad::NoGradScope no_grad;
    p = prompt(image);
  }
  generator::BeamConfig bc;
  bc.width = cfg_.beam_width;
  bc.max_len = cfg_.max_gen_len;
  bc.length_normalize = cfg_.length_normalize;
  return generator::beam_search(generator::decoder_scorer(decoder_, p), bc);
}

ParameterList ReportModel::parameters() const {
  ParameterList out;
  visual_.collect("visual", out);
  if (cfg_.fusion != fusion::Strategy::kNone) {
    node_mha_.collect("node_mha", out);
    for (std::size_t l = 0; l < gcn_.size(); ++l) gcn_[l].collect("gcn" + std::to_string(l), out);
    align_mha_.collect("align_mha", out);
  }
  if (cfg_.fusion == fusion::Strategy::kElement) gate_.collect("gate", out);
  if (cfg_.fusion == fusion::Strategy::kModality) moe_.collect("moe", out);
  decoder_.collect("decoder", out);
  return out;
}

ad::Tensor ReportModel::image_tensor(std::span<const double> patches) const {
  if (patches.size() != cfg_.patches * cfg_.patch_dim) {
    throw DimensionError("image has " + std::to_string(patches.size()) + " values, expected " +
                         std::to_string(cfg_.patches) + " x " + std::to_string(cfg_.patch_dim));
  }
  return ad::Tensor::from({cfg_.patches, cfg_.patch_dim}, std::vector<double>(patches.begin(), patches.end()));
}

std::vector<TokenId> ReportModel::target_ids(const std::string& report) const {
  std::vector<TokenId> ids = tokenizer_.encode(report);
  ids.push_back(Tokenizer::kEos);
  return ids;
}

}  // namespace kgr
