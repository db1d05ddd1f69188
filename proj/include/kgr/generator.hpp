// SPDX-License-Identifier: Apache-2.0
//
// Prompted causal decoder. The prompt layout is
//
//   <s> [INST] instruction... <feats> Z_f rows... </feats> [/INST]
//
// and report tokens follow it under teacher forcing.
#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "kgr/layers.hpp"
#include "kgr/ops.hpp"
#include "kgr/tokenizer.hpp"

namespace kgr::generator {

inline constexpr std::string_view kDefaultInstruction =
    "Generate a comprehensive and detailed diagnosis report for this radiology image.";

/// Tokens in the prompt besides the instruction and feature rows.
inline constexpr std::size_t kPromptSpecials = 5;

struct PromptSequence {
  ad::Tensor embeddings;                 // length x d
  std::vector<TokenId> token_ids;        // -1 at feature slots
  std::vector<std::size_t> feature_slots;
  std::vector<std::uint8_t> loss_mask;   // all zero: prompt positions are never scored

  std::size_t length() const { return token_ids.size(); }
};

PromptSequence assemble_prompt(const ad::Tensor& fused, std::span<const TokenId> instruction,
                               const ad::Tensor& embedding_table);

struct DecoderConfig {
  std::size_t vocab = 0;
  std::size_t d_model = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t context = 128;
  std::size_t mlp_ratio = 4;
};

struct DecoderBlock {
  LayerNormParams ln_attn;
  MhaBlock attn;
  LayerNormParams ln_mlp;
  Linear mlp_in;
  Linear mlp_out;
};

/// Pre-norm causal transformer with learned positions. The token embedding
/// table doubles as the output projection.
class ToyDecoder {
 public:
  static ToyDecoder create(const DecoderConfig& config, Rng& rng);

  const DecoderConfig& config() const { return config_; }
  const ad::Tensor& embedding() const { return embedding_; }

  /// Final hidden states for an input sequence of embeddings.
  ad::Tensor hidden(const ad::Tensor& inputs) const;
  /// Tied projection of hidden states onto the vocabulary.
  ad::Tensor project(const ad::Tensor& hidden_states) const;

  /// Logits for prompt ++ embed(targets), one row per position.
  ad::Tensor forward(const PromptSequence& prompt, std::span<const TokenId> targets) const;

  /// Keys and values of every position fed so far, one pair per block.
  struct Cache {
    std::vector<ad::Tensor> keys;
    std::vector<ad::Tensor> values;
    std::size_t length = 0;
  };

  /// Feeds `rows` (embeddings) after the cached positions and returns
  /// their final hidden states. Matches hidden() on the whole sequence up
  /// to rounding. Several rows at once are only accepted into an empty
  /// cache. Never records a tape.
  ad::Tensor extend(Cache& cache, const ad::Tensor& rows) const;

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  ad::Tensor sequence(const PromptSequence& prompt, std::span<const TokenId> targets) const;

  DecoderConfig config_;
  ad::Tensor embedding_;  // vocab x d
  ad::Tensor positions_;  // context x d
  std::vector<DecoderBlock> blocks_;
  LayerNormParams ln_final_;
};

/// Targets and mask for logits over prompt ++ targets[0 .. n-1): the row
/// before each target token predicts it; nothing else is scored.
struct ReportTargets {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;
};
ReportTargets report_targets(std::size_t prompt_length, std::span<const TokenId> targets);

ad::Tensor report_loss(const ad::Tensor& logits, const ReportTargets& targets,
                       ad::Reduction reduction = ad::Reduction::kMean);

struct BeamConfig {
  std::size_t width = 3;
  std::size_t max_len = 64;
  bool length_normalize = false;
  TokenId eos = Tokenizer::kEos;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // includes the final EOS when terminated
  std::vector<double> step_log_probs;
  double score = 0.0;
  bool terminated = false;
};

/// Log-probabilities over the vocabulary for the token following `prefix`.
using NextTokenScorer = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

/// Beam search over summed log-probabilities. Each step keeps the best
/// `width` extensions of the live beams; extensions ending in EOS retire
/// to the result pool. Beams still live at max_len are returned with
/// terminated == false. Ties break toward the lexicographically smaller
/// token sequence. Results are sorted best first.
std::vector<Hypothesis> beam_search(const NextTokenScorer& scorer, const BeamConfig& config);

/// Scorer backed by the decoder conditioned on `prompt`; runs without a
/// tape and reuses cached keys and values across calls.
NextTokenScorer decoder_scorer(const ToyDecoder& decoder, const PromptSequence& prompt);

/// Log-softmax of a row of logits.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace kgr::generator
