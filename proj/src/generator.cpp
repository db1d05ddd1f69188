// SPDX-License-Identifier: Apache-2.0
#include "kgr/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "kgr/error.hpp"

namespace kgr::generator {

PromptSequence assemble_prompt(const ad::Tensor& fused, std::span<const TokenId> instruction,
                               const ad::Tensor& embedding_table) {
  if (fused.rank() != 2 || fused.dim(0) == 0) {
    throw InvalidArgument("assemble_prompt: fused features are empty");
  }
  if (fused.dim(1) != embedding_table.dim(1)) {
    throw DimensionError("assemble_prompt: feature width " + std::to_string(fused.dim(1)) +
                         " does not match embedding width " + std::to_string(embedding_table.dim(1)));
  }
  std::vector<TokenId> head = {Tokenizer::kBos, Tokenizer::kInst};
  head.insert(head.end(), instruction.begin(), instruction.end());
  head.push_back(Tokenizer::kFeats);
  const std::vector<TokenId> tail = {Tokenizer::kFeatsEnd, Tokenizer::kInstEnd};

  PromptSequence p;
  const ad::Tensor parts[] = {ad::gather_rows(embedding_table, head), fused, ad::gather_rows(embedding_table, tail)};
  p.embeddings = ad::concat(parts, 0);
  p.token_ids = head;
  for (std::size_t s = 0; s < fused.dim(0); ++s) {
    p.feature_slots.push_back(p.token_ids.size());
    p.token_ids.push_back(-1);
  }
  p.token_ids.insert(p.token_ids.end(), tail.begin(), tail.end());
  p.loss_mask.assign(p.token_ids.size(), 0);
  return p;
}

ToyDecoder ToyDecoder::create(const DecoderConfig& config, Rng& rng) {
  if (config.vocab == 0 || config.d_model == 0 || config.context == 0) {
    throw ConfigError("decoder: vocab, d_model and context must be positive");
  }
  ToyDecoder dec;
  dec.config_ = config;
  const std::size_t d = config.d_model;
  dec.embedding_ = uniform_param({config.vocab, d}, d, rng);
  dec.positions_ = uniform_param({config.context, d}, d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    DecoderBlock b;
    b.ln_attn = LayerNormParams::create(d);
    b.attn = MhaBlock::create(d, d, d, config.heads, rng);
    b.ln_mlp = LayerNormParams::create(d);
    b.mlp_in = Linear::create(d, config.mlp_ratio * d, true, rng);
    b.mlp_out = Linear::create(config.mlp_ratio * d, d, true, rng);
    dec.blocks_.push_back(std::move(b));
  }
  dec.ln_final_ = LayerNormParams::create(d);
  return dec;
}

ad::Tensor ToyDecoder::hidden(const ad::Tensor& inputs) const {
  const std::size_t length = inputs.dim(0);
  if (length > config_.context) {
    throw InvalidArgument("decoder: sequence of " + std::to_string(length) + " exceeds context of " +
                          std::to_string(config_.context));
  }
  ad::Tensor x = ad::add(inputs, ad::slice(positions_, 0, 0, length));
  for (const DecoderBlock& b : blocks_) {
    const ad::Tensor normed = b.ln_attn.forward(x);
    x = ad::add(x, b.attn.forward(normed, normed, true));
    const ad::Tensor mlp = b.mlp_out.forward(ad::gelu(b.mlp_in.forward(b.ln_mlp.forward(x))));
    x = ad::add(x, mlp);
  }
  return ln_final_.forward(x);
}

ad::Tensor ToyDecoder::extend(Cache& cache, const ad::Tensor& rows) const {
  ad::NoGradScope no_grad;
  const std::size_t n = rows.dim(0);
  if (n > 1 && cache.length > 0) throw InvalidArgument("decoder: multi-row extension of a non-empty cache");
  if (cache.length + n > config_.context) {
    throw InvalidArgument("decoder: sequence of " + std::to_string(cache.length + n) + " exceeds context of " +
                          std::to_string(config_.context));
  }
  cache.keys.resize(blocks_.size());
  cache.values.resize(blocks_.size());
  ad::Tensor x = ad::add(rows, ad::slice(positions_, 0, cache.length, cache.length + n));
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const DecoderBlock& b = blocks_[l];
    const ad::Tensor normed = b.ln_attn.forward(x);
    const ad::Tensor k = ad::matmul(normed, b.attn.w_k);
    const ad::Tensor v = ad::matmul(normed, b.attn.w_v);
    cache.keys[l] = cache.keys[l].defined() ? ad::concat(cache.keys[l], k, 0) : k;
    cache.values[l] = cache.values[l].defined() ? ad::concat(cache.values[l], v, 0) : v;
    x = ad::add(x, b.attn.attend(ad::matmul(normed, b.attn.w_q), cache.keys[l], cache.values[l], n > 1));
    x = ad::add(x, b.mlp_out.forward(ad::gelu(b.mlp_in.forward(b.ln_mlp.forward(x)))));
  }
  cache.length += n;
  return ln_final_.forward(x);
}

ad::Tensor ToyDecoder::project(const ad::Tensor& hidden_states) const {
  return ad::matmul(hidden_states, ad::transpose(embedding_));
}

ad::Tensor ToyDecoder::sequence(const PromptSequence& prompt, std::span<const TokenId> targets) const {
  if (targets.empty()) return prompt.embeddings;
  return ad::concat(prompt.embeddings, ad::gather_rows(embedding_, targets), 0);
}

ad::Tensor ToyDecoder::forward(const PromptSequence& prompt, std::span<const TokenId> targets) const {
  return project(hidden(sequence(prompt, targets)));
}

void ToyDecoder::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".embedding", embedding_});
  out.push_back({prefix + ".positions", positions_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    blocks_[l].ln_attn.collect(p + ".ln_attn", out);
    blocks_[l].attn.collect(p + ".attn", out);
    blocks_[l].ln_mlp.collect(p + ".ln_mlp", out);
    blocks_[l].mlp_in.collect(p + ".mlp_in", out);
    blocks_[l].mlp_out.collect(p + ".mlp_out", out);
  }
  ln_final_.collect(prefix + ".ln_final", out);
}

ReportTargets report_targets(std::size_t prompt_length, std::span<const TokenId> targets) {
  if (prompt_length == 0) throw InvalidArgument("report_targets: empty prompt");
  if (targets.empty()) throw InvalidArgument("report_targets: no target tokens");
  // The last target is predicted but never fed back in.
  const std::size_t total = prompt_length + targets.size() - 1;
  ReportTargets rt{std::vector<TokenId>(total, Tokenizer::kPad), std::vector<std::uint8_t>(total, 0)};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    rt.ids[prompt_length - 1 + i] = targets[i];
    rt.mask[prompt_length - 1 + i] = 1;
  }
  return rt;
}

ad::Tensor report_loss(const ad::Tensor& logits, const ReportTargets& targets, ad::Reduction reduction) {
  return ad::cross_entropy(logits, targets.ids, targets.mask, reduction);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

namespace {

double rank_score(const Hypothesis& h, bool length_normalize) {
  if (!length_normalize || h.tokens.empty()) return h.score;
  return h.score / static_cast<double>(h.tokens.size());
}

bool better(const Hypothesis& a, const Hypothesis& b, bool length_normalize) {
  const double sa = rank_score(a, length_normalize), sb = rank_score(b, length_normalize);
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

}  // namespace

std::vector<Hypothesis> beam_search(const NextTokenScorer& scorer, const BeamConfig& config) {
  if (config.width == 0) throw InvalidArgument("beam_search: width must be at least 1");
  if (config.max_len == 0) throw InvalidArgument("beam_search: max_len must be at least 1");
  const bool norm = config.length_normalize;

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> pool;
  for (std::size_t step = 0; step < config.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : live) {
      const std::vector<double> log_probs = scorer(h.tokens);
      for (std::size_t v = 0; v < log_probs.size(); ++v) {
        Hypothesis c = h;
        c.tokens.push_back(static_cast<TokenId>(v));
        c.step_log_probs.push_back(log_probs[v]);
        c.score += log_probs[v];
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(config.width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [norm](const Hypothesis& a, const Hypothesis& b) { return better(a, b, norm); });
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis& c = candidates[i];
      if (c.tokens.back() == config.eos) {
        c.terminated = true;
        pool.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }
  for (Hypothesis& h : live) pool.push_back(std::move(h));
  std::sort(pool.begin(), pool.end(), [norm](const Hypothesis& a, const Hypothesis& b) { return better(a, b, norm); });
  return pool;
}

NextTokenScorer decoder_scorer(const ToyDecoder& decoder, const PromptSequence& prompt) {
  // Caches are keyed by prefix. Beam search only ever asks for a prefix
  // one token longer than one it asked for before, so each call feeds a
  // single row; caches two or more tokens shorter are dropped.
  struct State {
    std::map<std::vector<TokenId>, std::pair<ToyDecoder::Cache, std::vector<double>>> cache;
  };
  auto state = std::make_shared<State>();
  {
    ToyDecoder::Cache c;
    const ad::Tensor h = decoder.extend(c, prompt.embeddings.detach());
    const ad::Tensor last = ad::slice(h, 0, h.dim(0) - 1, h.dim(0));
    state->cache.emplace(std::vector<TokenId>{}, std::make_pair(std::move(c), log_softmax(decoder.project(last).values())));
  }
  return [&decoder, state](std::span<const TokenId> prefix) {
    ad::NoGradScope no_grad;
    const std::vector<TokenId> key(prefix.begin(), prefix.end());
    if (auto it = state->cache.find(key); it != state->cache.end()) return it->second.second;
    if (prefix.empty()) throw InvalidArgument("decoder scorer: prompt cache missing");
    const std::vector<TokenId> parent(prefix.begin(), prefix.end() - 1);
    auto it = state->cache.find(parent);
    ToyDecoder::Cache c;
    if (it != state->cache.end()) {
      c = it->second.first;
    } else {
      // Prefix was not reached through its parent; rebuild from the prompt.
      c = state->cache.at({}).first;
      for (std::size_t i = 0; i + 1 < prefix.size(); ++i)
        decoder.extend(c, ad::gather_rows(decoder.embedding(), prefix.subspan(i, 1)));
    }
    const ad::Tensor h = decoder.extend(c, ad::gather_rows(decoder.embedding(), prefix.last(1)));
    std::vector<double> log_probs = log_softmax(decoder.project(h).values());
    for (auto e = state->cache.begin(); e != state->cache.end();) {
      if (!e->first.empty() && e->first.size() + 1 < prefix.size()) {
        e = state->cache.erase(e);
      } else {
        ++e;
      }
    }
    state->cache.emplace(key, std::make_pair(std::move(c), log_probs));
    return log_probs;
  };
}

}  // namespace kgr::generator
