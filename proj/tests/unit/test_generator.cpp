// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "kgr/error.hpp"
#include "kgr/generator.hpp"
#include "kgr/gradcheck.hpp"
#include "oracle.hpp"

using kgr::TokenId;
using kgr::Tokenizer;
using kgr::ad::Tensor;
using oracle::Mat;
namespace ad = kgr::ad;
namespace gen = kgr::generator;

namespace {

struct Tiny {
  gen::ToyDecoder decoder;
  gen::PromptSequence prompt;
};

Tiny tiny(std::uint64_t seed, std::size_t vocab = 12, std::size_t d = 8, std::size_t context = 24) {
  kgr::Rng rng(seed);
  gen::DecoderConfig dc;
  dc.vocab = vocab;
  dc.d_model = d;
  dc.layers = 2;
  dc.heads = 2;
  dc.context = context;
  Tiny t{gen::ToyDecoder::create(dc, rng), {}};
  const std::vector<TokenId> instr = {8, 9, 10};
  t.prompt = gen::assemble_prompt(oracle::tensor(oracle::random(3, d, rng)), instr, t.decoder.embedding());
  return t;
}

// Sum of log p(token | prompt, earlier tokens) from one full forward pass.
double recomputed_log_prob(const Tiny& t, const std::vector<TokenId>& tokens) {
  const Tensor logits = t.decoder.forward(t.prompt, std::span<const TokenId>(tokens).first(tokens.size() - 1));
  const Mat m = oracle::of(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t row = t.prompt.length() - 1 + i;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m.c; ++j) mx = std::max(mx, m(row, j));
    double z = 0.0;
    for (std::size_t j = 0; j < m.c; ++j) z += std::exp(m(row, j) - mx);
    total += m(row, static_cast<std::size_t>(tokens[i])) - mx - std::log(z);
  }
  return total;
}

// Fixed next-token table over a 3-token vocabulary, keyed by prefix.
gen::NextTokenScorer table_scorer(const std::map<std::vector<TokenId>, std::vector<double>>& logits) {
  return [logits](std::span<const TokenId> prefix) {
    return gen::log_softmax(logits.at(std::vector<TokenId>(prefix.begin(), prefix.end())));
  };
}

std::map<std::vector<TokenId>, std::vector<double>> random_table(kgr::Rng& rng) {
  std::map<std::vector<TokenId>, std::vector<double>> t;
  auto row = [&] { return std::vector<double>{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}; };
  t[{}] = row();
  for (TokenId a = 0; a < 3; ++a) t[{a}] = row();
  return t;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("tokenizer basics") {
    const std::vector<std::string> corpus = {"No acute cardiopulmonary process.", "There is mild edema."};
    const Tokenizer tok = Tokenizer::build(corpus);
    CHECK(tok.encode("").empty());
    CHECK(tok.decode(tok.encode("no acute cardiopulmonary process .")) == "no acute cardiopulmonary process .");
    CHECK(tok.decode(tok.encode("NO acute  Cardiopulmonary process.")) ==
          Tokenizer::normalize("no acute cardiopulmonary process ."));
    std::size_t unknown = 0;
    const auto ids = tok.encode("there is severe edema and effusion", &unknown);
    CHECK(unknown == 3);
    CHECK(std::count(ids.begin(), ids.end(), Tokenizer::kUnk) == 3);
    for (const std::string& w : Tokenizer::split("<s> [INST] </s> <feats>")) {
      CHECK_FALSE(tok.id_of(w) == Tokenizer::kBos);
      CHECK_FALSE(tok.id_of(w) == Tokenizer::kInst);
      CHECK_FALSE(tok.id_of(w) == Tokenizer::kFeats);
    }
    const Tokenizer again = Tokenizer::from_vocabulary(tok.vocabulary());
    CHECK(again.encode("there is mild edema .") == tok.encode("there is mild edema ."));
    CHECK_THROWS_AS(Tokenizer::from_vocabulary({"a", "b"}), kgr::FormatError);
  }

  TEST_CASE("default instruction text") {
    CHECK(gen::kDefaultInstruction ==
          "Generate a comprehensive and detailed diagnosis report for this radiology image.");
  }

  TEST_CASE("prompt layout") {
    kgr::Rng rng(1);
    const Tensor table = oracle::tensor(oracle::random(20, 8, rng));
    const std::vector<TokenId> instr = {8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18};
    const Mat fused = oracle::random(16, 8, rng);
    const gen::PromptSequence p = gen::assemble_prompt(oracle::tensor(fused), instr, table);
    CHECK(p.length() == 32);
    CHECK(p.embeddings.shape() == kgr::ad::Shape{32, 8});
    CHECK(p.token_ids[0] == Tokenizer::kBos);
    CHECK(p.token_ids[1] == Tokenizer::kInst);
    CHECK(p.token_ids[12] == 18);
    CHECK(p.token_ids[13] == Tokenizer::kFeats);
    CHECK(p.token_ids[30] == Tokenizer::kFeatsEnd);
    CHECK(p.token_ids[31] == Tokenizer::kInstEnd);
    REQUIRE(p.feature_slots.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(p.feature_slots[i] == 14 + i);
      CHECK(p.token_ids[14 + i] == -1);
      for (std::size_t j = 0; j < 8; ++j) CHECK(p.embeddings.at(14 + i, j) == fused(i, j));
    }
    for (std::size_t j = 0; j < 8; ++j) CHECK(p.embeddings.at(2, j) == table.at(8, j));
    CHECK(std::all_of(p.loss_mask.begin(), p.loss_mask.end(), [](auto m) { return m == 0; }));

    CHECK_THROWS_AS(gen::assemble_prompt(Tensor::zeros({0, 8}), instr, table), kgr::InvalidArgument);
    CHECK_THROWS_AS(gen::assemble_prompt(Tensor::zeros({4, 7}), instr, table), kgr::DimensionError);
  }

  TEST_CASE("decoder logits shape and context limit") {
    const Tiny t = tiny(2);
    const std::vector<TokenId> targets = {3, 4, 5};
    CHECK(t.decoder.forward(t.prompt, targets).shape() == kgr::ad::Shape{t.prompt.length() + 3, 12});
    const std::vector<TokenId> too_long(24, 4);
    CHECK_THROWS_AS(t.decoder.forward(t.prompt, too_long), kgr::InvalidArgument);
  }

  TEST_CASE("decoder is causal") {
    const Tiny t = tiny(3);
    kgr::Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<TokenId> targets(6);
      for (auto& x : targets) x = static_cast<TokenId>(rng.below(12));
      const std::size_t j = rng.below(targets.size());
      std::vector<TokenId> perturbed = targets;
      perturbed[j] = (perturbed[j] + 1 + static_cast<TokenId>(rng.below(11))) % 12;
      const Mat a = oracle::of(t.decoder.forward(t.prompt, targets));
      const Mat b = oracle::of(t.decoder.forward(t.prompt, perturbed));
      const std::size_t pos = t.prompt.length() + j;
      for (std::size_t r = 0; r < pos; ++r)
        for (std::size_t c = 0; c < a.c; ++c) CHECK(a(r, c) == b(r, c));
      double moved = 0.0;
      for (std::size_t c = 0; c < a.c; ++c) moved = std::max(moved, std::abs(a(pos, c) - b(pos, c)));
      CHECK(moved > 0.0);
    }
  }

  TEST_CASE("report targets score only report positions") {
    const std::vector<TokenId> targets = {9, 10, Tokenizer::kEos};
    const gen::ReportTargets rt = gen::report_targets(5, targets);
    CHECK(rt.ids.size() == 7);
    CHECK(rt.mask == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1});
    CHECK(rt.ids[4] == 9);
    CHECK(rt.ids[6] == Tokenizer::kEos);
    CHECK_THROWS_AS(gen::report_targets(5, {}), kgr::InvalidArgument);
  }

  TEST_CASE("report loss") {
    Tiny t = tiny(4);
    const std::vector<TokenId> targets = {9, 11, 4, Tokenizer::kEos};
    const std::span<const TokenId> inputs = std::span<const TokenId>(targets).first(3);
    const gen::ReportTargets rt = gen::report_targets(t.prompt.length(), targets);

    const Mat logits = oracle::of(t.decoder.forward(t.prompt, inputs));
    const Mat p = oracle::softmax_rows(logits);
    double expect = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i)
      expect -= std::log(p(t.prompt.length() - 1 + i, static_cast<std::size_t>(targets[i])));
    const Tensor lt = t.decoder.forward(t.prompt, inputs);
    CHECK(std::abs(gen::report_loss(lt, rt).item() - expect / 4.0) < 1e-9);
    CHECK(std::abs(gen::report_loss(lt, rt, ad::Reduction::kSum).item() - expect) < 1e-9);

    // A zero embedding table makes every logit zero.
    Tensor table = t.decoder.embedding();
    for (double& v : table.mutable_values()) v = 0.0;
    CHECK(std::abs(gen::report_loss(t.decoder.forward(t.prompt, inputs), rt).item() - std::log(12.0)) < 1e-12);
  }

  TEST_CASE("decoder gradient check") {
    Tiny t = tiny(5, 16, 16, 32);
    kgr::ParameterList params;
    t.decoder.collect("decoder", params);
    std::vector<Tensor> in;
    for (auto& p : params) in.push_back(p.tensor);
    const std::vector<TokenId> targets = {9, 11, 4, Tokenizer::kEos};
    const gen::ReportTargets rt = gen::report_targets(t.prompt.length(), targets);
    auto f = [&] { return gen::report_loss(t.decoder.forward(t.prompt, std::span(targets).first(3)), rt); };
    ad::GradCheckOptions opts;
    opts.eps = 2e-3;
    opts.five_point = true;
    CHECK(ad::grad_check(f, in, opts).max_rel_error < 1e-4);
  }

  TEST_CASE("cached extension matches the full pass") {
    const Tiny t = tiny(6);
    const std::vector<TokenId> tokens = {4, 9, 3};
    const Mat full = oracle::of(t.decoder.hidden(
        ad::concat(t.prompt.embeddings, ad::gather_rows(t.decoder.embedding(), tokens), 0)));
    gen::ToyDecoder::Cache cache;
    Mat stepped = oracle::of(t.decoder.extend(cache, t.prompt.embeddings));
    for (TokenId id : tokens) {
      const std::vector<TokenId> one = {id};
      const Mat row = oracle::of(t.decoder.extend(cache, ad::gather_rows(t.decoder.embedding(), one)));
      stepped.v.insert(stepped.v.end(), row.v.begin(), row.v.end());
      ++stepped.r;
    }
    CHECK(cache.length == t.prompt.length() + 3);
    CHECK(oracle::max_abs_diff(full, stepped) < 1e-12);
    CHECK_THROWS_AS(t.decoder.extend(cache, ad::gather_rows(t.decoder.embedding(), tokens)), kgr::InvalidArgument);
  }

  TEST_CASE("beam search on a three-token table matches enumeration") {
    kgr::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const auto table = random_table(rng);
      gen::BeamConfig bc;
      bc.width = 3;
      bc.max_len = 2;
      bc.eos = 99;  // never emitted: every hypothesis runs to max_len
      const auto beams = gen::beam_search(table_scorer(table), bc);

      std::vector<std::pair<double, std::vector<TokenId>>> all;
      for (TokenId a = 0; a < 3; ++a)
        for (TokenId b = 0; b < 3; ++b) {
          const double s = gen::log_softmax(table.at({}))[a] + gen::log_softmax(table.at({a}))[b];
          all.push_back({s, {a, b}});
        }
      CHECK(all.size() == 9);
      std::sort(all.begin(), all.end(), [](auto& x, auto& y) { return x.first > y.first; });
      REQUIRE(beams.size() == 3);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(beams[i].tokens == all[i].second);
        CHECK(std::abs(beams[i].score - all[i].first) < 1e-12);
        CHECK_FALSE(beams[i].terminated);
      }
    }
  }

  TEST_CASE("beam search retires finished hypotheses") {
    kgr::Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const auto table = random_table(rng);
      gen::BeamConfig bc;
      bc.width = 3;
      bc.max_len = 2;
      bc.eos = 2;
      const auto beams = gen::beam_search(table_scorer(table), bc);
      // Complete outputs: [2], or two tokens whose first is not EOS.
      double best = gen::log_softmax(table.at({}))[2];
      std::vector<TokenId> best_tokens = {2};
      for (TokenId a = 0; a < 2; ++a)
        for (TokenId b = 0; b < 3; ++b) {
          const double s = gen::log_softmax(table.at({}))[a] + gen::log_softmax(table.at({a}))[b];
          if (s > best) {
            best = s;
            best_tokens = {a, b};
          }
        }
      REQUIRE_FALSE(beams.empty());
      CHECK(beams.front().tokens == best_tokens);
      for (std::size_t i = 1; i < beams.size(); ++i) CHECK(beams[i - 1].score >= beams[i].score);
      for (const auto& h : beams) CHECK(h.terminated == (h.tokens.back() == 2));
    }
  }

  TEST_CASE("beam ties break toward the smaller sequence") {
    const std::map<std::vector<TokenId>, std::vector<double>> table = {
        {{}, {0, 0, 0}}, {{0}, {0, 0, 0}}, {{1}, {0, 0, 0}}, {{2}, {0, 0, 0}}};
    gen::BeamConfig bc;
    bc.width = 2;
    bc.max_len = 2;
    bc.eos = 99;
    const auto beams = gen::beam_search(table_scorer(table), bc);
    REQUIRE(beams.size() == 2);
    CHECK(beams[0].tokens == std::vector<TokenId>{0, 0});
    CHECK(beams[1].tokens == std::vector<TokenId>{0, 1});
  }

  TEST_CASE("beam config validation and defaults") {
    CHECK(gen::BeamConfig{}.width == 3);
    CHECK_FALSE(gen::BeamConfig{}.length_normalize);
    const auto scorer = [](std::span<const TokenId>) { return std::vector<double>{0.0}; };
    gen::BeamConfig bc;
    bc.width = 0;
    CHECK_THROWS_AS(gen::beam_search(scorer, bc), kgr::InvalidArgument);
    bc.width = 1;
    bc.max_len = 0;
    CHECK_THROWS_AS(gen::beam_search(scorer, bc), kgr::InvalidArgument);
  }

  TEST_CASE("width one is greedy decoding") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const Tiny t = tiny(seed);
      gen::BeamConfig bc;
      bc.width = 1;
      bc.max_len = 8;
      const auto beams = gen::beam_search(gen::decoder_scorer(t.decoder, t.prompt), bc);
      REQUIRE(beams.size() == 1);

      std::vector<TokenId> greedy;
      for (std::size_t step = 0; step < bc.max_len; ++step) {
        const Mat logits = oracle::of(t.decoder.forward(t.prompt, greedy));
        const std::size_t row = logits.r - 1;
        std::size_t arg = 0;
        for (std::size_t j = 1; j < logits.c; ++j)
          if (logits(row, j) > logits(row, arg)) arg = j;
        greedy.push_back(static_cast<TokenId>(arg));
        if (greedy.back() == Tokenizer::kEos) break;
      }
      CHECK(beams[0].tokens == greedy);
    }
  }

  TEST_CASE("beam scores match a fresh forward pass") {
    for (std::uint64_t seed : {21u, 22u}) {
      const Tiny t = tiny(seed);
      gen::BeamConfig bc;
      bc.max_len = 6;
      const auto beams = gen::beam_search(gen::decoder_scorer(t.decoder, t.prompt), bc);
      REQUIRE(beams.size() >= 3);
      for (std::size_t i = 0; i < beams.size(); ++i) {
        CHECK(std::abs(beams[i].score - recomputed_log_prob(t, beams[i].tokens)) < 1e-6);
        if (i > 0) CHECK(beams[i - 1].score >= beams[i].score);
      }
      const auto again = gen::beam_search(gen::decoder_scorer(t.decoder, t.prompt), bc);
      for (std::size_t i = 0; i < beams.size(); ++i) {
        CHECK(again[i].tokens == beams[i].tokens);
        CHECK(again[i].score == beams[i].score);
      }
    }
  }

  TEST_CASE("log_softmax") {
    const auto lp = gen::log_softmax(std::vector<double>{1, 2, 3});
    double z = 0.0;
    for (double v : lp) z += std::exp(v);
    CHECK(std::abs(z - 1.0) < 1e-15);
    CHECK(std::abs(lp[2] - lp[1] - 1.0) < 1e-15);
  }
}
