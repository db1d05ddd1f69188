// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero when a hard criterion fails. Names on the command line select a
// subset, e.g. `acceptance gradients decoding`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kgr/dataset.hpp"
#include "kgr/generator.hpp"
#include "kgr/harness.hpp"
#include "kgr/metrics.hpp"
#include "model_oracles.hpp"

namespace fs = std::filesystem;
namespace ad = kgr::ad;
namespace enc = kgr::encoder;
namespace fu = kgr::fusion;
namespace gen = kgr::generator;
namespace m = kgr::metrics;
using ad::Tensor;
using kgr::TokenId;
using oracle::Mat;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

// Tracks the worst value of a check against its bound.
struct Worst {
  double value = 0.0;
  void see(double v) { value = std::max(value, std::isnan(v) ? INFINITY : v); }
};

// --- gradients ---------------------------------------------------------

Outcome gradients() {
  const std::clock_t c0 = std::clock();
  const auto suite = kgr::gradient_suite(42);
  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  Outcome o;
  std::string worst_name;
  double worst = 0.0;
  bool composed = false;
  for (const auto& e : suite) {
    if (e.name.find("model") != std::string::npos) composed = true;
    if (!(e.result.max_rel_error < 1e-4)) o.pass = false;
    if (e.result.max_rel_error >= worst) {
      worst = e.result.max_rel_error;
      worst_name = e.name;
    }
  }
  o.pass = o.pass && composed && cpu < 60.0;
  o.detail = std::to_string(suite.size()) + " checks, worst " + fmt(worst) + " (" + worst_name + ") < 1e-4, cpu " +
             fmt(cpu) + " s < 60 s";
  return o;
}

// --- equation oracles ---------------------------------------------------

Outcome equation_oracles() {
  kgr::Rng rng(2024);
  Worst gcn, node, align, element, modality;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + t % 6, d = 4 + 2 * (t % 3);
    const auto layer = oracle::random_gcn(d, rng);
    const Mat a = oracle::random_normalized_graph(n, rng), x = oracle::random(n, d, rng, -2, 2);
    gcn.see(oracle::max_abs_diff(enc::gcn_layer(oracle::tensor(x), oracle::tensor(a), layer),
                                 oracle::gcn_oracle(x, a, layer)));
  }
  for (int t = 0; t < 20; ++t) {
    const std::size_t heads = 1 + t % 2, d = 4, s = 2 + t % 5;
    const kgr::MhaBlock mha = kgr::MhaBlock::create(d, d, d, heads, rng);
    const Mat e = oracle::random(14, d, rng), zv = oracle::random(s, d, rng);
    node.see(oracle::max_abs_diff(enc::node_init(oracle::tensor(e), oracle::tensor(zv), mha),
                                  oracle::mha_oracle(e, zv, mha)));
  }
  for (int t = 0; t < 20; ++t) {
    const std::size_t heads = 1 + t % 2, d = 4, s = 2 + t % 5;
    const kgr::MhaBlock mha = kgr::MhaBlock::create(d, d, d, heads, rng);
    const Mat zv = oracle::random(s, d, rng), zg = oracle::random(14, d, rng);
    align.see(oracle::max_abs_diff(fu::align(oracle::tensor(zv), oracle::tensor(zg), mha),
                                   oracle::mha_oracle(zv, zg, mha)));
  }
  for (int t = 0; t < 20; ++t) {
    const std::size_t s = 2 + t % 5, d = 4;
    const fu::GateFusion gf = fu::GateFusion::create(d, rng);
    const Mat zv = oracle::random(s, d, rng, -2, 2), zg = oracle::random(s, d, rng, -2, 2);
    element.see(oracle::max_abs_diff(fu::element_fuse(oracle::tensor(zv), oracle::tensor(zg), gf),
                                     oracle::element_oracle(zv, zg, gf)));
  }
  for (int t = 0; t < 20; ++t) {
    const std::size_t s = 2 + t % 5, d = 4;
    const fu::MoeFusion mf = oracle::random_moe(d, rng);
    const Mat zv = oracle::random(s, d, rng, -2, 2), zg = oracle::random(s, d, rng, -2, 2);
    modality.see(oracle::max_abs_diff(fu::modality_fuse(oracle::tensor(zv), oracle::tensor(zg), mf),
                                      oracle::modality_oracle(zv, zg, mf)));
  }
  Outcome o;
  o.pass = gcn.value < 1e-9 && node.value < 1e-9 && align.value < 1e-9 && element.value < 1e-9 &&
           modality.value < 1e-9;
  o.detail = "20 instances each, max |diff| gcn_layer " + fmt(gcn.value) + ", node_init " + fmt(node.value) +
             ", align " + fmt(align.value) + ", element_fuse " + fmt(element.value) + ", modality_fuse " +
             fmt(modality.value) + " < 1e-9";
  return o;
}

// --- adjacency normalization -------------------------------------------

Outcome normalization() {
  kgr::Rng rng(77);
  Worst diff;
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_graph(rng);
    const auto got = kgr::graph::normalize_adjacency(a);
    const auto expect = oracle::dense_normalize(a);
    for (std::size_t i = 0; i < expect.size(); ++i) diff.see(std::abs(got.values[i] - expect[i]));
  }
  // Path 0-1-2 with self-loops: degrees 2, 3, 2.
  const kgr::graph::SquareMatrix path{3, {1, 1, 0, 1, 1, 1, 0, 1, 1}};
  const double s6 = 1.0 / std::sqrt(6.0);
  const std::vector<double> hand = {0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5};
  const auto p = kgr::graph::normalize_adjacency(path);
  Worst path_diff;
  for (std::size_t i = 0; i < 9; ++i) path_diff.see(std::abs(p.values[i] - hand[i]));
  Outcome o;
  o.pass = diff.value < 1e-12 && path_diff.value < 1e-12;
  o.detail = "100 random graphs max |diff| " + fmt(diff.value) + " < 1e-12; 3-node path " + fmt(path_diff.value);
  return o;
}

// --- structural invariants ----------------------------------------------

struct TinyDecoder {
  gen::ToyDecoder decoder;
  gen::PromptSequence prompt;
};

TinyDecoder tiny_decoder(std::uint64_t seed, std::size_t vocab = 12) {
  kgr::Rng rng(seed);
  gen::DecoderConfig dc;
  dc.vocab = vocab;
  dc.d_model = 8;
  dc.layers = 2;
  dc.heads = 2;
  dc.context = 24;
  TinyDecoder t{gen::ToyDecoder::create(dc, rng), {}};
  const std::vector<TokenId> instr = {8, 9, 10};
  t.prompt = gen::assemble_prompt(oracle::tensor(oracle::random(3, 8, rng)), instr, t.decoder.embedding());
  return t;
}

double row_sum_error(const std::vector<Tensor>& weights) {
  double worst = 0.0;
  for (const Tensor& w : weights)
    for (std::size_t i = 0; i < w.dim(0); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < w.dim(1); ++j) s += w.at(i, j);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  return worst;
}

Outcome invariants() {
  kgr::Rng rng(5150);
  const auto g = kgr::graph::build_chexpert_graph();
  Mat a(14, 14);
  a.v = g.normalized().values;

  Worst equivariance;
  const auto layer = oracle::random_gcn(8, rng);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> p(14);
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(p);
    const Mat x = oracle::random(14, 8, rng, -2, 2);
    Mat pa(14, 14);
    for (std::size_t i = 0; i < 14; ++i)
      for (std::size_t j = 0; j < 14; ++j) pa(i, j) = a(p[i], p[j]);
    const Mat direct = oracle::permute_rows(oracle::of(enc::gcn_layer(oracle::tensor(x), oracle::tensor(a), layer)), p);
    const Mat permuted = oracle::of(enc::gcn_layer(oracle::tensor(oracle::permute_rows(x, p)), oracle::tensor(pa), layer));
    equivariance.see(oracle::max_abs_diff(direct, permuted));
  }

  Worst rows, router;
  bool gate_open = true;
  const kgr::MhaBlock mha = kgr::MhaBlock::create(16, 16, 16, 4, rng);
  const fu::GateFusion gf = fu::GateFusion::create(16, rng);
  const fu::MoeFusion mf = oracle::random_moe(16, rng);
  for (int t = 0; t < 100; ++t) {
    const Tensor zv = oracle::tensor(oracle::random(16, 16, rng, -3, 3));
    const Tensor e = oracle::tensor(oracle::random(14, 16, rng, -3, 3));
    std::vector<Tensor> att;
    const Tensor nodes = enc::node_init(e, zv, mha, &att);
    rows.see(row_sum_error(att));
    att.clear();
    const Tensor aligned = fu::align(zv, nodes, mha, &att);
    rows.see(row_sum_error(att));
    Tensor gate;
    fu::element_fuse(zv, aligned, gf, &gate);
    for (double v : gate.values()) gate_open = gate_open && v > 0.0 && v < 1.0;
    const Tensor w = fu::route(zv, aligned, mf);
    router.see(std::abs(w.values()[0] + w.values()[1] - 1.0));
  }

  bool causal = true;
  const TinyDecoder td = tiny_decoder(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<TokenId> targets(6);
    for (auto& x : targets) x = static_cast<TokenId>(rng.below(12));
    const std::size_t j = rng.below(targets.size());
    std::vector<TokenId> perturbed = targets;
    perturbed[j] = (perturbed[j] + 1 + static_cast<TokenId>(rng.below(11))) % 12;
    const Mat x = oracle::of(td.decoder.forward(td.prompt, targets));
    const Mat y = oracle::of(td.decoder.forward(td.prompt, perturbed));
    const std::size_t pos = td.prompt.length() + j;
    for (std::size_t r = 0; r < pos; ++r)
      for (std::size_t c = 0; c < x.c; ++c) causal = causal && x(r, c) == y(r, c);
    double moved = 0.0;
    for (std::size_t c = 0; c < x.c; ++c) moved = std::max(moved, std::abs(x(pos, c) - y(pos, c)));
    causal = causal && moved > 0.0;
  }

  Outcome o;
  o.pass = equivariance.value < 1e-10 && rows.value < 1e-12 && gate_open && router.value < 1e-12 && causal;
  o.detail = "gcn permutation " + fmt(equivariance.value) + " < 1e-10 (50); attention rows |sum-1| " +
             fmt(rows.value) + "; gate in (0,1) " + (gate_open ? "yes" : "no") + "; router |sum-1| " +
             fmt(router.value) + "; causality " + (causal ? "holds" : "broken");
  return o;
}

// --- decoding -------------------------------------------------------------

double recomputed_log_prob(const TinyDecoder& t, const std::vector<TokenId>& tokens) {
  const Tensor logits = t.decoder.forward(t.prompt, std::span<const TokenId>(tokens).first(tokens.size() - 1));
  const Mat lm = oracle::of(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t row = t.prompt.length() - 1 + i;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < lm.c; ++j) mx = std::max(mx, lm(row, j));
    double z = 0.0;
    for (std::size_t j = 0; j < lm.c; ++j) z += std::exp(lm(row, j) - mx);
    total += lm(row, static_cast<std::size_t>(tokens[i])) - mx - std::log(z);
  }
  return total;
}

Outcome decoding() {
  // Width 1 against a plain greedy loop.
  bool greedy_same = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TinyDecoder t = tiny_decoder(seed);
    gen::BeamConfig bc;
    bc.width = 1;
    bc.max_len = 8;
    const auto beams = gen::beam_search(gen::decoder_scorer(t.decoder, t.prompt), bc);
    const auto scorer = gen::decoder_scorer(t.decoder, t.prompt);
    std::vector<TokenId> tokens;
    double score = 0.0;
    while (tokens.size() < bc.max_len) {
      const auto lp = scorer(tokens);
      const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      tokens.push_back(best);
      score += lp[static_cast<std::size_t>(best)];
      if (best == bc.eos) break;
    }
    greedy_same = greedy_same && beams.size() == 1 && beams[0].tokens == tokens && beams[0].score == score;
  }

  // Width 3 over a 3-token vocabulary and 2 steps keeps the exact top 3.
  kgr::Rng rng(8);
  bool enumeration = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::vector<TokenId>, std::vector<double>> table;
    auto row = [&] { return gen::log_softmax(std::vector<double>{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)}); };
    table[{}] = row();
    for (TokenId x = 0; x < 3; ++x) table[{x}] = row();
    std::vector<std::pair<double, std::vector<TokenId>>> all;
    for (TokenId x = 0; x < 3; ++x)
      for (TokenId y = 0; y < 3; ++y) all.push_back({table[{}][x] + table[{x}][y], {x, y}});
    std::sort(all.begin(), all.end(), [](const auto& p, const auto& q) {
      return p.first != q.first ? p.first > q.first : p.second < q.second;
    });
    gen::BeamConfig bc;
    bc.width = 3;
    bc.max_len = 2;
    bc.eos = 99;
    const auto beams = gen::beam_search(
        [&](std::span<const TokenId> prefix) { return table.at(std::vector<TokenId>(prefix.begin(), prefix.end())); },
        bc);
    enumeration = enumeration && beams.size() == 3;
    for (std::size_t i = 0; enumeration && i < 3; ++i)
      enumeration = beams[i].tokens == all[i].second && std::abs(beams[i].score - all[i].first) < 1e-12;
  }

  // Returned scores against a full forward pass.
  Worst score_diff;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TinyDecoder t = tiny_decoder(seed);
    gen::BeamConfig bc;
    bc.width = 3;
    bc.max_len = 6;
    for (const auto& h : gen::beam_search(gen::decoder_scorer(t.decoder, t.prompt), bc))
      score_diff.see(std::abs(h.score - recomputed_log_prob(t, h.tokens)));
  }

  Outcome o;
  o.pass = greedy_same && enumeration && score_diff.value < 1e-6;
  o.detail = std::string("width 1 == greedy ") + (greedy_same ? "yes" : "no") + " (10 decoders); width 3 == top-3 of 9 " +
             (enumeration ? "yes" : "no") + " (50 tables); score vs recomputed log-prob " + fmt(score_diff.value) +
             " < 1e-6";
  return o;
}

// --- metrics ---------------------------------------------------------------

std::vector<m::EvalPair> corpus(std::initializer_list<std::pair<const char*, const char*>> pairs) {
  std::vector<m::EvalPair> out;
  int i = 0;
  for (const auto& [c, r] : pairs) out.push_back(m::make_pair("p" + std::to_string(i++), c, r));
  return out;
}

Outcome metric_values() {
  const std::string dir = KGR_FIXTURE_DIR;
  const auto pairs = m::read_pair_files(dir + "/golden_candidates.tsv", dir + "/golden_references.tsv");
  const m::MetricReport r = m::evaluate_corpus(pairs, kgr::data::default_labeler());

  const double bp = std::exp(1.0 - 10.0 / 9.0);
  const double p1 = 8.0 / 9.0, p2 = 6.0 / 7.0, p3 = 4.0 / 5.0, p4 = 1.0;
  const double p = 2.0 / 3.0, rc = 0.5, b2 = 1.44;
  const double fmean = 10 * p * rc / (rc + 9 * p);
  const double cider_g2 = 10.0 * (2.0 / 3.0 + 1.0 / std::sqrt(6.0)) * std::exp(-1.0 / 72.0) / 4.0;
  const m::Labeler toy = {{"Edema", {"edema"}}, {"Cardiomegaly", {"cardiomegaly", "enlarged heart"}},
                          {"Pneumothorax", {"pneumothorax"}}};
  const auto three = corpus({{"mild edema and cardiomegaly", "mild edema"},
                             {"no pneumothorax", "enlarged heart and pneumothorax"},
                             {"clear", "edema"}});

  const std::vector<std::pair<double, double>> checks = {
      {m::bleu(corpus({{"the cat sat", "the cat sat on the mat"}}), 1), 0.36787944117144233},
      {r.bleu[0], bp * p1},
      {r.bleu[1], bp * std::sqrt(p1 * p2)},
      {r.bleu[2], bp * std::cbrt(p1 * p2 * p3)},
      {r.bleu[3], bp * std::pow(p1 * p2 * p3 * p4, 0.25)},
      {r.rouge_l, (1.0 + (1 + b2) * p * rc / (rc + b2 * p)) / 2.0},
      {r.meteor_lite, (1.0 - 0.5 * std::pow(1.0 / 6.0, 3) + fmean * (1.0 - 0.5 / 8.0)) / 2.0},
      {r.cider_d, (10.0 + cider_g2) / 2.0},
      {m::cider_d(corpus({{"a b c", "a b d"}, {"a x", "a y"}})), 1.25},
      {m::clinical_f1(three, toy).f1, 4.0 / 7.0},
  };
  Worst diff;
  for (const auto& [got, want] : checks) diff.see(std::abs(got - want));
  Outcome o;
  o.pass = diff.value < 1e-9;
  o.detail = std::to_string(checks.size()) + " hand-derived values (BLEU-1..4, ROUGE-L, METEOR-lite, CIDEr-D, "
             "ClinicalF1), max |diff| " + fmt(diff.value) + " < 1e-9";
  return o;
}

// --- end-to-end through the CLI ----------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int sh(const std::string& cmd, const fs::path& log) {
  return std::system((cmd + " >> \"" + log.string() + "\" 2>&1").c_str());
}

struct PipelineRun {
  bool ok = false;
  std::string failure;
  double seconds = 0.0;
  fs::path dir;
  std::map<std::string, std::string> files;  // artifact name -> bytes
};

const std::vector<std::string> kArtifacts = {"data/dataset.jsonl", "run/loss_curve.json", "run/model.kgn",
                                             "run/metrics.json", "run/generations.jsonl"};

PipelineRun pipeline(const fs::path& dir) {
  PipelineRun run;
  run.dir = dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = std::string("\"") + KGR_CLI + "\"";
  const fs::path log = dir / "log.txt";
  const std::string data = (dir / "data/dataset.jsonl").string();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen-data", cli + " gen-data --seed 42 --set data_samples=704 --out-dir \"" + (dir / "data").string() + "\""},
      {"train", cli + " train --data \"" + data + "\" --out-dir \"" + (dir / "run").string() + "\""},
      {"evaluate", cli + " evaluate --checkpoint \"" + (dir / "run/model.kgn").string() + "\" --data \"" + data +
                       "\" --split test --out-dir \"" + (dir / "run").string() + "\""},
  };
  for (const auto& [name, cmd] : steps) {
    if (sh(cmd, log) != 0) {
      run.failure = name + " failed, see " + log.string();
      return run;
    }
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& a : kArtifacts) run.files[a] = slurp(dir / a);
  run.ok = true;
  return run;
}

std::optional<PipelineRun> first_run;

const PipelineRun& first_pipeline() {
  if (!first_run) first_run = pipeline(fs::path(KGR_WORK_DIR) / "run1");
  return *first_run;
}

Outcome desk_run() {
  const PipelineRun& run = first_pipeline();
  if (!run.ok) return {false, run.failure};
  const auto curve = nlohmann::json::parse(run.files.at("run/loss_curve.json"));
  const double initial = curve["initial_train_loss"].get<double>();
  const double final_loss = curve["epochs"].back()["train_loss"].get<double>();

  const auto metrics = nlohmann::json::parse(run.files.at("run/metrics.json"));
  bool complete = metrics.contains("corpus") && metrics.contains("samples");
  const std::vector<std::string> keys = {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",    "ROUGE-L",
                                         "METEOR-lite", "CIDEr-D", "ClinicalF1", "ClinicalPrecision",
                                         "ClinicalRecall"};
  for (const auto& k : keys)
    complete = complete && metrics["corpus"].contains(k) && std::isfinite(metrics["corpus"][k].get<double>());
  const std::string& gens = run.files.at("run/generations.jsonl");
  const auto n_gen = static_cast<std::size_t>(std::count(gens.begin(), gens.end(), '\n'));
  complete = complete && metrics["samples"].size() == 128 && n_gen == 128;

  Outcome o;
  o.pass = run.seconds < 15 * 60 && final_loss < 0.5 * initial && complete;
  std::ostringstream os;
  os << "gen-data+train+evaluate " << fmt(run.seconds) << " s < 900 s; train loss " << fmt(initial) << " -> "
     << fmt(final_loss) << " (" << fmt(100.0 * final_loss / initial) << "% < 50%); report "
     << (complete ? "complete" : "incomplete") << " (" << n_gen << " test samples, BLEU-4 "
     << fmt(metrics["corpus"].value("BLEU-4", 0.0)) << ", ClinicalF1 " << fmt(metrics["corpus"].value("ClinicalF1", 0.0))
     << ")";
  o.detail = os.str();
  return o;
}

Outcome ablation() {
  const PipelineRun& run = first_pipeline();
  if (!run.ok) return {false, run.failure};
  const fs::path out = fs::path(KGR_WORK_DIR) / "ablation";
  fs::remove_all(out);
  fs::create_directories(out);
  const std::string cmd = std::string("\"") + KGR_CLI + "\" ablate --data \"" +
                          (run.dir / "data/dataset.jsonl").string() + "\" --seeds 1 2 3 --rows af --out-dir \"" +
                          out.string() + "\"";
  if (sh(cmd, out / "log.txt") != 0) return {false, "ablate failed, see " + (out / "log.txt").string()};
  const auto table = nlohmann::json::parse(slurp(out / "ablation.json"));
  std::map<std::string, std::vector<double>> f1;
  std::map<std::string, double> mean;
  std::ostringstream os;
  for (const auto& row : table["rows"]) {
    const std::string key = row["row"];
    for (const auto& r : row["runs"]) {
      if (r.contains("error")) return {false, "row " + key + " seed " + r["seed"].dump() + ": " + r["error"].get<std::string>()};
      f1[key].push_back(r["ClinicalF1"].get<double>());
    }
    mean[key] = row["mean"]["ClinicalF1"].get<double>();
  }
  auto list = [&](const std::string& k) {
    std::string s;
    for (double v : f1[k]) s += (s.empty() ? "" : " ") + fmt(v);
    return s;
  };
  os << "mean ClinicalF1 full " << fmt(mean["f"]) << " [" << list("f") << "] vs visual-only " << fmt(mean["a"]) << " ["
     << list("a") << "], seeds 1 2 3; table " << (out / "ablation.json").string();
  return {mean["f"] >= mean["a"], os.str()};
}

Outcome reproducibility() {
  const PipelineRun& a = first_pipeline();
  if (!a.ok) return {false, a.failure};
  const PipelineRun b = pipeline(fs::path(KGR_WORK_DIR) / "run2");
  if (!b.ok) return {false, b.failure};
  Outcome o;
  std::string same, differ;
  for (const auto& name : kArtifacts) {
    const bool eq = a.files.at(name) == b.files.at(name) && !a.files.at(name).empty();
    (eq ? same : differ) += (eq ? same : differ).empty() ? name : ", " + name;
  }
  o.pass = differ.empty();
  o.detail = "two seed-42 runs, byte-identical: " + same + (differ.empty() ? "" : "; differ: " + differ);
  return o;
}

struct Criterion {
  std::string name;
  bool soft;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"scope", false,
       [] {
         return Outcome{true,
                        "published benchmark scores need a 7B language model, a pretrained Swin encoder and gated "
                        "clinical data; acceptance is the property checks below"};
       }},
      {"gradients", false, gradients},
      {"equation-oracles", false, equation_oracles},
      {"normalization", false, normalization},
      {"invariants", false, invariants},
      {"decoding", false, decoding},
      {"metrics", false, metric_values},
      {"desk-run", false, desk_run},
      {"ablation", true, ablation},
      {"reproducibility", false, reproducibility},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  fs::create_directories(KGR_WORK_DIR);
  int hard_failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    if (!only.empty() && !only.count(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass && !c.soft) ++hard_failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << " " << std::left << std::setw(17)
              << c.name << std::right << (c.soft ? "(soft) " : "") << o.detail << std::endl;
  }
  return hard_failures == 0 ? 0 : 1;
}
