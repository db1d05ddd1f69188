// SPDX-License-Identifier: Apache-2.0
#include "kgr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "kgr/error.hpp"

namespace kgr {
namespace {

// Runs fn(i) for i in [0, n) over `threads` workers with a static
// interleaved partition. Callers write results into slot i only.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

void adam_step(ParameterList& params, const std::vector<std::vector<double>>& grads, AdamState& st,
               const TrainConfig& cfg) {
  ++st.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].tensor.mutable_values();
    auto& m = st.m[p];
    auto& v = st.v[p];
    const auto& g = grads[p];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double step = cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
      // Parameters stay on the float32 grid; see ReportModel::create.
      w[k] = static_cast<double>(static_cast<float>(w[k] - step));
    }
  }
}

double sample_loss_value(const ReportModel& model, const Example& ex) {
  ad::NoGradScope no_grad;
  return model.loss(ex.image, ex.targets).item();
}

}  // namespace

std::vector<Example> make_examples(const ReportModel& model, const std::vector<data::SampleRecord>& records) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, model.image_tensor(r.patches), model.target_ids(r.report), r.report});
  return out;
}

ReportModel build_model(const TrainConfig& cfg, const std::vector<data::SampleRecord>& records) {
  std::vector<std::string> reports;
  for (const auto& r : records)
    if (r.split == data::Split::kTrain) reports.push_back(r.report);
  if (reports.empty()) throw InvalidArgument("build_model: no training records");
  return ReportModel::create(cfg, build_tokenizer(reports, cfg.instruction), graph_for(cfg));
}

double mean_loss(const ReportModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw InvalidArgument("mean_loss: no examples");
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), model.config().threads,
               [&](std::size_t i) { losses[i] = sample_loss_value(model, examples[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(examples.size());
}

TrainResult train(ReportModel& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  const TrainConfig& cfg = model.config();
  cfg.validate();

  ParameterList params = model.parameters();
  AdamState adam;
  for (const auto& p : params) {
    adam.m.emplace_back(p.tensor.numel(), 0.0);
    adam.v.emplace_back(p.tensor.numel(), 0.0);
  }

  TrainResult result;
  result.initial_train_loss = mean_loss(model, train_set);

  const Rng shuffle_root = Rng(cfg.seed).derive("shuffle");
  std::vector<std::size_t> order(train_set.size());
  std::vector<std::vector<std::vector<double>>> sample_grads(cfg.batch_size);
  std::vector<double> sample_losses(cfg.batch_size);
  std::vector<std::vector<double>> batch_grads(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) batch_grads[p].resize(params[p].tensor.numel());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = shuffle_root.derive("epoch" + std::to_string(epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      parallel_for(count, cfg.threads, [&](std::size_t b) {
        const Example& ex = train_set[order[start + b]];
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const ad::Tensor loss = model.loss(ex.image, ex.targets);
        sample_losses[b] = loss.item();
        const ad::Gradients grads = tape.gradients(loss);
        auto& slot = sample_grads[b];
        slot.resize(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto g = grads.of(params[p].tensor);
          if (g.empty()) {
            slot[p].assign(params[p].tensor.numel(), 0.0);
          } else {
            slot[p].assign(g.begin(), g.end());
          }
        }
      });

      double batch_loss = 0.0;
      for (std::size_t b = 0; b < count; ++b) batch_loss += sample_losses[b];
      batch_loss /= static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(result.steps + 1) + " (first sample " +
                              train_set[order[start]].id + ", lr " + std::to_string(cfg.learning_rate) + ")");
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& acc = batch_grads[p];
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t b = 0; b < count; ++b) {
          const auto& g = sample_grads[b][p];
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (double& a : acc) a *= inv;
      }
      adam_step(params, batch_grads, adam, cfg);
      ++result.steps;
      epoch_loss += batch_loss;
      ++batches;
    }

    EpochStats stats{epoch, epoch_loss / static_cast<double>(batches),
                     val_set.empty() ? 0.0 : mean_loss(model, val_set)};
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

nlohmann::ordered_json to_json(const TrainResult& result) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["initial_train_loss"] = result.initial_train_loss;
  j["steps"] = result.steps;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : result.curve) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return j;
}

EvalResult evaluate_model(const ReportModel& model, const std::vector<data::SampleRecord>& records,
                          const EvalOptions& options) {
  if (records.empty()) throw InvalidArgument("evaluate: split is empty");
  EvalResult out;
  out.generations.resize(records.size());
  parallel_for(records.size(), model.config().threads, [&](std::size_t i) {
    const auto& r = records[i];
    Generation& g = out.generations[i];
    g.id = r.id;
    g.reference = r.report;
    if (options.bypass) {
      g.text = Tokenizer::normalize(r.report);
      g.terminated = true;
      return;
    }
    g.beams = model.generate(model.image_tensor(r.patches));
    const auto& best = g.beams.front();
    g.text = model.tokenizer().decode(best.tokens);
    g.score = best.score;
    g.terminated = best.terminated;
  });

  std::vector<metrics::EvalPair> pairs;
  for (const auto& g : out.generations) pairs.push_back(metrics::make_pair(g.id, g.text, g.reference));
  metrics::BleuOptions bo;
  bo.smoothing = model.config().bleu_smoothing;
  out.report = metrics::evaluate_corpus(pairs, data::default_labeler(), bo);
  return out;
}

std::string generations_jsonl(const ReportModel& model, const std::vector<Generation>& generations) {
  std::string out;
  for (const auto& g : generations) {
    nlohmann::ordered_json j;
    j["id"] = g.id;
    j["text"] = g.text;
    j["reference"] = Tokenizer::normalize(g.reference);
    j["score"] = g.score;
    j["terminated"] = g.terminated;
    auto& beams = j["beams"] = nlohmann::ordered_json::array();
    for (const auto& h : g.beams) {
      beams.push_back({{"text", model.tokenizer().decode(h.tokens)},
                       {"score", h.score},
                       {"length", h.tokens.size()},
                       {"terminated", h.terminated}});
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

const std::vector<AblationRowSpec>& ablation_rows() {
  using fusion::Strategy;
  static const std::vector<AblationRowSpec> rows = {
      {"a", "regional features only", Strategy::kNone, false, {"fusion", "use_gcn"}},
      {"b", "disease features only, with GCN", Strategy::kDisease, true, {"fusion"}},
      {"c", "average fusion, with GCN", Strategy::kAverage, true, {"fusion"}},
      {"d", "element-wise fusion, with GCN", Strategy::kElement, true, {"fusion"}},
      {"e", "modality-wise fusion, without GCN", Strategy::kModality, false, {"use_gcn"}},
      {"f", "modality-wise fusion, with GCN", Strategy::kModality, true, {}},
  };
  return rows;
}

namespace {

AblationSeedResult run_one(const TrainConfig& cfg, const std::vector<data::SampleRecord>& records) {
  AblationSeedResult r;
  r.seed = cfg.seed;
  ReportModel model = build_model(cfg, records);
  const auto train_set = make_examples(model, data::select(records, data::Split::kTrain));
  const auto val_set = make_examples(model, data::select(records, data::Split::kVal));
  const TrainResult tr = train(model, train_set, val_set);
  r.final_train_loss = tr.curve.empty() ? tr.initial_train_loss : tr.curve.back().train_loss;
  const EvalResult ev = evaluate_model(model, data::select(records, data::Split::kTest));
  r.bleu4 = ev.report.bleu[3];
  r.rouge_l = ev.report.rouge_l;
  r.meteor_lite = ev.report.meteor_lite;
  r.cider_d = ev.report.cider_d;
  r.clinical_f1 = ev.report.clinical.f1;
  r.gcn_calls = model.gcn_calls();
  return r;
}

}  // namespace

AblationTable run_ablation(const TrainConfig& base, const std::vector<data::SampleRecord>& records,
                           const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& only,
                           const AblationCallback& on_run) {
  if (seeds.empty()) throw InvalidArgument("ablation: at least one seed is required");
  AblationTable table;
  table.seeds = seeds;

  TrainConfig full = base;
  full.fusion = fusion::Strategy::kModality;
  full.use_gcn = true;

  for (const AblationRowSpec& spec : ablation_rows()) {
    if (!only.empty() && std::find(only.begin(), only.end(), spec.key) == only.end()) continue;
    AblationRow row;
    row.spec = spec;
    TrainConfig cfg = full;
    cfg.fusion = spec.fusion;
    cfg.use_gcn = spec.use_gcn;
    row.diff = config_diff(cfg, full);
    if (row.diff != spec.expected_diff) {
      throw Error("ablation row " + spec.key + " differs from the full model in unintended settings");
    }
    for (std::uint64_t seed : seeds) {
      cfg.seed = seed;
      AblationSeedResult r;
      try {
        r = run_one(cfg, records);
      } catch (const Error& e) {
        r = AblationSeedResult{};
        r.seed = seed;
        r.error = e.what();
      }
      if (on_run) on_run(spec.key, r);
      row.runs.push_back(r);
    }
    std::vector<const AblationSeedResult*> ok;
    for (const auto& r : row.runs)
      if (r.error.empty()) ok.push_back(&r);
    row.succeeded = ok.size();
    if (!ok.empty()) {
      const double n = static_cast<double>(ok.size());
      for (const auto* r : ok) {
        row.mean.bleu4 += r->bleu4 / n;
        row.mean.rouge_l += r->rouge_l / n;
        row.mean.meteor_lite += r->meteor_lite / n;
        row.mean.cider_d += r->cider_d / n;
        row.mean.clinical_f1 += r->clinical_f1 / n;
        row.mean.final_train_loss += r->final_train_loss / n;
        row.mean.gcn_calls += r->gcn_calls;
      }
    }
    table.rows.push_back(std::move(row));
  }

  const AblationRow* a = nullptr;
  const AblationRow* f = nullptr;
  for (const auto& row : table.rows) {
    if (row.spec.key == "a" && row.succeeded == seeds.size()) a = &row;
    if (row.spec.key == "f" && row.succeeded == seeds.size()) f = &row;
  }
  if (a && f) table.full_beats_baseline = f->mean.clinical_f1 >= a->mean.clinical_f1;
  return table;
}

nlohmann::ordered_json to_json(const AblationTable& table) {
  auto scores = [](const AblationSeedResult& r) {
    return nlohmann::ordered_json{{"BLEU-4", r.bleu4},
                                  {"ROUGE-L", r.rouge_l},
                                  {"METEOR-lite", r.meteor_lite},
                                  {"CIDEr-D", r.cider_d},
                                  {"ClinicalF1", r.clinical_f1},
                                  {"final_train_loss", r.final_train_loss},
                                  {"gcn_calls", r.gcn_calls}};
  };
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["seeds"] = table.seeds;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json r;
    r["row"] = row.spec.key;
    r["description"] = row.spec.description;
    r["fusion"] = std::string(fusion::strategy_name(row.spec.fusion));
    r["use_gcn"] = row.spec.use_gcn;
    r["config_diff"] = row.diff;
    r["succeeded"] = row.succeeded;
    r["mean"] = row.succeeded ? scores(row.mean) : nlohmann::ordered_json();
    auto& runs = r["runs"] = nlohmann::ordered_json::array();
    for (const auto& run : row.runs) {
      auto s = scores(run);
      s["seed"] = run.seed;
      if (!run.error.empty()) s["error"] = run.error;
      runs.push_back(s);
    }
    rows.push_back(r);
  }
  if (table.full_beats_baseline) {
    j["full_beats_baseline"] = *table.full_beats_baseline;
  } else {
    j["full_beats_baseline"] = nullptr;
  }
  return j;
}

}  // namespace kgr
