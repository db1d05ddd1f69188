// SPDX-License-Identifier: Apache-2.0
//
// Training, evaluation and ablation runs over the synthetic corpus.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgr/config.hpp"
#include "kgr/dataset.hpp"
#include "kgr/gradcheck.hpp"
#include "kgr/metrics.hpp"
#include "kgr/model.hpp"

namespace kgr {

inline constexpr int kReportSchemaVersion = 1;

/// A sample ready for the model: image tensor and target ids ending in EOS.
struct Example {
  std::string id;
  ad::Tensor image;
  std::vector<TokenId> targets;
  std::string reference;
};

std::vector<Example> make_examples(const ReportModel& model, const std::vector<data::SampleRecord>& records);

/// Model whose vocabulary comes from the training split of `records`.
ReportModel build_model(const TrainConfig& cfg, const std::vector<data::SampleRecord>& records);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of the epoch's mini-batch losses
  double val_loss = 0.0;    // mean per-sample loss after the epoch
};

struct TrainResult {
  double initial_train_loss = 0.0;  // mean per-sample loss before the first step
  std::vector<EpochStats> curve;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam over shuffled mini-batches. Per-sample gradients are summed in
/// batch order, so the result does not depend on cfg.threads. Throws
/// DivergenceError on a non-finite loss.
TrainResult train(ReportModel& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const EpochCallback& on_epoch = {});

/// Mean per-sample loss without recording a tape.
double mean_loss(const ReportModel& model, const std::vector<Example>& examples);

nlohmann::ordered_json to_json(const TrainResult& result);

struct Generation {
  std::string id;
  std::string text;
  std::string reference;
  double score = 0.0;
  bool terminated = false;
  std::vector<generator::Hypothesis> beams;
};

struct EvalResult {
  metrics::MetricReport report;
  std::vector<Generation> generations;
};

struct EvalOptions {
  /// Use each reference as its own candidate; decoding is skipped.
  bool bypass = false;
};

EvalResult evaluate_model(const ReportModel& model, const std::vector<data::SampleRecord>& records,
                          const EvalOptions& options = {});

/// One JSON object per line: id, text, reference, score, terminated, beams.
std::string generations_jsonl(const ReportModel& model, const std::vector<Generation>& generations);

struct AblationRowSpec {
  std::string key;  // "a".."f"
  std::string description;
  fusion::Strategy fusion;
  bool use_gcn;
  std::vector<std::string> expected_diff;  // keys that differ from row f
};

const std::vector<AblationRowSpec>& ablation_rows();

struct AblationSeedResult {
  std::uint64_t seed = 0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  double cider_d = 0.0;
  double clinical_f1 = 0.0;
  double final_train_loss = 0.0;
  std::size_t gcn_calls = 0;
  std::string error;  // nonempty when the run failed
};

struct AblationRow {
  AblationRowSpec spec;
  std::vector<std::string> diff;
  std::vector<AblationSeedResult> runs;
  AblationSeedResult mean;  // over successful runs; seed unused
  std::size_t succeeded = 0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  /// Mean ClinicalF1 of row f against row a; nullopt when either failed.
  std::optional<bool> full_beats_baseline;
};

using AblationCallback = std::function<void(const std::string& row, const AblationSeedResult&)>;

/// Trains and evaluates every row (or the rows in `only`, by key) for
/// every seed on the same records. A failed run is recorded and the
/// remaining runs continue.
AblationTable run_ablation(const TrainConfig& base, const std::vector<data::SampleRecord>& records,
                           const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& only = {},
                           const AblationCallback& on_run = {});

nlohmann::ordered_json to_json(const AblationTable& table);

struct GradCheckEntry {
  std::string name;
  ad::GradCheckResult result;
};

/// Finite-difference checks of every op and of the composed model at
/// tiny sizes.
std::vector<GradCheckEntry> gradient_suite(std::uint64_t seed);

}  // namespace kgr
