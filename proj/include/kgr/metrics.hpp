// SPDX-License-Identifier: Apache-2.0
//
// Corpus-level text-generation metrics over single-reference pairs, plus
// a keyword-driven clinical label F1.
#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace kgr::metrics {

struct EvalPair {
  std::string id;
  std::vector<std::string> candidate;
  std::vector<std::string> reference;
};

/// Builds a pair from raw text using the shared tokenizer normalization.
EvalPair make_pair(std::string id, const std::string& candidate, const std::string& reference);

struct BleuOptions {
  /// Add-one smoothing of matched and total counts for orders >= 2.
  bool smoothing = false;
};

/// Corpus BLEU-n: geometric mean of clipped n-gram precisions for orders
/// 1..n, times exp(1 - r/c) when the candidate corpus is shorter.
double bleu(const std::vector<EvalPair>& corpus, int n, const BleuOptions& options = {});

inline constexpr double kRougeBeta = 1.2;
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
double rouge_l_pair(const EvalPair& pair);
/// Mean per-sample LCS F-measure with beta = 1.2.
double rouge_l(const std::vector<EvalPair>& corpus);

/// Exact-match METEOR: Fmean = 10PR / (R + 9P) and penalty
/// 0.5 * (chunks / matches)^3.
struct MeteorDetail {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};
MeteorDetail meteor_lite_pair(const EvalPair& pair);
double meteor_lite(const std::vector<EvalPair>& corpus);

/// CIDEr-D: document frequencies from the references, clipped TF-IDF
/// cosine per order 1..4, Gaussian length penalty (sigma 6), x10.
/// Returns per-sample scores; the corpus score is their mean.
std::vector<double> cider_d_samples(const std::vector<EvalPair>& corpus);
double cider_d(const std::vector<EvalPair>& corpus);

/// Disease label -> trigger phrases (each phrase already normalized).
using Labeler = std::map<std::string, std::vector<std::string>>;

/// Labels whose trigger phrase occurs as a contiguous token run.
std::set<std::string> extract_labels(const std::vector<std::string>& tokens, const Labeler& labeler);

struct ClinicalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};
/// Micro-averaged label P/R/F1. A corpus with no labels on either side
/// scores 1.0.
ClinicalScore clinical_f1(const std::vector<EvalPair>& corpus, const Labeler& labeler);

struct SampleScores {
  std::string id;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  double cider_d = 0.0;
  std::vector<std::string> candidate_labels;
  std::vector<std::string> reference_labels;
};

struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  double cider_d = 0.0;
  ClinicalScore clinical;
  std::vector<SampleScores> samples;
};

inline constexpr int kMetricSchemaVersion = 1;

MetricReport evaluate_corpus(const std::vector<EvalPair>& corpus, const Labeler& labeler,
                             const BleuOptions& bleu_options = {});
nlohmann::json to_json(const MetricReport& report);

/// Reads "<id>\t<text>" lines and pairs candidates with references by id.
std::vector<EvalPair> read_pair_files(const std::string& candidate_path, const std::string& reference_path);

}  // namespace kgr::metrics
