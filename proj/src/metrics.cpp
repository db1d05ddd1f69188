// SPDX-License-Identifier: Apache-2.0
#include "kgr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "kgr/error.hpp"
#include "kgr/tokenizer.hpp"

namespace kgr::metrics {
namespace {

using NgramCounts = std::map<std::string, double>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) key += '\x1f' + tokens[i + k];
    counts[key] += 1.0;
  }
  return counts;
}

void require_nonempty(const char* metric, const std::vector<EvalPair>& corpus) {
  if (corpus.empty()) throw InvalidArgument(std::string(metric) + ": empty corpus");
}

// Summed in sorted order so the result does not depend on sample order.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace

EvalPair make_pair(std::string id, const std::string& candidate, const std::string& reference) {
  return {std::move(id), Tokenizer::split(candidate), Tokenizer::split(reference)};
}

double bleu(const std::vector<EvalPair>& corpus, int n, const BleuOptions& options) {
  require_nonempty("bleu", corpus);
  if (n < 1 || n > 4) throw InvalidArgument("bleu: order must be in [1, 4], got " + std::to_string(n));
  double cand_len = 0.0, ref_len = 0.0;
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  for (const EvalPair& p : corpus) {
    cand_len += static_cast<double>(p.candidate.size());
    ref_len += static_cast<double>(p.reference.size());
    for (int k = 1; k <= n; ++k) {
      const NgramCounts c = ngrams(p.candidate, static_cast<std::size_t>(k));
      const NgramCounts r = ngrams(p.reference, static_cast<std::size_t>(k));
      for (const auto& [g, count] : c) {
        auto it = r.find(g);
        if (it != r.end()) matched[k - 1] += std::min(count, it->second);
        total[k - 1] += count;
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    double m = matched[k - 1], t = total[k - 1];
    if (options.smoothing && k >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const EvalPair& pair) {
  const std::size_t lcs = lcs_length(pair.candidate, pair.reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(pair.candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(pair.reference.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(const std::vector<EvalPair>& corpus) {
  require_nonempty("rouge_l", corpus);
  std::vector<double> scores;
  for (const EvalPair& p : corpus) scores.push_back(rouge_l_pair(p));
  return order_free_mean(std::move(scores));
}

MeteorDetail meteor_lite_pair(const EvalPair& pair) {
  const auto& cand = pair.candidate;
  const auto& ref = pair.reference;
  std::unordered_map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t j = 0; j < ref.size(); ++j) positions[ref[j]].push_back(j);

  // Left-to-right exact alignment; each candidate word prefers the
  // reference position right after the previous match so chunks extend.
  std::vector<bool> used(ref.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> alignment;
  std::ptrdiff_t prev_ref = -2;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    auto it = positions.find(cand[i]);
    if (it == positions.end()) continue;
    std::ptrdiff_t chosen = -1, after = -1, first = -1;
    for (std::size_t j : it->second) {
      if (used[j]) continue;
      const auto sj = static_cast<std::ptrdiff_t>(j);
      if (sj == prev_ref + 1) chosen = sj;
      if (after < 0 && sj > prev_ref) after = sj;
      if (first < 0) first = sj;
    }
    if (chosen < 0) chosen = after >= 0 ? after : first;
    if (chosen < 0) continue;
    used[static_cast<std::size_t>(chosen)] = true;
    alignment.emplace_back(i, static_cast<std::size_t>(chosen));
    prev_ref = chosen;
  }

  MeteorDetail d;
  d.matches = alignment.size();
  if (d.matches == 0) return d;
  for (std::size_t k = 0; k < alignment.size(); ++k) {
    if (k == 0 || alignment[k].first != alignment[k - 1].first + 1 ||
        alignment[k].second != alignment[k - 1].second + 1)
      ++d.chunks;
  }
  const double m = static_cast<double>(d.matches);
  d.precision = m / static_cast<double>(cand.size());
  d.recall = m / static_cast<double>(ref.size());
  d.fmean = 10.0 * d.precision * d.recall / (d.recall + 9.0 * d.precision);
  d.penalty = 0.5 * std::pow(static_cast<double>(d.chunks) / m, 3.0);
  d.score = d.fmean * (1.0 - d.penalty);
  return d;
}

double meteor_lite(const std::vector<EvalPair>& corpus) {
  require_nonempty("meteor_lite", corpus);
  std::vector<double> scores;
  for (const EvalPair& p : corpus) scores.push_back(meteor_lite_pair(p).score);
  return order_free_mean(std::move(scores));
}

std::vector<double> cider_d_samples(const std::vector<EvalPair>& corpus) {
  require_nonempty("cider_d", corpus);
  std::set<std::vector<std::string>> distinct;
  for (const EvalPair& p : corpus) distinct.insert(p.reference);
  if (distinct.size() < 2) throw InvalidArgument("cider_d: need at least two distinct references for IDF");

  constexpr std::size_t kMaxOrder = 4;
  constexpr double kSigma = 6.0;
  std::array<std::map<std::string, double>, kMaxOrder> doc_freq;
  for (const EvalPair& p : corpus)
    for (std::size_t n = 1; n <= kMaxOrder; ++n)
      for (const auto& [g, count] : ngrams(p.reference, n)) doc_freq[n - 1][g] += 1.0;
  const double log_docs = std::log(static_cast<double>(corpus.size()));

  auto tfidf = [&](const std::vector<std::string>& tokens, std::size_t n, double& norm) {
    NgramCounts vec = ngrams(tokens, n);
    norm = 0.0;
    for (auto& [g, tf] : vec) {
      auto it = doc_freq[n - 1].find(g);
      const double df = it == doc_freq[n - 1].end() ? 0.0 : it->second;
      tf *= log_docs - std::log(std::max(1.0, df));
      norm += tf * tf;
    }
    norm = std::sqrt(norm);
    return vec;
  };

  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const EvalPair& p : corpus) {
    const double delta = static_cast<double>(p.candidate.size()) - static_cast<double>(p.reference.size());
    const double length_penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double total = 0.0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      double nc = 0.0, nr = 0.0;
      const NgramCounts vc = tfidf(p.candidate, n, nc);
      const NgramCounts vr = tfidf(p.reference, n, nr);
      double dot = 0.0;
      for (const auto& [g, wc] : vc) {
        auto it = vr.find(g);
        if (it != vr.end()) dot += std::min(wc, it->second) * it->second;
      }
      if (nc != 0.0 && nr != 0.0) dot /= nc * nr;
      total += dot * length_penalty;
    }
    scores.push_back(10.0 * total / static_cast<double>(kMaxOrder));
  }
  return scores;
}

double cider_d(const std::vector<EvalPair>& corpus) { return order_free_mean(cider_d_samples(corpus)); }

std::set<std::string> extract_labels(const std::vector<std::string>& tokens, const Labeler& labeler) {
  std::set<std::string> found;
  for (const auto& [label, phrases] : labeler) {
    for (const auto& phrase : phrases) {
      const auto words = Tokenizer::split(phrase);
      if (words.empty() || words.size() > tokens.size()) continue;
      if (std::search(tokens.begin(), tokens.end(), words.begin(), words.end()) != tokens.end()) {
        found.insert(label);
        break;
      }
    }
  }
  return found;
}

ClinicalScore clinical_f1(const std::vector<EvalPair>& corpus, const Labeler& labeler) {
  if (labeler.empty()) throw InvalidArgument("clinical_f1: empty labeler");
  ClinicalScore s;
  for (const EvalPair& p : corpus) {
    const auto c = extract_labels(p.candidate, labeler);
    const auto r = extract_labels(p.reference, labeler);
    for (const auto& l : c) (r.count(l) ? s.true_positives : s.false_positives)++;
    for (const auto& l : r)
      if (!c.count(l)) ++s.false_negatives;
  }
  const auto tp = static_cast<double>(s.true_positives);
  const auto fp = static_cast<double>(s.false_positives);
  const auto fn = static_cast<double>(s.false_negatives);
  if (tp + fp + fn == 0.0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

MetricReport evaluate_corpus(const std::vector<EvalPair>& corpus, const Labeler& labeler,
                             const BleuOptions& bleu_options) {
  require_nonempty("evaluate_corpus", corpus);
  MetricReport report;
  for (int n = 1; n <= 4; ++n) report.bleu[static_cast<std::size_t>(n - 1)] = bleu(corpus, n, bleu_options);
  report.rouge_l = rouge_l(corpus);
  report.meteor_lite = meteor_lite(corpus);
  const auto cider = cider_d_samples(corpus);
  report.cider_d = order_free_mean(cider);
  report.clinical = clinical_f1(corpus, labeler);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const EvalPair& p = corpus[i];
    SampleScores s;
    s.id = p.id;
    s.bleu4 = bleu({p}, 4, bleu_options);
    s.rouge_l = rouge_l_pair(p);
    s.meteor_lite = meteor_lite_pair(p).score;
    s.cider_d = cider[i];
    const auto cl = extract_labels(p.candidate, labeler);
    const auto rl = extract_labels(p.reference, labeler);
    s.candidate_labels.assign(cl.begin(), cl.end());
    s.reference_labels.assign(rl.begin(), rl.end());
    report.samples.push_back(std::move(s));
  }
  return report;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json corpus = {
      {"BLEU-1", report.bleu[0]},
      {"BLEU-2", report.bleu[1]},
      {"BLEU-3", report.bleu[2]},
      {"BLEU-4", report.bleu[3]},
      {"ROUGE-L", report.rouge_l},
      {"METEOR-lite", report.meteor_lite},
      {"CIDEr-D", report.cider_d},
      {"ClinicalF1", report.clinical.f1},
      {"ClinicalPrecision", report.clinical.precision},
      {"ClinicalRecall", report.clinical.recall},
  };
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"id", s.id},
                       {"BLEU-4", s.bleu4},
                       {"ROUGE-L", s.rouge_l},
                       {"METEOR-lite", s.meteor_lite},
                       {"CIDEr-D", s.cider_d},
                       {"candidate_labels", s.candidate_labels},
                       {"reference_labels", s.reference_labels}});
  }
  return {{"schema_version", kMetricSchemaVersion}, {"corpus", corpus}, {"samples", samples}};
}

namespace {

std::vector<std::pair<std::string, std::string>> read_id_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t sep = line.find('\t');
    if (sep == std::string::npos) sep = line.find(' ');
    if (sep == std::string::npos || sep == 0) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected '<id>\\t<text>'");
    }
    rows.emplace_back(line.substr(0, sep), line.substr(sep + 1));
  }
  return rows;
}

}  // namespace

std::vector<EvalPair> read_pair_files(const std::string& candidate_path, const std::string& reference_path) {
  const auto cands = read_id_lines(candidate_path);
  std::map<std::string, std::string> refs;
  for (auto& [id, text] : read_id_lines(reference_path)) {
    if (!refs.emplace(id, text).second) throw FormatError(reference_path + ": duplicate id '" + id + "'");
  }
  std::vector<EvalPair> pairs;
  for (const auto& [id, text] : cands) {
    auto it = refs.find(id);
    if (it == refs.end()) throw FormatError("no reference for candidate id '" + id + "'");
    pairs.push_back(make_pair(id, text, it->second));
  }
  return pairs;
}

}  // namespace kgr::metrics
