// SPDX-License-Identifier: Apache-2.0
#include "kgr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kgr/error.hpp"
#include "kgr/kgraph.hpp"
#include "kgr/tokenizer.hpp"

namespace kgr::data {
namespace {

struct Phrasing {
  std::vector<std::string_view> sentences;
  std::vector<std::string_view> triggers;
};

// Indexed like chexpert_labels(). Every sentence contains one of its
// label's triggers and no other label's.
const std::array<Phrasing, graph::kNumEntities>& template_bank() {
  static const std::array<Phrasing, graph::kNumEntities> bank = {{
      {{"no acute cardiopulmonary process .", "the chest is without acute findings ."},
       {"no acute cardiopulmonary", "without acute findings"}},
      {{"the cardiomediastinal silhouette is enlarged .", "there is widening of the mediastinum ."},
       {"silhouette is enlarged", "widening of the mediastinum"}},
      {{"the heart is enlarged .", "moderate cardiomegaly is present .", "there is mild cardiomegaly ."},
       {"heart is enlarged", "cardiomegaly"}},
      {{"there is a hazy opacity in the right lower lobe .", "patchy airspace opacity is seen at the left base ."},
       {"hazy opacity", "airspace opacity"}},
      {{"a nodular lesion is seen in the left upper lobe .", "there is a pulmonary mass in the right hilum ."},
       {"nodular lesion", "pulmonary mass"}},
      {{"there is mild pulmonary edema .", "interstitial edema is present bilaterally ."}, {"edema"}},
      {{"focal consolidation is present in the right middle lobe .", "there is dense consolidation at the left base ."},
       {"consolidation"}},
      {{"findings are concerning for pneumonia .", "the appearance may represent early pneumonia ."}, {"pneumonia"}},
      {{"there is bibasilar atelectasis .", "linear atelectasis is noted in the lingula ."}, {"atelectasis"}},
      {{"a small right apical pneumothorax is present .", "there is a left pneumothorax ."}, {"pneumothorax"}},
      {{"there is a small left pleural effusion .", "bilateral pleural effusions are present ."},
       {"pleural effusion", "pleural effusions"}},
      {{"there is pleural thickening at the right apex .", "mild pleural scarring is seen on the left ."},
       {"pleural thickening", "pleural scarring"}},
      {{"a healed rib fracture is noted .", "there is an acute fracture of the left clavicle ."}, {"fracture"}},
      {{"a central venous catheter terminates in the svc .", "an endotracheal tube is in place ."},
       {"catheter", "endotracheal tube"}},
  }};
  return bank;
}

constexpr std::array<std::string_view, 8> kFiller = {
    "the trachea is midline .",
    "there is no free air under the diaphragm .",
    "the visualized upper abdomen is unremarkable .",
    "the soft tissues are within normal limits .",
    "the hila are normal in size .",
    "the diaphragm is well defined .",
    "the osseous structures are intact .",
    "comparison is made with the prior study .",
};

// Patch subset and pattern per label, shared by every dataset.
constexpr std::uint64_t kSignatureSeed = 0x5167A7u;
constexpr std::size_t kSignaturePatches = 3;

struct Signature {
  std::vector<std::size_t> patches;
  std::vector<double> pattern;  // patch_dim
};

std::vector<Signature> signatures(std::size_t patches, std::size_t patch_dim) {
  Rng base(kSignatureSeed);
  std::vector<Signature> out(graph::kNumEntities);
  for (std::size_t d = 1; d < graph::kNumEntities; ++d) {
    Rng rng = base.derive("signature/" + std::to_string(d));
    std::vector<std::size_t> order(patches);
    for (std::size_t s = 0; s < patches; ++s) order[s] = s;
    rng.shuffle(order);
    order.resize(std::min(kSignaturePatches, patches));
    std::sort(order.begin(), order.end());
    out[d].patches = order;
    out[d].pattern.resize(patch_dim);
    for (double& v : out[d].pattern) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  return out;
}

// 4-decimal grid keeps the text form short and exactly re-readable.
double quantize(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    if (split_name(s) == name) return s;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

SplitSizes split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  for (double r : ratios)
    if (r < 0.0) throw InvalidArgument("split ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw InvalidArgument("split ratios must sum to 1");
  const auto train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[0]));
  const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
  if (train == 0 || val == 0 || train + val >= n) {
    throw InvalidArgument("n = " + std::to_string(n) + " is too small for every split to be nonempty");
  }
  return {train, val, n - train - val};
}

std::vector<std::size_t> sample_label_set(Rng& rng, double cooccur_boost) {
  static const graph::KnowledgeGraph g = graph::build_chexpert_graph();
  const double u = rng.uniform();
  if (u < 0.2) return {0};
  if (u < 0.6) return {1 + static_cast<std::size_t>(rng.below(graph::kNumEntities - 1))};

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t i = 1; i < graph::kNumEntities; ++i) {
    for (std::size_t j = i + 1; j < graph::kNumEntities; ++j) {
      total += g.entities()[i].region == g.entities()[j].region ? cooccur_boost : 1.0;
      pairs.emplace_back(i, j);
      cumulative.push_back(total);
    }
  }
  const double x = rng.uniform() * total;
  const auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
  const auto& [a, b] = pairs[std::min(k, pairs.size() - 1)];
  return {a, b};
}

std::string render_report(const std::vector<std::size_t>& labels, Rng& rng) {
  std::string out;
  auto append = [&out](std::string_view s) {
    if (!out.empty()) out += ' ';
    out += s;
  };
  std::vector<std::size_t> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t d : sorted) {
    const auto& options = template_bank().at(d).sentences;
    append(options[rng.below(options.size())]);
  }
  std::vector<std::size_t> filler(kFiller.size());
  for (std::size_t i = 0; i < filler.size(); ++i) filler[i] = i;
  rng.shuffle(filler);
  filler.resize(2 + rng.below(2));
  std::sort(filler.begin(), filler.end());
  for (std::size_t f : filler) append(kFiller[f]);
  return out;
}

const metrics::Labeler& default_labeler() {
  static const metrics::Labeler labeler = [] {
    metrics::Labeler out;
    for (std::size_t d = 0; d < graph::kNumEntities; ++d) {
      auto& phrases = out[std::string(graph::chexpert_labels()[d])];
      for (std::string_view t : template_bank()[d].triggers) phrases.push_back(Tokenizer::normalize(t));
    }
    return out;
  }();
  return labeler;
}

std::vector<SampleRecord> generate_dataset(const DataOptions& options) {
  if (options.patches == 0 || options.patch_dim == 0) throw InvalidArgument("dataset: empty patch grid");
  if (options.cooccur_boost <= 0.0) throw InvalidArgument("dataset: co-occurrence boost must be positive");
  const SplitSizes sizes = split_sizes(options.samples, options.ratios);
  const auto sigs = signatures(options.patches, options.patch_dim);

  const Rng root(options.seed);
  Rng label_rng = root.derive("data/labels");
  Rng text_rng = root.derive("data/reports");
  Rng image_rng = root.derive("data/images");
  Rng split_rng = root.derive("data/split");

  const std::size_t n = options.samples;
  std::vector<SampleRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord& r = records[i];
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    r.id = id;
    const auto labels = sample_label_set(label_rng, options.cooccur_boost);
    for (std::size_t d : labels) r.labels.emplace_back(graph::chexpert_labels()[d]);
    r.report = render_report(labels, text_rng);

    r.patches.resize(options.patches * options.patch_dim);
    for (double& v : r.patches) v = options.noise * image_rng.normal();
    for (std::size_t d : labels) {
      for (std::size_t s : sigs[d].patches) {
        for (std::size_t j = 0; j < options.patch_dim; ++j) {
          r.patches[s * options.patch_dim + j] += options.signal * sigs[d].pattern[j];
        }
      }
    }
    for (double& v : r.patches) v = quantize(v);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  split_rng.shuffle(order);
  for (std::size_t k = 0; k < n; ++k) {
    records[order[k]].split = k < sizes.train ? Split::kTrain : k < sizes.train + sizes.val ? Split::kVal : Split::kTest;
  }
  return records;
}

std::string to_jsonl(const std::vector<SampleRecord>& records) {
  std::string out;
  for (const SampleRecord& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["patches"] = r.patches;
    j["labels"] = r.labels;
    j["report"] = r.report;
    j["split"] = std::string(split_name(r.split));
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SampleRecord> parse_jsonl(std::string_view text) {
  std::vector<SampleRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleRecord r;
      r.id = j.at("id").get<std::string>();
      r.patches = j.at("patches").get<std::vector<double>>();
      r.labels = j.at("labels").get<std::vector<std::string>>();
      r.report = j.at("report").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file " + path);
  out << to_jsonl(records);
  if (!out) throw IoError("failed writing dataset file " + path);
}

std::vector<SampleRecord> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str());
}

std::vector<SampleRecord> select(const std::vector<SampleRecord>& records, Split split) {
  std::vector<SampleRecord> out;
  for (const SampleRecord& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

}  // namespace kgr::data
