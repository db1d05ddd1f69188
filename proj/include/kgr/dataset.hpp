// SPDX-License-Identifier: Apache-2.0
//
// Synthetic chest-image/report corpus. Each present disease adds a fixed
// signature to a fixed subset of patches on top of seeded noise, and the
// report names exactly those diseases through template sentences.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/metrics.hpp"
#include "kgr/rng.hpp"

namespace kgr::data {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct SampleRecord {
  std::string id;
  std::vector<double> patches;  // row-major patches x patch_dim
  std::vector<std::string> labels;
  std::string report;
  Split split = Split::kTrain;
};

struct DataOptions {
  std::uint64_t seed = 42;
  std::size_t samples = 704;
  std::array<double, 3> ratios = {8.0 / 11.0, 1.0 / 11.0, 2.0 / 11.0};  // train, val, test
  std::size_t patches = 16;
  std::size_t patch_dim = 32;
  double cooccur_boost = 3.0;  // weight of a same-region pair relative to a cross-region pair
  double noise = 0.5;
  double signal = 1.0;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// Train and val sizes are rounded to nearest; test takes the rest.
/// Throws InvalidArgument when the ratios do not sum to 1 or a split
/// would be empty.
SplitSizes split_sizes(std::size_t n, const std::array<double, 3>& ratios);

/// One label set drawn from the co-occurrence model. Indices refer to
/// the CheXpert label order; {0} is "No Finding".
std::vector<std::size_t> sample_label_set(Rng& rng, double cooccur_boost);

/// Report text for a label set, phrasing and filler drawn from `rng`.
std::string render_report(const std::vector<std::size_t>& labels, Rng& rng);

/// Trigger phrases per label for the template bank above.
const metrics::Labeler& default_labeler();

std::vector<SampleRecord> generate_dataset(const DataOptions& options);

/// One JSON object per line with fields id, patches, labels, report, split.
std::string to_jsonl(const std::vector<SampleRecord>& records);
std::vector<SampleRecord> parse_jsonl(std::string_view text);

void write_dataset(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_dataset(const std::string& path);

std::vector<SampleRecord> select(const std::vector<SampleRecord>& records, Split split);

}  // namespace kgr::data
