// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/fusion.hpp"
#include "kgr/ops.hpp"

namespace kgr {

/// Every knob of a run. The text form is a flat `key = value` document;
/// `#` starts a comment.
struct TrainConfig {
  std::uint64_t seed = 42;

  // Optimization.
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ad::Reduction loss_reduction = ad::Reduction::kMean;
  std::size_t threads = 1;

  // Model.
  fusion::Strategy fusion = fusion::Strategy::kModality;
  bool use_gcn = true;
  std::size_t gcn_layers = 3;
  bool allow_gcn_layer_override = false;
  std::size_t patches = 16;
  std::size_t patch_dim = 32;
  std::size_t d_model = 128;
  std::size_t encoder_heads = 4;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 4;
  std::size_t context = 128;
  std::string instruction = "Generate a comprehensive and detailed diagnosis report for this radiology image.";
  std::string graph_file;

  // Decoding and evaluation.
  std::size_t beam_width = 3;
  std::size_t max_gen_len = 64;
  bool length_normalize = false;
  bool bleu_smoothing = false;

  // Synthetic data.
  std::size_t data_samples = 704;
  double data_train_ratio = 8.0 / 11.0;
  double data_val_ratio = 1.0 / 11.0;
  double data_test_ratio = 2.0 / 11.0;
  double data_cooccur_boost = 3.0;
  double data_noise = 0.5;
  double data_signal = 1.0;

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  std::string to_text() const;
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::string& path);

  /// Checks ranges and cross-field consistency; throws ConfigError.
  void validate() const;
};

/// Keys whose values differ between two configurations.
std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b);

}  // namespace kgr
