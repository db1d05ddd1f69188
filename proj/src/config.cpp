// SPDX-License-Identifier: Apache-2.0
#include "kgr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) +
                      "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

struct Field {
  std::string name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename T>
Field size_field(std::string name, T TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member, name](TrainConfig& c, std::string_view v) { c.*member = static_cast<T>(parse_unsigned(name, v)); }};
}

Field double_field(std::string name, double TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return format_double(c.*member); },
          [member, name](TrainConfig& c, std::string_view v) { c.*member = parse_double(name, v); }};
}

Field bool_field(std::string name, bool TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, name](TrainConfig& c, std::string_view v) { c.*member = parse_bool(name, v); }};
}

Field string_field(std::string name, std::string TrainConfig::*member) {
  return {name, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("seed", &TrainConfig::seed));
    f.push_back(double_field("learning_rate", &TrainConfig::learning_rate));
    f.push_back(size_field("batch_size", &TrainConfig::batch_size));
    f.push_back(size_field("epochs", &TrainConfig::epochs));
    f.push_back(double_field("adam_beta1", &TrainConfig::adam_beta1));
    f.push_back(double_field("adam_beta2", &TrainConfig::adam_beta2));
    f.push_back(double_field("adam_eps", &TrainConfig::adam_eps));
    f.push_back({"loss_reduction",
                 [](const TrainConfig& c) {
                   return std::string(c.loss_reduction == ad::Reduction::kSum ? "sum" : "mean");
                 },
                 [](TrainConfig& c, std::string_view v) {
                   if (v == "mean") {
                     c.loss_reduction = ad::Reduction::kMean;
                   } else if (v == "sum") {
                     c.loss_reduction = ad::Reduction::kSum;
                   } else {
                     throw ConfigError("config: loss_reduction must be mean or sum, got '" + std::string(v) + "'");
                   }
                 }});
    f.push_back(size_field("threads", &TrainConfig::threads));
    f.push_back({"fusion", [](const TrainConfig& c) { return std::string(fusion::strategy_name(c.fusion)); },
                 [](TrainConfig& c, std::string_view v) {
                   const auto s = fusion::parse_strategy(v);
                   if (!s) {
                     throw ConfigError("config: unknown fusion strategy '" + std::string(v) +
                                       "' (element, modality, average, none, disease)");
                   }
                   c.fusion = *s;
                 }});
    f.push_back(bool_field("use_gcn", &TrainConfig::use_gcn));
    f.push_back(size_field("gcn_layers", &TrainConfig::gcn_layers));
    f.push_back(bool_field("allow_gcn_layer_override", &TrainConfig::allow_gcn_layer_override));
    f.push_back(size_field("patches", &TrainConfig::patches));
    f.push_back(size_field("patch_dim", &TrainConfig::patch_dim));
    f.push_back(size_field("d_model", &TrainConfig::d_model));
    f.push_back(size_field("encoder_heads", &TrainConfig::encoder_heads));
    f.push_back(size_field("decoder_layers", &TrainConfig::decoder_layers));
    f.push_back(size_field("decoder_heads", &TrainConfig::decoder_heads));
    f.push_back(size_field("context", &TrainConfig::context));
    f.push_back(string_field("instruction", &TrainConfig::instruction));
    f.push_back(string_field("graph_file", &TrainConfig::graph_file));
    f.push_back(size_field("beam_width", &TrainConfig::beam_width));
    f.push_back(size_field("max_gen_len", &TrainConfig::max_gen_len));
    f.push_back(bool_field("length_normalize", &TrainConfig::length_normalize));
    f.push_back(bool_field("bleu_smoothing", &TrainConfig::bleu_smoothing));
    f.push_back(size_field("data_samples", &TrainConfig::data_samples));
    f.push_back(double_field("data_train_ratio", &TrainConfig::data_train_ratio));
    f.push_back(double_field("data_val_ratio", &TrainConfig::data_val_ratio));
    f.push_back(double_field("data_test_ratio", &TrainConfig::data_test_ratio));
    f.push_back(double_field("data_cooccur_boost", &TrainConfig::data_cooccur_boost));
    f.push_back(double_field("data_noise", &TrainConfig::data_noise));
    f.push_back(double_field("data_signal", &TrainConfig::data_signal));
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const Field& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void TrainConfig::set(std::string_view key, std::string_view value) { find_field(key).set(*this, trim(value)); }

std::string TrainConfig::get(std::string_view key) const { return find_field(key).get(*this); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += f.name + " = " + f.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    // The instruction is free text and may not contain '#'.
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      cfg.set(key, std::string_view(body).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(threads > 0, "threads must be positive");
  require(patches > 0 && patch_dim > 0 && d_model > 0, "patches, patch_dim and d_model must be positive");
  require(encoder_heads > 0 && d_model % encoder_heads == 0, "encoder_heads must divide d_model");
  require(decoder_heads > 0 && d_model % decoder_heads == 0, "decoder_heads must divide d_model");
  require(gcn_layers == 3 || allow_gcn_layer_override,
          "gcn_layers is fixed at 3; set allow_gcn_layer_override = true to change it");
  require(beam_width > 0 && max_gen_len > 0, "beam_width and max_gen_len must be positive");
  require(data_samples > 0, "data_samples must be positive");
  require(data_train_ratio >= 0.0 && data_val_ratio >= 0.0 && data_test_ratio >= 0.0,
          "split ratios must be non-negative");
  require(std::abs(data_train_ratio + data_val_ratio + data_test_ratio - 1.0) < 1e-9, "split ratios must sum to 1");
  require(data_cooccur_boost > 0.0, "data_cooccur_boost must be positive");
  require(data_noise >= 0.0, "data_noise must be non-negative");
}

std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b) {
  std::vector<std::string> out;
  for (const Field& f : fields()) {
    if (f.get(a) != f.get(b)) out.push_back(f.name);
  }
  return out;
}

}  // namespace kgr
