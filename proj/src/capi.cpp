// SPDX-License-Identifier: Apache-2.0
#include "kgr/kgr.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "kgr/checkpoint.hpp"
#include "kgr/error.hpp"
#include "kgr/harness.hpp"

struct kgr_config {
  kgr::TrainConfig cfg;
};

struct kgr_dataset {
  std::vector<kgr::data::SampleRecord> records;
};

struct kgr_model {
  explicit kgr_model(kgr::ReportModel m) : model(std::move(m)) {}
  kgr::ReportModel model;
};

namespace {

thread_local std::string last_error;

template <typename Fn>
kgr_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return KGR_OK;
  } catch (const kgr::DimensionError& e) {
    last_error = e.what();
    return KGR_ERR_DIMENSION;
  } catch (const kgr::ConfigError& e) {
    last_error = e.what();
    return KGR_ERR_CONFIG;
  } catch (const kgr::FormatError& e) {
    last_error = e.what();
    return KGR_ERR_FORMAT;
  } catch (const kgr::IoError& e) {
    last_error = e.what();
    return KGR_ERR_IO;
  } catch (const kgr::DivergenceError& e) {
    last_error = e.what();
    return KGR_ERR_DIVERGENCE;
  } catch (const kgr::InvalidArgument& e) {
    last_error = e.what();
    return KGR_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KGR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KGR_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw kgr::InvalidArgument(std::string(what) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

std::vector<kgr::data::SampleRecord> pick(const kgr_dataset* data, kgr_split split) {
  switch (split) {
    case KGR_SPLIT_TRAIN:
      return kgr::data::select(data->records, kgr::data::Split::kTrain);
    case KGR_SPLIT_VAL:
      return kgr::data::select(data->records, kgr::data::Split::kVal);
    case KGR_SPLIT_TEST:
      return kgr::data::select(data->records, kgr::data::Split::kTest);
    case KGR_SPLIT_ALL:
      return data->records;
  }
  throw kgr::InvalidArgument("unknown split " + std::to_string(static_cast<int>(split)));
}

}  // namespace

extern "C" {

const char* kgr_version(void) { return "0.1.0"; }

const char* kgr_last_error(void) { return last_error.c_str(); }

const char* kgr_status_name(kgr_status status) {
  switch (status) {
    case KGR_OK:
      return "ok";
    case KGR_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case KGR_ERR_DIMENSION:
      return "dimension error";
    case KGR_ERR_CONFIG:
      return "config error";
    case KGR_ERR_FORMAT:
      return "format error";
    case KGR_ERR_IO:
      return "io error";
    case KGR_ERR_DIVERGENCE:
      return "divergence";
    case KGR_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

void kgr_string_free(char* s) { std::free(s); }

kgr_status kgr_config_create(kgr_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new kgr_config{};
  });
}

kgr_status kgr_config_load(const char* path, kgr_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new kgr_config{kgr::TrainConfig::load(path)};
  });
}

kgr_status kgr_config_parse(const char* text, kgr_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new kgr_config{kgr::TrainConfig::parse(text)};
  });
}

kgr_status kgr_config_set(kgr_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
  });
}

kgr_status kgr_config_get(const kgr_config* cfg, const char* key, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(out, "out");
    *out = dup(cfg->cfg.get(key));
  });
}

kgr_status kgr_config_to_text(const kgr_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup(cfg->cfg.to_text());
  });
}

void kgr_config_destroy(kgr_config* cfg) { delete cfg; }

kgr_status kgr_dataset_generate(const kgr_config* cfg, kgr_dataset** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    const kgr::TrainConfig& c = cfg->cfg;
    c.validate();
    kgr::data::DataOptions o;
    o.seed = c.seed;
    o.samples = c.data_samples;
    o.ratios = {c.data_train_ratio, c.data_val_ratio, c.data_test_ratio};
    o.patches = c.patches;
    o.patch_dim = c.patch_dim;
    o.cooccur_boost = c.data_cooccur_boost;
    o.noise = c.data_noise;
    o.signal = c.data_signal;
    *out = new kgr_dataset{kgr::data::generate_dataset(o)};
  });
}

kgr_status kgr_dataset_load(const char* path, kgr_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new kgr_dataset{kgr::data::read_dataset(path)};
  });
}

kgr_status kgr_dataset_save(const kgr_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    kgr::data::write_dataset(path, data->records);
  });
}

kgr_status kgr_dataset_size(const kgr_dataset* data, kgr_split split, size_t* out) {
  return guarded([&] {
    require(data, "data");
    require(out, "out");
    *out = pick(data, split).size();
  });
}

void kgr_dataset_destroy(kgr_dataset* data) { delete data; }

kgr_status kgr_train(const kgr_config* cfg, const kgr_dataset* data, kgr_epoch_callback on_epoch, void* user,
                     kgr_model** out_model, char** curve_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data, "data");
    require(out_model, "out_model");
    auto holder = std::make_unique<kgr_model>(kgr::build_model(cfg->cfg, data->records));
    const auto train_set = kgr::make_examples(holder->model, kgr::data::select(data->records, kgr::data::Split::kTrain));
    const auto val_set = kgr::make_examples(holder->model, kgr::data::select(data->records, kgr::data::Split::kVal));
    kgr::EpochCallback cb;
    if (on_epoch) cb = [&](const kgr::EpochStats& s) { on_epoch(s.epoch, s.train_loss, s.val_loss, user); };
    const kgr::TrainResult result = kgr::train(holder->model, train_set, val_set, cb);
    emit(curve_json, kgr::to_json(result).dump(2) + "\n");
    *out_model = holder.release();
  });
}

kgr_status kgr_model_save(const kgr_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    kgr::save_checkpoint(path, model->model);
  });
}

kgr_status kgr_model_load(const char* path, kgr_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new kgr_model(kgr::load_checkpoint(path));
  });
}

kgr_status kgr_model_config(const kgr_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = dup(model->model.config().to_text());
  });
}

kgr_status kgr_model_gcn_calls(const kgr_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.gcn_calls();
  });
}

void kgr_model_destroy(kgr_model* model) { delete model; }

kgr_status kgr_evaluate(const kgr_model* model, const kgr_dataset* data, kgr_split split, int bypass,
                        char** metrics_json, char** generations_jsonl) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    kgr::EvalOptions opts;
    opts.bypass = bypass != 0;
    const kgr::EvalResult r = kgr::evaluate_model(model->model, pick(data, split), opts);
    emit(metrics_json, kgr::metrics::to_json(r.report).dump(2) + "\n");
    emit(generations_jsonl, kgr::generations_jsonl(model->model, r.generations));
  });
}

kgr_status kgr_ablate(const kgr_config* cfg, const kgr_dataset* data, const uint64_t* seeds, size_t n_seeds,
                      const char* rows, kgr_ablation_callback on_run, void* user, char** table_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data, "data");
    require(seeds, "seeds");
    std::vector<std::string> only;
    if (rows) {
      for (const char* c = rows; *c; ++c) only.emplace_back(1, *c);
    }
    kgr::AblationCallback cb;
    if (on_run) {
      cb = [&](const std::string& row, const kgr::AblationSeedResult& r) {
        on_run(row.c_str(), r.seed, r.clinical_f1, r.error.empty() ? nullptr : r.error.c_str(), user);
      };
    }
    const auto table =
        kgr::run_ablation(cfg->cfg, data->records, std::vector<std::uint64_t>(seeds, seeds + n_seeds), only, cb);
    emit(table_json, kgr::to_json(table).dump(2) + "\n");
  });
}

kgr_status kgr_gradcheck(uint64_t seed, double tolerance, char** report_json, int* all_pass) {
  return guarded([&] {
    const auto entries = kgr::gradient_suite(seed);
    bool pass = true;
    nlohmann::ordered_json j;
    j["schema_version"] = kgr::kReportSchemaVersion;
    j["tolerance"] = tolerance;
    auto& checks = j["checks"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
      const bool ok = e.result.max_rel_error < tolerance;
      pass = pass && ok;
      checks.push_back({{"name", e.name},
                        {"max_rel_error", e.result.max_rel_error},
                        {"coordinates", e.result.coordinates},
                        {"worst_input", e.result.worst_input},
                        {"worst_index", e.result.worst_index},
                        {"analytic", e.result.analytic},
                        {"numeric", e.result.numeric},
                        {"pass", ok}});
    }
    j["pass"] = pass;
    if (all_pass) *all_pass = pass ? 1 : 0;
    emit(report_json, j.dump(2) + "\n");
  });
}

kgr_status kgr_metrics_from_files(const char* candidates, const char* references, int bleu_smoothing,
                                  char** metrics_json) {
  return guarded([&] {
    require(candidates, "candidates");
    require(references, "references");
    kgr::metrics::BleuOptions bo;
    bo.smoothing = bleu_smoothing != 0;
    const auto report = kgr::metrics::evaluate_corpus(kgr::metrics::read_pair_files(candidates, references),
                                                      kgr::data::default_labeler(), bo);
    emit(metrics_json, kgr::metrics::to_json(report).dump(2) + "\n");
  });
}

kgr_status kgr_graph_adjacency(const char* override_path, char** out) {
  return guarded([&] {
    require(out, "out");
    const auto g = override_path && *override_path ? kgr::graph::load_graph_override(override_path)
                                                   : kgr::graph::build_chexpert_graph();
    *out = dup(g.adjacency_text());
  });
}

}  // extern "C"
