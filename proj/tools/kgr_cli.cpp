// SPDX-License-Identifier: Apache-2.0
//
// kgr: command-line front end over the C API.
//
//   kgr gen-data  --out-dir data
//   kgr train     --data data/dataset.jsonl --out-dir run
//   kgr evaluate  --checkpoint run/model.kgn --data data/dataset.jsonl --out-dir run
//   kgr ablate    --data data/dataset.jsonl --seeds 1,2,3 --out-dir ablation
//   kgr gradcheck --out-dir checks
//   kgr metrics   --candidates c.tsv --references r.tsv
//   kgr graph     [--override graph.txt]
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgr/kgr.h"

namespace {

struct Failure {
  int code;
};

void check(kgr_status s, const char* what) {
  if (s != KGR_OK) {
    std::cerr << "kgr: " << what << ": " << kgr_status_name(s) << ": " << kgr_last_error() << "\n";
    throw Failure{static_cast<int>(s)};
  }
}

std::string take(char* s) {
  std::string out = s ? s : "";
  kgr_string_free(s);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::cerr << "kgr: cannot write " << path << "\n";
    throw Failure{KGR_ERR_IO};
  }
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "seed (overrides the config)");
    cmd->add_option("--out-dir", out_dir, "directory for outputs");
    cmd->add_option("--set", overrides, "key=value override, repeatable");
  }

  kgr_config* config() const {
    kgr_config* cfg = nullptr;
    if (config_path.empty()) {
      check(kgr_config_create(&cfg), "config");
    } else {
      check(kgr_config_load(config_path.c_str(), &cfg), "config");
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        kgr_config_destroy(cfg);
        std::cerr << "kgr: --set expects key=value, got '" << kv << "'\n";
        throw Failure{KGR_ERR_CONFIG};
      }
      check(kgr_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "config");
    }
    if (seed) check(kgr_config_set(cfg, "seed", std::to_string(*seed).c_str()), "config");
    return cfg;
  }

  std::filesystem::path dir() const {
    std::filesystem::create_directories(out_dir);
    return out_dir;
  }
};

kgr_split parse_split(const std::string& s) {
  if (s == "train") return KGR_SPLIT_TRAIN;
  if (s == "val") return KGR_SPLIT_VAL;
  if (s == "test") return KGR_SPLIT_TEST;
  return KGR_SPLIT_ALL;
}

void on_epoch(size_t epoch, double train_loss, double val_loss, void*) {
  std::fprintf(stderr, "epoch %3zu  train %.6f  val %.6f\n", epoch, train_loss, val_loss);
}

void on_ablation_run(const char* row, uint64_t seed, double f1, const char* error, void*) {
  if (error) {
    std::fprintf(stderr, "row %s seed %llu failed: %s\n", row, static_cast<unsigned long long>(seed), error);
  } else {
    std::fprintf(stderr, "row %s seed %llu ClinicalF1 %.4f\n", row, static_cast<unsigned long long>(seed), f1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph guided report generation"};
  app.require_subcommand(1);

  Common gen_common, train_common, eval_common, ablate_common, grad_common;
  std::string data_path, checkpoint, split = "test", candidates, references, graph_override, rows;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool bypass = false, smoothing = false;
  double tolerance = 1e-4;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen_common.attach(gen);

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train_common.attach(train);
  train->add_option("--data", data_path, "dataset file")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "generate reports and score them");
  eval_common.attach(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_path, "dataset file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  evaluate->add_flag("--bypass", bypass, "score references against themselves");

  auto* ablate = app.add_subcommand("ablate", "run the six-row ablation");
  ablate_common.attach(ablate);
  ablate->add_option("--data", data_path, "dataset file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "model seeds")->delimiter(',');
  ablate->add_option("--rows", rows, "subset of rows, e.g. af");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_common.attach(grad);
  grad->add_option("--tolerance", tolerance, "maximum relative error");

  auto* metrics = app.add_subcommand("metrics", "score id<TAB>text candidate and reference files");
  metrics->add_option("--candidates", candidates)->required()->check(CLI::ExistingFile);
  metrics->add_option("--references", references)->required()->check(CLI::ExistingFile);
  metrics->add_flag("--bleu-smoothing", smoothing);

  auto* graph = app.add_subcommand("graph", "print the knowledge-graph adjacency");
  graph->add_option("--override", graph_override, "graph override file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      kgr_config* cfg = gen_common.config();
      kgr_dataset* data = nullptr;
      check(kgr_dataset_generate(cfg, &data), "gen-data");
      const auto path = gen_common.dir() / "dataset.jsonl";
      check(kgr_dataset_save(data, path.c_str()), "gen-data");
      size_t n = 0;
      kgr_dataset_size(data, KGR_SPLIT_ALL, &n);
      std::cout << "wrote " << n << " samples to " << path.string() << "\n";
      kgr_dataset_destroy(data);
      kgr_config_destroy(cfg);
    } else if (train->parsed()) {
      kgr_config* cfg = train_common.config();
      kgr_dataset* data = nullptr;
      check(kgr_dataset_load(data_path.c_str(), &data), "train");
      kgr_model* model = nullptr;
      char* curve = nullptr;
      check(kgr_train(cfg, data, on_epoch, nullptr, &model, &curve), "train");
      const auto dir = train_common.dir();
      check(kgr_model_save(model, (dir / "model.kgn").c_str()), "train");
      write_file(dir / "loss_curve.json", take(curve));
      std::cout << "wrote " << (dir / "model.kgn").string() << "\n";
      kgr_model_destroy(model);
      kgr_dataset_destroy(data);
      kgr_config_destroy(cfg);
    } else if (evaluate->parsed()) {
      kgr_model* model = nullptr;
      check(kgr_model_load(checkpoint.c_str(), &model), "evaluate");
      kgr_dataset* data = nullptr;
      check(kgr_dataset_load(data_path.c_str(), &data), "evaluate");
      char* report = nullptr;
      char* generations = nullptr;
      check(kgr_evaluate(model, data, parse_split(split), bypass ? 1 : 0, &report, &generations), "evaluate");
      const auto dir = eval_common.dir();
      const std::string text = take(report);
      write_file(dir / "metrics.json", text);
      write_file(dir / "generations.jsonl", take(generations));
      std::cout << text;
      kgr_dataset_destroy(data);
      kgr_model_destroy(model);
    } else if (ablate->parsed()) {
      kgr_config* cfg = ablate_common.config();
      kgr_dataset* data = nullptr;
      check(kgr_dataset_load(data_path.c_str(), &data), "ablate");
      char* table = nullptr;
      check(kgr_ablate(cfg, data, seeds.data(), seeds.size(), rows.c_str(), on_ablation_run, nullptr, &table),
            "ablate");
      const std::string text = take(table);
      write_file(ablate_common.dir() / "ablation.json", text);
      std::cout << text;
      kgr_dataset_destroy(data);
      kgr_config_destroy(cfg);
    } else if (grad->parsed()) {
      kgr_config* cfg = grad_common.config();
      char* seed_text = nullptr;
      check(kgr_config_get(cfg, "seed", &seed_text), "gradcheck");
      const std::uint64_t seed = std::stoull(take(seed_text));
      kgr_config_destroy(cfg);
      char* report = nullptr;
      int pass = 0;
      check(kgr_gradcheck(seed, tolerance, &report, &pass), "gradcheck");
      const std::string text = take(report);
      write_file(grad_common.dir() / "gradcheck.json", text);
      std::cout << text;
      return pass ? 0 : 1;
    } else if (metrics->parsed()) {
      char* report = nullptr;
      check(kgr_metrics_from_files(candidates.c_str(), references.c_str(), smoothing ? 1 : 0, &report), "metrics");
      std::cout << take(report);
    } else if (graph->parsed()) {
      char* text = nullptr;
      check(kgr_graph_adjacency(graph_override.empty() ? nullptr : graph_override.c_str(), &text), "graph");
      std::cout << take(text);
    }
  } catch (const Failure& f) {
    return f.code == 0 ? 1 : f.code;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "kgr: " << e.what() << "\n";
    return KGR_ERR_IO;
  }
  return 0;
}
