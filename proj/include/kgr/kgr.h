/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the report-generation pipeline. Objects are opaque
 * handles released with their destroy function. Every call returns a
 * kgr_status; on failure kgr_last_error() describes the problem for the
 * calling thread. Strings handed out by the library are released with
 * kgr_string_free.
 */
#ifndef KGR_KGR_H
#define KGR_KGR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KGR_API __declspec(dllexport)
#else
#define KGR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kgr_status {
  KGR_OK = 0,
  KGR_ERR_INVALID_ARGUMENT = 1,
  KGR_ERR_DIMENSION = 2,
  KGR_ERR_CONFIG = 3,
  KGR_ERR_FORMAT = 4,
  KGR_ERR_IO = 5,
  KGR_ERR_DIVERGENCE = 6,
  KGR_ERR_INTERNAL = 7
} kgr_status;

typedef enum kgr_split { KGR_SPLIT_TRAIN = 0, KGR_SPLIT_VAL = 1, KGR_SPLIT_TEST = 2, KGR_SPLIT_ALL = 3 } kgr_split;

typedef struct kgr_config kgr_config;
typedef struct kgr_dataset kgr_dataset;
typedef struct kgr_model kgr_model;

KGR_API const char* kgr_version(void);
/* Message for the last failed call on this thread; "" when none. */
KGR_API const char* kgr_last_error(void);
KGR_API const char* kgr_status_name(kgr_status status);
KGR_API void kgr_string_free(char* s);

/* Configuration: flat key = value fields, all addressable by name. */
KGR_API kgr_status kgr_config_create(kgr_config** out);
KGR_API kgr_status kgr_config_load(const char* path, kgr_config** out);
KGR_API kgr_status kgr_config_parse(const char* text, kgr_config** out);
KGR_API kgr_status kgr_config_set(kgr_config* cfg, const char* key, const char* value);
KGR_API kgr_status kgr_config_get(const kgr_config* cfg, const char* key, char** out);
KGR_API kgr_status kgr_config_to_text(const kgr_config* cfg, char** out);
KGR_API void kgr_config_destroy(kgr_config* cfg);

/* Synthetic corpus from the data_* fields and seed of `cfg`. */
KGR_API kgr_status kgr_dataset_generate(const kgr_config* cfg, kgr_dataset** out);
KGR_API kgr_status kgr_dataset_load(const char* path, kgr_dataset** out);
KGR_API kgr_status kgr_dataset_save(const kgr_dataset* data, const char* path);
KGR_API kgr_status kgr_dataset_size(const kgr_dataset* data, kgr_split split, size_t* out);
KGR_API void kgr_dataset_destroy(kgr_dataset* data);

typedef void (*kgr_epoch_callback)(size_t epoch, double train_loss, double val_loss, void* user);

/* Trains a fresh model on the train split, validating on val. The loss
 * curve is returned as a JSON document when `curve_json` is non-null. */
KGR_API kgr_status kgr_train(const kgr_config* cfg, const kgr_dataset* data, kgr_epoch_callback on_epoch, void* user,
                             kgr_model** out_model, char** curve_json);
KGR_API kgr_status kgr_model_save(const kgr_model* model, const char* path);
KGR_API kgr_status kgr_model_load(const char* path, kgr_model** out);
/* Config snapshot held by the model. */
KGR_API kgr_status kgr_model_config(const kgr_model* model, char** out);
/* gcn_layer invocations since the model was created or loaded. */
KGR_API kgr_status kgr_model_gcn_calls(const kgr_model* model, size_t* out);
KGR_API void kgr_model_destroy(kgr_model* model);

/* Beam-search generation and metrics over one split. With `bypass` the
 * references are scored against themselves. Either output may be null. */
KGR_API kgr_status kgr_evaluate(const kgr_model* model, const kgr_dataset* data, kgr_split split, int bypass,
                                char** metrics_json, char** generations_jsonl);

typedef void (*kgr_ablation_callback)(const char* row, uint64_t seed, double clinical_f1, const char* error,
                                      void* user);

/* Six-row ablation over `seeds`. `rows` selects rows by letter ("af");
 * null or "" runs all of them. */
KGR_API kgr_status kgr_ablate(const kgr_config* cfg, const kgr_dataset* data, const uint64_t* seeds, size_t n_seeds,
                              const char* rows, kgr_ablation_callback on_run, void* user, char** table_json);

/* Finite-difference gradient checks; `all_pass` is set when every check
 * is below `tolerance`. */
KGR_API kgr_status kgr_gradcheck(uint64_t seed, double tolerance, char** report_json, int* all_pass);

/* Metrics for "<id>\t<text>" candidate and reference files. */
KGR_API kgr_status kgr_metrics_from_files(const char* candidates, const char* references, int bleu_smoothing,
                                          char** metrics_json);

/* 0/1 adjacency rows of the default graph, or of an override file. */
KGR_API kgr_status kgr_graph_adjacency(const char* override_path, char** out);

#ifdef __cplusplus
}
#endif

#endif /* KGR_KGR_H */
