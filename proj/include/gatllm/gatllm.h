/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the link-quality forecaster.
 *
 * Every function returns a gatllm_status. On failure the thread-local
 * message from gatllm_last_error() describes the cause; it stays valid until
 * the next failing call on the same thread. Objects are opaque handles owned
 * by the caller and released with the matching *_free function, which accepts
 * NULL. Strings returned through char** are released with gatllm_string_free.
 */

#ifndef GATLLM_GATLLM_H
#define GATLLM_GATLLM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GATLLM_API __declspec(dllexport)
#elif defined(__GNUC__)
#define GATLLM_API __attribute__((visibility("default")))
#else
#define GATLLM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gatllm_status {
  GATLLM_OK = 0,
  GATLLM_ERR_INVALID_ARGUMENT = 1,
  GATLLM_ERR_IO = 2,
  GATLLM_ERR_FORMAT = 3,
  GATLLM_ERR_RANGE = 4,
  GATLLM_ERR_SHAPE = 5,
  GATLLM_ERR_CONFIG = 6,
  GATLLM_ERR_CONFIG_MISMATCH = 7,
  GATLLM_ERR_CHECKSUM = 8,
  GATLLM_ERR_VERSION = 9,
  GATLLM_ERR_DIVERGED = 10,
  GATLLM_ERR_DATA = 11,
  GATLLM_ERR_INTERNAL = 12
} gatllm_status;

typedef struct gatllm_config gatllm_config;
typedef struct gatllm_series gatllm_series;
typedef struct gatllm_model gatllm_model;

/* Receives progress lines from long-running calls. */
typedef void (*gatllm_log_fn)(const char* message, void* user_data);

GATLLM_API const char* gatllm_version(void);
GATLLM_API const char* gatllm_status_string(gatllm_status status);
GATLLM_API const char* gatllm_last_error(void);
/* Process-wide; NULL disables logging. */
GATLLM_API void gatllm_set_log_callback(gatllm_log_fn fn, void* user_data);
GATLLM_API void gatllm_string_free(char* text);

/* Experiment configuration ------------------------------------------------ */

/* path NULL or "" gives the defaults. */
GATLLM_API gatllm_status gatllm_config_load(const char* path, gatllm_config** out);
/* As above, then applies KEY=VALUE overrides in order and validates once. */
GATLLM_API gatllm_status gatllm_config_load_overrides(const char* path, const char* const* overrides, size_t count,
                                                      gatllm_config** out);
GATLLM_API gatllm_status gatllm_config_parse(const char* json_text, gatllm_config** out);
/* Overrides one key, e.g. key "train.epochs", value "5". Revalidates. */
GATLLM_API gatllm_status gatllm_config_set(gatllm_config* config, const char* key, const char* value);
/* JSON text of one value, e.g. key "output_dir" gives "\"out\"". */
GATLLM_API gatllm_status gatllm_config_get(const gatllm_config* config, const char* key, char** out);
/* Canonical JSON holding every key. */
GATLLM_API gatllm_status gatllm_config_to_json(const gatllm_config* config, char** out);
GATLLM_API void gatllm_config_free(gatllm_config* config);

/* Telemetry series --------------------------------------------------------- */

GATLLM_API gatllm_status gatllm_series_load_csv(const char* path, gatllm_series** out);
/* Synthetic series described by the configuration. */
GATLLM_API gatllm_status gatllm_series_generate(const gatllm_config* config, gatllm_series** out);
GATLLM_API gatllm_status gatllm_series_write_csv(const gatllm_series* series, const char* path);
GATLLM_API gatllm_status gatllm_series_shape(const gatllm_series* series, size_t* rows, size_t* cols);
/* Missing cells count as one each. */
GATLLM_API gatllm_status gatllm_series_missing(const gatllm_series* series, size_t* count);
GATLLM_API void gatllm_series_free(gatllm_series* series);

/* Models ------------------------------------------------------------------- */

/* Full training pipeline; writes model.ckpt, loss.csv and config.json into
 * the configured output directory. */
GATLLM_API gatllm_status gatllm_train(const gatllm_config* config, gatllm_model** out);
GATLLM_API gatllm_status gatllm_model_load(const char* path, gatllm_model** out);
GATLLM_API gatllm_status gatllm_model_save(const gatllm_model* model, const char* path);
GATLLM_API gatllm_status gatllm_model_window(const gatllm_model* model, size_t* window);
GATLLM_API gatllm_status gatllm_model_output_dim(const gatllm_model* model, size_t* outputs);
GATLLM_API gatllm_status gatllm_model_parameter_count(const gatllm_model* model, size_t* count);
/* Rolls out `steps` rows from the last window of `context` (original units,
 * gaps filled first). `out` receives steps x outputs values, row-major. */
GATLLM_API gatllm_status gatllm_model_forecast(const gatllm_model* model, const gatllm_series* context, size_t steps,
                                               double* out, size_t out_len);
GATLLM_API void gatllm_model_free(gatllm_model* model);

/* Commands ----------------------------------------------------------------- */

/* out_path NULL or "" writes <output_dir>/data.csv. */
GATLLM_API gatllm_status gatllm_generate(const gatllm_config* config, const char* out_path, size_t* rows,
                                         size_t* cols);
/* Writes a forecast CSV (step, horizon_ms, one column per output). */
GATLLM_API gatllm_status gatllm_predict(const char* checkpoint_path, const char* data_path, size_t steps,
                                        const char* out_path);
/* schemes: comma-separated names, NULL or "" for the configured list.
 * checkpoint_path NULL or "" trains the main model. */
GATLLM_API gatllm_status gatllm_evaluate(const gatllm_config* config, const char* schemes,
                                         const char* checkpoint_path);
GATLLM_API gatllm_status gatllm_compare(const char* const* report_paths, size_t count, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* GATLLM_GATLLM_H */
