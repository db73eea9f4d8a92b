// SPDX-License-Identifier: Apache-2.0

#include "gatllm/gatllm.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <memory>
#include <mutex>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "gatllm/error.hpp"
#include "gatllm/experiment.hpp"
#include "json.hpp"

struct gatllm_config {
  std::string text;  // document as given, before overrides
  std::vector<std::string> overrides;
  gatllm::ExperimentConfig value;
};

struct gatllm_series {
  gatllm::TelemetrySeries value;
};

struct gatllm_model {
  gatllm::Forecaster value;
};

namespace {

thread_local std::string last_error;

std::mutex log_mutex;
gatllm_log_fn log_fn = nullptr;
void* log_user = nullptr;

gatllm::Logger logger() {
  return [](const std::string& message) {
    std::lock_guard<std::mutex> lock(log_mutex);
    if (log_fn) log_fn(message.c_str(), log_user);
  };
}

gatllm_status map_code(gatllm::ErrorCode code) {
  using gatllm::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return GATLLM_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return GATLLM_ERR_IO;
    case ErrorCode::Format: return GATLLM_ERR_FORMAT;
    case ErrorCode::Range: return GATLLM_ERR_RANGE;
    case ErrorCode::Shape: return GATLLM_ERR_SHAPE;
    case ErrorCode::Config: return GATLLM_ERR_CONFIG;
    case ErrorCode::ConfigMismatch: return GATLLM_ERR_CONFIG_MISMATCH;
    case ErrorCode::Checksum: return GATLLM_ERR_CHECKSUM;
    case ErrorCode::Version: return GATLLM_ERR_VERSION;
    case ErrorCode::Diverged: return GATLLM_ERR_DIVERGED;
    case ErrorCode::Data: return GATLLM_ERR_DATA;
  }
  return GATLLM_ERR_INTERNAL;
}

gatllm_status fail(gatllm_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename F>
gatllm_status guarded(F&& body) {
  try {
    body();
    return GATLLM_OK;
  } catch (const gatllm::Error& e) {
    return fail(map_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(GATLLM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GATLLM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GATLLM_ERR_INTERNAL, "unknown exception");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw gatllm::Error(gatllm::ErrorCode::InvalidArgument, std::string(name) + " is NULL");
}

std::string optional_string(const char* s) { return s ? std::string(s) : std::string(); }

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string part = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* gatllm_version(void) { return "1.0.0"; }

const char* gatllm_status_string(gatllm_status status) {
  switch (status) {
    case GATLLM_OK: return "ok";
    case GATLLM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case GATLLM_ERR_IO: return "i/o error";
    case GATLLM_ERR_FORMAT: return "malformed input";
    case GATLLM_ERR_RANGE: return "value out of range";
    case GATLLM_ERR_SHAPE: return "shape mismatch";
    case GATLLM_ERR_CONFIG: return "invalid configuration";
    case GATLLM_ERR_CONFIG_MISMATCH: return "configuration mismatch";
    case GATLLM_ERR_CHECKSUM: return "checksum mismatch";
    case GATLLM_ERR_VERSION: return "unsupported format version";
    case GATLLM_ERR_DIVERGED: return "training diverged";
    case GATLLM_ERR_DATA: return "data error";
    case GATLLM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* gatllm_last_error(void) { return last_error.c_str(); }

void gatllm_set_log_callback(gatllm_log_fn fn, void* user_data) {
  std::lock_guard<std::mutex> lock(log_mutex);
  log_fn = fn;
  log_user = user_data;
}

void gatllm_string_free(char* text) { std::free(text); }

gatllm_status gatllm_config_load(const char* path, gatllm_config** out) {
  return gatllm_config_load_overrides(path, nullptr, 0, out);
}

gatllm_status gatllm_config_load_overrides(const char* path, const char* const* overrides, size_t count,
                                           gatllm_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    if (count > 0) require(overrides, "overrides");
    auto c = std::make_unique<gatllm_config>();
    const std::string p = optional_string(path);
    if (!p.empty()) {
      std::ifstream in(p, std::ios::binary);
      if (!in) throw gatllm::Error(gatllm::ErrorCode::Io, "cannot read config " + p);
      c->text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    for (size_t i = 0; i < count; ++i) {
      require(overrides[i], "override");
      c->overrides.emplace_back(overrides[i]);
    }
    c->value = gatllm::parse_experiment(c->text, c->overrides);
    *out = c.release();
  });
}

gatllm_status gatllm_config_parse(const char* json_text, gatllm_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<gatllm_config>();
    c->text = json_text;
    c->value = gatllm::parse_experiment(c->text);
    *out = c.release();
  });
}

gatllm_status gatllm_config_set(gatllm_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    auto overrides = config->overrides;
    overrides.push_back(std::string(key) + "=" + value);
    config->value = gatllm::parse_experiment(config->text, overrides);
    config->overrides = std::move(overrides);
  });
}

gatllm_status gatllm_config_to_json(const gatllm_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = copy_string(config->value.to_text());
  });
}

gatllm_status gatllm_config_get(const gatllm_config* config, const char* key, char** out) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(out, "out");
    const auto doc = nlohmann::ordered_json::parse(config->value.to_text());
    const auto* node = &doc;
    std::string k = key;
    std::size_t start = 0;
    while (true) {
      const auto dot = k.find('.', start);
      const std::string part = k.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      const auto it = node->is_object() ? node->find(part) : node->end();
      if (!node->is_object() || it == node->end()) {
        throw gatllm::Error(gatllm::ErrorCode::Config, "config: unknown key '" + k + "'");
      }
      node = &*it;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *out = copy_string(node->dump());
  });
}

void gatllm_config_free(gatllm_config* config) { delete config; }

gatllm_status gatllm_series_load_csv(const char* path, gatllm_series** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new gatllm_series{gatllm::load_csv(path)};
  });
}

gatllm_status gatllm_series_generate(const gatllm_config* config, gatllm_series** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    if (config->value.data.source != "synthetic") {
      throw gatllm::Error(gatllm::ErrorCode::Config, "config: data.source is not synthetic");
    }
    *out = new gatllm_series{gatllm::load_series(config->value)};
  });
}

gatllm_status gatllm_series_write_csv(const gatllm_series* series, const char* path) {
  return guarded([&] {
    require(series, "series");
    require(path, "path");
    gatllm::write_csv(series->value, path);
  });
}

gatllm_status gatllm_series_shape(const gatllm_series* series, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(series, "series");
    if (rows) *rows = series->value.rows();
    if (cols) *cols = series->value.cols();
  });
}

gatllm_status gatllm_series_missing(const gatllm_series* series, size_t* count) {
  return guarded([&] {
    require(series, "series");
    require(count, "count");
    *count = series->value.missing_count();
  });
}

void gatllm_series_free(gatllm_series* series) { delete series; }

gatllm_status gatllm_train(const gatllm_config* config, gatllm_model** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    gatllm::TrainArtifacts artifacts = gatllm::run_train(config->value, logger());
    *out = new gatllm_model{std::move(artifacts.model)};
  });
}

gatllm_status gatllm_model_load(const char* path, gatllm_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new gatllm_model{gatllm::load_checkpoint(path)};
  });
}

gatllm_status gatllm_model_save(const gatllm_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    gatllm::save_checkpoint(model->value, path);
  });
}

gatllm_status gatllm_model_window(const gatllm_model* model, size_t* window) {
  return guarded([&] {
    require(model, "model");
    require(window, "window");
    *window = model->value.config().window;
  });
}

gatllm_status gatllm_model_output_dim(const gatllm_model* model, size_t* outputs) {
  return guarded([&] {
    require(model, "model");
    require(outputs, "outputs");
    *outputs = model->value.config().output_dim();
  });
}

gatllm_status gatllm_model_parameter_count(const gatllm_model* model, size_t* count) {
  return guarded([&] {
    require(model, "model");
    require(count, "count");
    *count = model->value.parameter_count();
  });
}

gatllm_status gatllm_model_forecast(const gatllm_model* model, const gatllm_series* context, size_t steps,
                                    double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(context, "context");
    require(out, "out");
    const auto& cfg = model->value.config();
    if (steps == 0) throw gatllm::Error(gatllm::ErrorCode::InvalidArgument, "steps must be positive");
    if (out_len < steps * cfg.output_dim()) {
      throw gatllm::Error(gatllm::ErrorCode::InvalidArgument,
                          "out holds " + std::to_string(out_len) + " values, need " +
                              std::to_string(steps * cfg.output_dim()));
    }
    if (!cfg.covers_all_columns()) {
      throw gatllm::Error(gatllm::ErrorCode::ConfigMismatch, "model predicts a subset of its inputs");
    }
    const auto& series = context->value;
    if (series.rows() < cfg.window) {
      throw gatllm::Error(gatllm::ErrorCode::Data, "context has " + std::to_string(series.rows()) +
                                                       " rows, model needs " + std::to_string(cfg.window));
    }
    if (series.column_names() != cfg.columns) {
      throw gatllm::Error(gatllm::ErrorCode::ConfigMismatch, "context columns differ from the model's");
    }
    const gatllm::TelemetrySeries filled = gatllm::interpolate_missing(series);
    const gatllm::Matrix context_rows = filled.values.rows_slice(filled.rows() - cfg.window, filled.rows());
    const gatllm::Forecast f =
        model->value.rollout(gatllm::normalize(context_rows, model->value.stats()), steps, series.sample_period_ms);
    for (std::size_t r = 0; r < f.values.rows(); ++r) {
      for (std::size_t c = 0; c < f.values.cols(); ++c) out[r * f.values.cols() + c] = f.values(r, c);
    }
  });
}

void gatllm_model_free(gatllm_model* model) { delete model; }

gatllm_status gatllm_generate(const gatllm_config* config, const char* out_path, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(config, "config");
    const gatllm::GenerateResult r = gatllm::run_generate(config->value, optional_string(out_path));
    if (rows) *rows = r.rows;
    if (cols) *cols = r.cols;
  });
}

gatllm_status gatllm_predict(const char* checkpoint_path, const char* data_path, size_t steps, const char* out_path) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(data_path, "data_path");
    require(out_path, "out_path");
    const std::string csv = gatllm::forecast_csv(gatllm::run_predict(checkpoint_path, data_path, steps));
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw gatllm::Error(gatllm::ErrorCode::Io, std::string("cannot write ") + out_path);
    out << csv;
    out.flush();
    if (!out) throw gatllm::Error(gatllm::ErrorCode::Io, std::string("write failed: ") + out_path);
  });
}

gatllm_status gatllm_evaluate(const gatllm_config* config, const char* schemes, const char* checkpoint_path) {
  return guarded([&] {
    require(config, "config");
    gatllm::run_evaluate(config->value, split_names(optional_string(schemes)), optional_string(checkpoint_path),
                         logger());
  });
}

gatllm_status gatllm_compare(const char* const* report_paths, size_t count, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    if (count > 0) require(report_paths, "report_paths");
    std::vector<std::string> paths;
    for (size_t i = 0; i < count; ++i) {
      require(report_paths[i], "report path");
      paths.emplace_back(report_paths[i]);
    }
    gatllm::run_compare(paths, out_dir);
  });
}

}  // extern "C"
