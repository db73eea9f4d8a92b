// SPDX-License-Identifier: Apache-2.0
//
// Experiment documents and the pipelines behind the command-line tool.
//
// An experiment is a JSON document. The default document doubles as the
// schema: every key a user supplies must exist in it with a compatible type,
// so unknown or mistyped keys are rejected before any work starts.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gatllm/eval.hpp"
#include "gatllm/forecaster.hpp"
#include "gatllm/telemetry.hpp"

namespace gatllm {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  std::string csv_path;
  int sample_period_ms = 1;
  std::size_t interpolation_points = 4;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  SyntheticConfig synthetic;  // seed comes from the experiment seed
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DataConfig data;

  std::size_t window = 20;         // tau
  std::size_t train_stride = 19;   // spacing of training windows

  EmbeddingKind embedding = EmbeddingKind::Gat;
  std::vector<std::string> targets;                  // empty: every column
  std::vector<std::vector<std::uint8_t>> adjacency;  // empty: complete graph
  GatConfig gat;
  BackboneConfig backbone;
  bool nonlinear_head = false;
  std::size_t head_hidden = 64;

  TrainConfig train;

  std::size_t horizon = 10;  // rollout length l
  std::size_t eval_stride = 1;
  std::size_t eval_batch = 256;
  std::vector<std::string> variables;  // reported variables
  std::vector<std::string> schemes;

  std::size_t var_p = 2;
  std::size_t var_d = 0;

  ExperimentConfig();

  /// Canonical JSON with every key; parsing it back gives an equal config.
  std::string to_text() const;
  /// crc32 of `to_text()`, 8 hex digits.
  std::string digest() const;
  void validate() const;
};

/// Parses a document, applies `key.path=value` overrides in order, and
/// validates. Values that parse as JSON are taken as JSON, others as strings.
/// Throws `Error` with code Config on any schema violation.
ExperimentConfig parse_experiment(const std::string& text, const std::vector<std::string>& overrides = {});
/// Empty path: defaults plus overrides.
ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides = {});

/// Scheme names accepted in `schemes`: gatllm plus the baseline names.
const std::vector<std::string>& known_schemes();

using Logger = std::function<void(const std::string& message)>;

/// Series after loading or generation, gap filling, splitting and scaling.
struct PreparedData {
  TelemetrySeries series;  // gaps filled, original units
  std::size_t missing_filled = 0;
  Split split;
  NormalizationStats stats;  // fitted on the training rows
  Matrix normalized;
  std::vector<std::string> names;
};

TelemetrySeries load_series(const ExperimentConfig& config);
PreparedData prepare_data(const ExperimentConfig& config);
ForecasterConfig model_config(const ExperimentConfig& config, const std::vector<std::string>& names);

struct GenerateResult {
  std::string path;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Writes the synthetic series. Empty `path` means `<output_dir>/data.csv`.
GenerateResult run_generate(const ExperimentConfig& config, const std::string& path = {});

struct TrainArtifacts {
  Forecaster model;
  TrainResult result;
  std::string checkpoint_path;
  std::string loss_path;
};

/// Trains the main model; writes model.ckpt, loss.csv and config.json into
/// the output directory.
TrainArtifacts run_train(const ExperimentConfig& config, const Logger& log = {});

/// Forecast from the last `window` rows of a CSV file, original units.
Forecast run_predict(const std::string& checkpoint_path, const std::string& data_path, std::size_t steps);
/// Header step,horizon_ms,<columns>.
std::string forecast_csv(const Forecast& forecast);

struct EvaluateArtifacts {
  std::vector<MetricsReport> reports;
  Comparison comparison;
  std::vector<std::string> files;
};

/// Runs `schemes` (the configured list when empty) over the test rows and
/// writes report_<scheme>.csv, metadata.json, comparison.csv and one SVG per
/// variable. A non-empty `checkpoint_path` replaces training of the main model.
EvaluateArtifacts run_evaluate(const ExperimentConfig& config, const std::vector<std::string>& schemes = {},
                               const std::string& checkpoint_path = {}, const Logger& log = {});

/// Merges report CSV files and writes the comparison artifacts into `dir`.
EvaluateArtifacts run_compare(const std::vector<std::string>& report_paths, const std::string& dir);

}  // namespace gatllm
