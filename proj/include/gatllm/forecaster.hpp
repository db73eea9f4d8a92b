// SPDX-License-Identifier: Apache-2.0
//
// The end-to-end link-quality forecaster: per-timestep graph attention over
// the variables, token projection, learnable positions, causal decoder and an
// output head predicting the next row at every position.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gatllm/backbone.hpp"
#include "gatllm/gat.hpp"
#include "gatllm/matrix.hpp"
#include "gatllm/telemetry.hpp"
#include "gatllm/tensor.hpp"

namespace gatllm {

/// How each timestep's N values become a token.
enum class EmbeddingKind {
  Gat,     // graph attention, flatten, affine projection
  Direct,  // affine lift of the raw N-vector (no cross-variable attention)
};

struct ForecasterConfig {
  std::size_t window = 20;                // tau
  std::vector<std::string> columns;       // input variables, N = columns.size()
  std::vector<std::size_t> target_columns;  // M outputs, indices into columns
  GatConfig gat;
  /// Row-major N x N adjacency; empty means the complete graph.
  std::vector<std::uint8_t> adjacency;
  BackboneConfig backbone;
  EmbeddingKind embedding = EmbeddingKind::Gat;
  std::size_t rollout_steps = 10;  // l
  bool nonlinear_head = false;
  std::size_t head_hidden = 64;
  std::uint64_t seed = 0;  // parameter initialisation

  std::size_t input_dim() const noexcept { return columns.size(); }
  std::size_t output_dim() const noexcept { return target_columns.size(); }
  /// True when the outputs cover every input column, which rollout needs.
  bool covers_all_columns() const;
  VariableGraph graph() const;
  void validate() const;

  /// Canonical structured-text form (JSON); equal configs give equal text.
  std::string to_text() const;
  static ForecasterConfig from_text(const std::string& text);

  /// Defaults over the given columns: every column is a target.
  static ForecasterConfig for_columns(std::vector<std::string> columns);
};

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t patience = 0;  // 0 disables early stopping
  double grad_clip = 1.0;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;       // mean training loss per epoch
  std::vector<double> validation_loss;  // empty without a validation set
  std::size_t best_epoch = 0;
};

/// Multi-step forecast in original units.
struct Forecast {
  Matrix values;  // steps x M
  std::vector<std::string> columns;
  std::vector<std::int64_t> horizon_ms;  // offset of each row after the last context row
};

/// Number of next-step positions supervised per training window.
constexpr std::size_t supervised_positions(std::size_t window_len) { return window_len - 1; }

class Forecaster {
 public:
  explicit Forecaster(ForecasterConfig config);

  const ForecasterConfig& config() const noexcept { return config_; }
  const VariableGraph& graph() const noexcept { return graph_; }

  /// windows [batch, tau, N] normalized -> [batch, tau, M]; position t
  /// predicts row t + 1.
  Tensor forward(const Tensor& windows, Tape* tape, std::mt19937_64* dropout_rng = nullptr,
                 AttentionProbe* probe = nullptr) const;
  Matrix forward(const Matrix& window) const;

  std::vector<double> predict_one_step(const Matrix& window) const;
  /// One row per window.
  Matrix predict_one_step(std::span<const Matrix> windows) const;

  /// Predict, append, slide; normalized units, steps x M.
  Matrix rollout_normalized(const Matrix& window, std::size_t steps) const;
  std::vector<Matrix> rollout_normalized(std::span<const Matrix> windows, std::size_t steps) const;
  /// As above, denormalized with `stats()`.
  Forecast rollout(const Matrix& window, std::size_t steps, int sample_period_ms = 1) const;

  const NormalizationStats& stats() const noexcept { return stats_; }
  void set_stats(NormalizationStats stats);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

 private:
  void build();
  Tensor batch_tensor(std::span<const Matrix> windows) const;

  ForecasterConfig config_;
  VariableGraph graph_;
  std::optional<GatEncoder> gat_;
  Affine token_projection_;  // flattened GAT features (or raw values) -> d_model
  std::optional<Decoder> decoder_;
  Affine head_;
  Affine head_hidden_;  // only with nonlinear_head
  NormalizationStats stats_;
};

using TrainLog = std::function<void(std::size_t epoch, double train_loss, double validation_loss)>;

/// Teacher-forced next-step training with MSE over the supervised positions
/// 1..tau-1 (position tau-1 is scored against the window's target row).
TrainResult train(Forecaster& model, const WindowedDataset& data, const TrainConfig& cfg,
                  const WindowedDataset* validation = nullptr, const TrainLog& log = {});

/// Mean squared error of the supervised positions on a dataset.
double evaluate_loss(const Forecaster& model, const WindowedDataset& data, std::size_t batch_size = 256);

// Checkpoints ---------------------------------------------------------------

inline constexpr int kCheckpointFormat = 1;

std::string checkpoint_bytes(const Forecaster& model);
void save_checkpoint(const Forecaster& model, const std::string& path);
/// Throws `Error` with Checksum, Version or ConfigMismatch codes as applicable.
Forecaster load_checkpoint(const std::string& path, const ForecasterConfig* expected = nullptr);
Forecaster parse_checkpoint(const std::string& bytes, const ForecasterConfig* expected = nullptr);

}  // namespace gatllm
