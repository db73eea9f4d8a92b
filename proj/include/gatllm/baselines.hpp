// SPDX-License-Identifier: Apache-2.0
//
// Reference schemes: vector autoregression on differenced data, per-variable
// forecasters, the forecaster without graph attention, and persistence.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "gatllm/eval.hpp"
#include "gatllm/forecaster.hpp"
#include "gatllm/matrix.hpp"
#include "gatllm/telemetry.hpp"

namespace gatllm {

/// y_t = intercept + sum_i A_i y_{t-i} on d-times differenced data.
struct VarModel {
  std::size_t p = 0;
  std::size_t d = 0;
  std::vector<double> intercept;   // N
  std::vector<Matrix> coefficients;  // p matrices, N x N, row = equation
  bool ridge_fallback = false;       // normal equations were singular

  std::size_t dim() const noexcept { return intercept.size(); }
};

/// d-th order row differences; d rows shorter.
Matrix difference(const Matrix& values, std::size_t d);

/// Ordinary least squares over [1, y_{t-1}, ..., y_{t-p}]. Singular normal
/// equations fall back to ridge with lambda 1e-8 and set `ridge_fallback`.
VarModel fit_var(const Matrix& series, std::size_t p, std::size_t d);

/// Iterates the recursion `steps` times from the end of `history`, then
/// reintegrates the differences.
Matrix var_forecast(const VarModel& model, const Matrix& history, std::size_t steps);

enum class BaselineKind { Varima, UnivariateGatLlm, NoGatDecoder, Persistence };

const char* to_string(BaselineKind kind) noexcept;
/// Accepts varima, univariate, nogat and persistence.
BaselineKind parse_baseline(const std::string& name);

/// Name used for the main model in reports.
inline constexpr const char* kMainSchemeName = "gatllm";

Scheme persistence_scheme(std::size_t columns);
Scheme var_scheme(std::shared_ptr<const VarModel> model);
Scheme forecaster_scheme(const std::string& name, std::shared_ptr<const Forecaster> model);
/// One single-column model per entry of `columns`, each fed its own column.
Scheme univariate_scheme(std::shared_ptr<const std::vector<Forecaster>> models, std::vector<std::size_t> columns);

/// Same model with the graph attention stage replaced by an affine lift.
ForecasterConfig nogat_config(ForecasterConfig base);
/// Single-variable model over `column` with the base model's sizes.
ForecasterConfig univariate_config(const ForecasterConfig& base, const std::string& column);

/// Normalized data, split and settings shared by every scheme of one run.
struct BaselineInputs {
  const Matrix* normalized = nullptr;  // T x N, scaled with `stats`
  NormalizationStats stats;
  std::vector<std::string> names;
  RowRange train;
  RowRange validation;
  RowRange test;
  ForecasterConfig model;  // main model settings; baselines derive from it
  TrainConfig training;
  std::size_t train_stride = 1;
  EvaluationSpec evaluation;
  std::size_t var_p = 2;
  std::size_t var_d = 0;
  TrainLog log;
};

/// Training windows over `rows`, restricted to `columns` (all when empty).
WindowedDataset training_windows(const Matrix& normalized, RowRange rows, std::size_t window, std::size_t stride,
                                 const std::vector<std::size_t>& columns = {});

/// Fits or trains the baseline on the training rows and evaluates it on the
/// test rows.
MetricsReport run_baseline(BaselineKind kind, const BaselineInputs& inputs);

/// Trains the per-column models used by the univariate scheme.
std::vector<Forecaster> train_univariate(const BaselineInputs& inputs, const std::vector<std::size_t>& columns);

}  // namespace gatllm
