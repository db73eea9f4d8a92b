// SPDX-License-Identifier: Apache-2.0
//
// Error metrics, horizon-wise evaluation of forecasting schemes and the
// comparison artifacts (CSV tables, SVG line plots).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatllm/matrix.hpp"
#include "gatllm/telemetry.hpp"

namespace gatllm {

double mae(std::span<const double> actual, std::span<const double> predicted);
double rmse(std::span<const double> actual, std::span<const double> predicted);

/// A forecasting method under evaluation. `rollout` receives normalized
/// tau x N windows and returns, per window, steps x columns.size() normalized
/// predictions for `columns` (indices into the series columns).
struct Scheme {
  using Rollout = std::function<std::vector<Matrix>(std::span<const Matrix> windows, std::size_t steps)>;

  std::string name;
  std::vector<std::size_t> columns;
  Rollout rollout;
};

struct EvaluationSpec {
  std::size_t window = 20;   // tau
  std::size_t horizon = 10;  // l
  std::size_t stride = 1;    // spacing of evaluation windows
  std::size_t batch = 256;   // windows per rollout call
  std::vector<std::size_t> report_columns;  // empty: every column of the scheme
};

struct MetricCell {
  std::string scheme;
  std::string variable;
  std::size_t horizon = 0;  // 1-based step
  double mae_norm = 0.0;
  double rmse_norm = 0.0;
  double mae_orig = 0.0;
  double rmse_orig = 0.0;
  std::size_t n = 0;
};

struct ReportMetadata {
  std::uint64_t seed = 0;
  std::string config_digest;
  RowRange train;
  RowRange validation;
  RowRange test;
};

struct MetricsReport {
  std::vector<MetricCell> cells;
  ReportMetadata metadata;

  const MetricCell* find(const std::string& scheme, const std::string& variable, std::size_t horizon) const;
  std::vector<std::string> schemes() const;
  std::vector<std::string> variables() const;
  std::size_t max_horizon() const;
  /// Mean normalized MAE over `variables` at one horizon for one scheme.
  double mean_mae(const std::string& scheme, const std::vector<std::string>& variables, std::size_t horizon) const;
};

/// Rolls `scheme` out over every window lying inside `test` rows of the
/// normalized table and scores each horizon step against the true rows.
MetricsReport evaluate_horizons(const Scheme& scheme, const Matrix& normalized, const NormalizationStats& stats,
                                const std::vector<std::string>& names, RowRange test, const EvaluationSpec& spec);

/// CSV with columns scheme,variable,horizon,mae_norm,rmse_norm,mae_orig,rmse_orig,n
/// at 12 significant digits.
std::string report_csv(const MetricsReport& report);
MetricsReport parse_report_csv(const std::string& text);
std::string metadata_json(const ReportMetadata& metadata);

/// Reports merged side by side. `best` marks cells whose normalized MAE is
/// strictly lower than every other scheme's in the same (variable, horizon).
struct Comparison {
  std::vector<MetricCell> cells;
  std::vector<std::uint8_t> best;  // parallel to cells; empty with one scheme
  std::vector<std::string> schemes;
  std::vector<std::string> variables;
  std::size_t horizon = 0;
};

/// Throws when reports disagree on variables or horizons.
Comparison compare(const std::vector<MetricsReport>& reports);
/// Report CSV plus a trailing `best` column when more than one scheme is present.
std::string comparison_csv(const Comparison& comparison);
/// Horizon vs normalized MAE, one polyline per scheme.
std::string horizon_svg(const Comparison& comparison, const std::string& variable);
/// Writes comparison.csv and `<variable>_horizon.svg` files into `dir`.
std::vector<std::string> write_comparison(const Comparison& comparison, const std::string& dir);

}  // namespace gatllm
