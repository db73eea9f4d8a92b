// SPDX-License-Identifier: Apache-2.0
//
// Cross-layer link telemetry: schema, CSV ingest, synthetic generation,
// gap filling, min-max scaling and next-step windowing.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "gatllm/matrix.hpp"

namespace gatllm {

enum class ProtocolLayer { Phy, Mac, Pdcp };

struct ParameterSpec {
  std::string name;
  ProtocolLayer layer = ProtocolLayer::Phy;
  std::string unit;
  double min_valid = -std::numeric_limits<double>::infinity();
  double max_valid = std::numeric_limits<double>::infinity();

  bool bounded() const noexcept {
    return min_valid > -std::numeric_limits<double>::infinity() || max_valid < std::numeric_limits<double>::infinity();
  }
};

using Schema = std::vector<ParameterSpec>;

/// The nine PHY/MAC/PDCP link parameters, in canonical column order.
const Schema& canonical_schema();

/// Canonical column positions.
namespace column {
inline constexpr std::size_t kDLBw = 0;
inline constexpr std::size_t kULSINR = 1;
inline constexpr std::size_t kDLOccupyPRBNum = 2;
inline constexpr std::size_t kCellDLMACRate = 3;
inline constexpr std::size_t kDLMACRate = 4;
inline constexpr std::size_t kMCS = 5;
inline constexpr std::size_t kPDCPOccupyBuffer = 6;
inline constexpr std::size_t kPDCPUnusedBuffer = 7;
inline constexpr std::size_t kDLPDCPSDUNum = 8;
}  // namespace column

/// DLBw, DLMACRate, MCS, ULSINR: the variables reported for multi-step runs.
const std::vector<std::string>& headline_variables();

/// Index of `name` in `schema`; throws if absent.
std::size_t column_index(const Schema& schema, std::string_view name);

/// T x N table sampled every `sample_period_ms`. Missing cells hold NaN and
/// are flagged in `missing`.
struct TelemetrySeries {
  Schema schema;
  Matrix values;
  std::vector<std::uint8_t> missing;
  int sample_period_ms = 1;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
  bool is_missing(std::size_t r, std::size_t c) const { return missing[r * cols() + c] != 0; }
  std::size_t missing_count() const noexcept;
  std::vector<std::string> column_names() const;

  /// Builds a fully observed series and checks it.
  static TelemetrySeries from_matrix(Schema schema, Matrix values, int sample_period_ms = 1);
};

/// Checks shape consistency and value bounds; throws `Error` naming the
/// offending row, column and bound.
void validate(const TelemetrySeries& series);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

struct WindowConfig {
  std::size_t length = 20;  // tau
  std::size_t stride = 1;   // s
};

struct WindowedDataset {
  std::size_t window_len = 0;
  std::size_t cols = 0;
  std::vector<Matrix> inputs;               // window_len x cols
  std::vector<std::vector<double>> targets;  // row following each window
  std::vector<std::size_t> origins;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

/// floor((rows - length - 1) / stride) + 1, or 0 when no target row fits.
std::size_t window_count(std::size_t rows, const WindowConfig& cfg);

struct NormalizationStats {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t size() const noexcept { return min.size(); }
  bool degenerate(std::size_t col) const { return !(max[col] > min[col]); }
  double range(std::size_t col) const { return max[col] - min[col]; }
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Knobs of the synthetic cross-layer process. Rates are bits per sample.
struct SyntheticConfig {
  std::size_t length = 20000;
  std::uint64_t seed = 1;
  double missing_prob = 0.01;

  // Uplink SINR: Gauss-Markov channel in dB, reported with measurement noise.
  double sinr_mean_db = 12.0;
  double sinr_std_db = 6.0;
  double sinr_rho = 0.98;
  double sinr_noise_db = 1.5;

  // Link adaptation: MCS follows the SINR reported `cqi_delay` samples ago.
  std::size_t cqi_delay = 6;
  double mcs_offset = 2.0;
  double mcs_per_db = 1.0;

  // PRB load: logistic transform of an AR(1) in logit space.
  double prb_mean = 0.6;  // fraction of 100 PRBs
  double prb_rho = 0.98;
  double prb_logit_std = 0.8;

  // Scheduled rate = bits_per_prb * PRB * efficiency(MCS) * (1 + noise).
  double bits_per_prb = 168.0;
  double rate_noise = 0.05;

  // Other-user traffic added on top of this link's rate, AR(1).
  double cell_load_mean = 20000.0;
  double cell_load_std = 5000.0;
  double cell_load_rho = 0.99;

  // PDCP queue.
  double buffer_capacity = 4.0e6;
  double arrival_rate = 26000.0;
  double arrival_shape = 2.0;  // gamma shape of per-sample arrivals
  double sdu_bits = 12000.0;

  // Bandwidth estimate: exponential smoothing of the delivered rate (bps).
  double bw_smoothing = 0.02;
  double bw_noise = 0.03;

  void validate() const;
};

TelemetrySeries load_csv(const std::string& path, const Schema& schema = canonical_schema());
TelemetrySeries parse_csv(std::string_view text, const Schema& schema = canonical_schema(),
                          const std::string& source = "<memory>");
/// Same dialect `load_csv` reads: header, comma separated, LF, empty cell for
/// missing, shortest round-trip decimal.
std::string to_csv(const TelemetrySeries& series);
void write_csv(const TelemetrySeries& series, const std::string& path);

TelemetrySeries generate_synthetic(const SyntheticConfig& cfg);

/// Fills each missing cell with the Lagrange polynomial through the nearest
/// `max_points` observed samples of its column, alternating before/after.
TelemetrySeries interpolate_missing(const TelemetrySeries& series, std::size_t max_points = 4);

NormalizationStats fit_normalizer(const TelemetrySeries& series, RowRange train_rows);
TelemetrySeries normalize(const TelemetrySeries& series, const NormalizationStats& stats);
TelemetrySeries denormalize(const TelemetrySeries& series, const NormalizationStats& stats);
Matrix normalize(const Matrix& values, const NormalizationStats& stats);
Matrix denormalize(const Matrix& values, const NormalizationStats& stats);
/// Column-subset variants: column j of `values` uses stats column `columns[j]`.
Matrix normalize(const Matrix& values, const NormalizationStats& stats, const std::vector<std::size_t>& columns);
Matrix denormalize(const Matrix& values, const NormalizationStats& stats, const std::vector<std::size_t>& columns);
NormalizationStats select(const NormalizationStats& stats, const std::vector<std::size_t>& columns);

WindowedDataset make_windows(const TelemetrySeries& series, const WindowConfig& cfg);
/// Windows whose rows and target all lie inside `rows`.
WindowedDataset make_windows(const Matrix& values, const WindowConfig& cfg, RowRange rows);

struct Split {
  RowRange train;
  RowRange validation;
  RowRange test;
};

/// Contiguous train/validation/test ranges in temporal order.
Split chronological_split(std::size_t count, std::array<double, 3> fractions = {0.8, 0.1, 0.1});

}  // namespace gatllm
