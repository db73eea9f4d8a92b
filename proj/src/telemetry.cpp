// SPDX-License-Identifier: Apache-2.0

#include "gatllm/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "gatllm/error.hpp"

namespace gatllm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_number(std::string_view cell, double& value) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::Format, "cannot format value");
  return std::string(buf, ptr);
}

std::string bound_string(const ParameterSpec& spec) {
  auto side = [](double v) { return std::isinf(v) ? std::string(v < 0 ? "-inf" : "inf") : format_double(v); };
  return "[" + side(spec.min_valid) + ", " + side(spec.max_valid) + "]";
}

}  // namespace

const Schema& canonical_schema() {
  static const Schema schema = {
      {"DLBw", ProtocolLayer::Phy, "bps", -kInf, kInf},
      {"ULSINR", ProtocolLayer::Phy, "dB", -kInf, kInf},
      {"DLOccupyPRBNum", ProtocolLayer::Phy, "PRBs", 0.0, 100.0},
      {"CellDLMACRate", ProtocolLayer::Mac, "bit", -kInf, kInf},
      {"DLMACRate", ProtocolLayer::Mac, "bit", -kInf, kInf},
      {"MCS", ProtocolLayer::Mac, "index", 0.0, 28.0},
      {"PDCPOccupyBuffer", ProtocolLayer::Pdcp, "bit", -kInf, kInf},
      {"PDCPUnusedBuffer", ProtocolLayer::Pdcp, "bit", -kInf, kInf},
      {"DLPDCPSDUNum", ProtocolLayer::Pdcp, "count", -kInf, kInf},
  };
  return schema;
}

const std::vector<std::string>& headline_variables() {
  static const std::vector<std::string> names = {"DLBw", "DLMACRate", "MCS", "ULSINR"};
  return names;
}

std::size_t column_index(const Schema& schema, std::string_view name) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return i;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown column '" + std::string(name) + "'");
}

std::size_t TelemetrySeries::missing_count() const noexcept {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), std::uint8_t{1}));
}

std::vector<std::string> TelemetrySeries::column_names() const {
  std::vector<std::string> names;
  for (const auto& s : schema) names.push_back(s.name);
  return names;
}

TelemetrySeries TelemetrySeries::from_matrix(Schema schema, Matrix values, int sample_period_ms) {
  TelemetrySeries s;
  s.schema = std::move(schema);
  s.missing.assign(values.rows() * values.cols(), 0);
  s.values = std::move(values);
  s.sample_period_ms = sample_period_ms;
  validate(s);
  return s;
}

void validate(const TelemetrySeries& series) {
  if (series.cols() != series.schema.size()) {
    throw Error(ErrorCode::Shape, "series has " + std::to_string(series.cols()) + " columns but schema lists " +
                                      std::to_string(series.schema.size()));
  }
  if (series.rows() == 0) throw Error(ErrorCode::Data, "series has no rows");
  if (series.missing.size() != series.rows() * series.cols()) {
    throw Error(ErrorCode::Shape, "missing mask does not match series shape");
  }
  if (series.sample_period_ms <= 0) throw Error(ErrorCode::InvalidArgument, "sample period must be positive");
  for (std::size_t c = 0; c < series.cols(); ++c) {
    const auto& spec = series.schema[c];
    if (!spec.bounded()) continue;
    for (std::size_t r = 0; r < series.rows(); ++r) {
      if (series.is_missing(r, c)) continue;
      const double v = series.values(r, c);
      if (v < spec.min_valid || v > spec.max_valid) {
        throw Error(ErrorCode::Range, "row " + std::to_string(r) + ", column " + spec.name + ": value " +
                                          format_double(v) + " outside valid range " + bound_string(spec));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

TelemetrySeries parse_csv(std::string_view text, const Schema& schema, const std::string& source) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = text.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      start = nl + 1;
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  }
  if (lines.empty()) throw Error(ErrorCode::Format, source + ": empty file, expected a header row");

  const auto header = split_fields(lines[0]);
  std::vector<std::size_t> to_schema(header.size());
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::size_t idx = schema.size();
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (schema[j].name == header[i]) idx = j;
    }
    if (idx == schema.size()) {
      throw Error(ErrorCode::Format, source + ": unknown column '" + std::string(header[i]) + "' in header");
    }
    if (seen[idx]) throw Error(ErrorCode::Format, source + ": duplicate column '" + std::string(header[i]) + "'");
    seen[idx] = true;
    to_schema[i] = idx;
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (!seen[j]) throw Error(ErrorCode::Format, source + ": missing column '" + schema[j].name + "'");
  }

  const std::size_t rows = lines.size() - 1;
  if (rows == 0) throw Error(ErrorCode::Data, source + ": no data rows");

  TelemetrySeries series;
  series.schema = schema;
  series.values = Matrix(rows, schema.size(), kNaN);
  series.missing.assign(rows * schema.size(), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::Format, source + ": line " + std::to_string(r + 2) + " has " +
                                         std::to_string(fields.size()) + " fields, expected " +
                                         std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::size_t c = to_schema[i];
      double v = 0.0;
      if (parse_number(fields[i], v)) {
        series.values(r, c) = v;
      } else {
        series.missing[r * schema.size() + c] = 1;
      }
    }
  }
  try {
    validate(series);
  } catch (const Error& e) {
    throw Error(e.code(), source + ": " + e.what());
  }
  return series;
}

TelemetrySeries load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, path);
}

std::string to_csv(const TelemetrySeries& series) {
  std::string out;
  out.reserve(series.rows() * series.cols() * 12);
  for (std::size_t c = 0; c < series.cols(); ++c) {
    if (c) out += ',';
    out += series.schema[c].name;
  }
  out += '\n';
  for (std::size_t r = 0; r < series.rows(); ++r) {
    for (std::size_t c = 0; c < series.cols(); ++c) {
      if (c) out += ',';
      if (!series.is_missing(r, c)) out += format_double(series.values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const TelemetrySeries& series, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << to_csv(series);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, "synthetic config: " + what); };
  if (length == 0) fail("length must be positive");
  if (!(missing_prob >= 0.0 && missing_prob < 1.0)) fail("missing_prob must lie in [0, 1)");
  if (!(sinr_rho > 0.0 && sinr_rho < 1.0)) fail("sinr_rho must lie in (0, 1)");
  if (!(prb_rho > 0.0 && prb_rho < 1.0)) fail("prb_rho must lie in (0, 1)");
  if (!(cell_load_rho > 0.0 && cell_load_rho < 1.0)) fail("cell_load_rho must lie in (0, 1)");
  if (!(prb_mean > 0.0 && prb_mean < 1.0)) fail("prb_mean must lie in (0, 1)");
  if (!(bw_smoothing > 0.0 && bw_smoothing <= 1.0)) fail("bw_smoothing must lie in (0, 1]");
  for (double v : {sinr_std_db, sinr_noise_db, prb_logit_std, rate_noise, cell_load_mean, cell_load_std, bits_per_prb, mcs_per_db,
                   bw_noise, arrival_rate}) {
    if (!(v >= 0.0)) fail("scales must be non-negative");
  }
  if (!(buffer_capacity > 0.0)) fail("buffer_capacity must be positive");
  if (!(arrival_shape > 0.0)) fail("arrival_shape must be positive");
  if (!(sdu_bits > 0.0)) fail("sdu_bits must be positive");
}

TelemetrySeries generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::gamma_distribution<double> arrivals(cfg.arrival_shape, cfg.arrival_rate / cfg.arrival_shape);
  std::bernoulli_distribution drop(cfg.missing_prob);

  const std::size_t burn_in = 500 + cfg.cqi_delay;
  const std::size_t total = burn_in + cfg.length;
  const double sinr_innov = cfg.sinr_std_db * std::sqrt(1.0 - cfg.sinr_rho * cfg.sinr_rho);
  const double prb_center = std::log(cfg.prb_mean / (1.0 - cfg.prb_mean));
  const double prb_innov = cfg.prb_logit_std * std::sqrt(1.0 - cfg.prb_rho * cfg.prb_rho);
  const double cell_innov = cfg.cell_load_std * std::sqrt(1.0 - cfg.cell_load_rho * cfg.cell_load_rho);
  const double period_s = 1e-3;

  double sinr = cfg.sinr_mean_db;
  double prb_logit = prb_center;
  double cell_load = cfg.cell_load_mean;
  double buffer = 0.5 * cfg.buffer_capacity;
  double bw = -1.0;
  std::deque<double> sinr_history;

  Matrix values(cfg.length, 9);
  for (std::size_t t = 0; t < total; ++t) {
    sinr = cfg.sinr_mean_db + cfg.sinr_rho * (sinr - cfg.sinr_mean_db) + sinr_innov * gauss(rng);
    const double sinr_reported = sinr + cfg.sinr_noise_db * gauss(rng);
    sinr_history.push_back(sinr_reported);
    if (sinr_history.size() > cfg.cqi_delay + 1) sinr_history.pop_front();
    const double reported = sinr_history.front();
    const double mcs = std::clamp(std::round(cfg.mcs_offset + cfg.mcs_per_db * reported), 0.0, 28.0);

    prb_logit = prb_center + cfg.prb_rho * (prb_logit - prb_center) + prb_innov * gauss(rng);
    const double prb = std::clamp(std::round(100.0 / (1.0 + std::exp(-prb_logit))), 0.0, 100.0);

    // Spectral efficiency grows monotonically with the MCS index.
    const double efficiency = 0.15 + 0.19 * mcs;
    const double rate =
        std::max(0.0, cfg.bits_per_prb * prb * efficiency * (1.0 + cfg.rate_noise * gauss(rng)));

    cell_load = cfg.cell_load_mean + cfg.cell_load_rho * (cell_load - cfg.cell_load_mean) + cell_innov * gauss(rng);
    const double cell_rate = rate + std::max(0.0, cell_load);

    const double arrived = cfg.arrival_rate > 0.0 ? arrivals(rng) : 0.0;
    const double backlog = buffer + arrived;
    const double served = std::min(backlog, rate);
    buffer = std::clamp(backlog - served, 0.0, cfg.buffer_capacity);
    const double sdus = std::round(served / cfg.sdu_bits);

    const double delivered_bps = served / period_s;
    bw = bw < 0.0 ? delivered_bps : bw + cfg.bw_smoothing * (delivered_bps - bw);
    const double bw_obs = std::max(1.0, bw * (1.0 + cfg.bw_noise * gauss(rng)));

    if (t < burn_in) continue;
    const std::size_t r = t - burn_in;
    values(r, column::kDLBw) = bw_obs;
    values(r, column::kULSINR) = sinr_reported;
    values(r, column::kDLOccupyPRBNum) = prb;
    values(r, column::kCellDLMACRate) = cell_rate;
    values(r, column::kDLMACRate) = rate;
    values(r, column::kMCS) = mcs;
    values(r, column::kPDCPOccupyBuffer) = buffer;
    values(r, column::kPDCPUnusedBuffer) = cfg.buffer_capacity - buffer;
    values(r, column::kDLPDCPSDUNum) = sdus;
  }

  TelemetrySeries series;
  series.schema = canonical_schema();
  series.missing.assign(cfg.length * 9, 0);
  if (cfg.missing_prob > 0.0) {
    for (std::size_t i = 0; i < series.missing.size(); ++i) {
      if (drop(rng)) {
        series.missing[i] = 1;
        values.data()[i] = kNaN;
      }
    }
  }
  series.values = std::move(values);
  validate(series);
  return series;
}

// ---------------------------------------------------------------------------
// Interpolation

TelemetrySeries interpolate_missing(const TelemetrySeries& series, std::size_t max_points) {
  if (max_points == 0) throw Error(ErrorCode::InvalidArgument, "interpolation needs at least one point");
  TelemetrySeries out = series;
  if (series.missing_count() == 0) return out;
  const std::size_t rows = series.rows();
  std::vector<std::size_t> observed;
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < series.cols(); ++c) {
    observed.clear();
    for (std::size_t r = 0; r < rows; ++r) {
      if (!series.is_missing(r, c)) observed.push_back(r);
    }
    if (observed.empty()) {
      throw Error(ErrorCode::Data, "column " + series.schema[c].name + " has no observed values to interpolate from");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (!series.is_missing(r, c)) continue;
      // observed[after] is the first observation past r; everything before it precedes r.
      const auto after = static_cast<std::size_t>(std::upper_bound(observed.begin(), observed.end(), r) -
                                                  observed.begin());
      std::size_t lo = after;  // next candidate before is lo - 1
      std::size_t hi = after;
      chosen.clear();
      bool take_before = true;
      while (chosen.size() < max_points && (lo > 0 || hi < observed.size())) {
        const bool can_before = lo > 0;
        const bool can_after = hi < observed.size();
        if ((take_before && can_before) || !can_after) {
          chosen.push_back(observed[--lo]);
        } else {
          chosen.push_back(observed[hi++]);
        }
        take_before = !take_before;
      }
      const double x = static_cast<double>(r);
      double value = 0.0;
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        double basis = 1.0;
        const double xi = static_cast<double>(chosen[i]);
        for (std::size_t j = 0; j < chosen.size(); ++j) {
          if (j == i) continue;
          const double xj = static_cast<double>(chosen[j]);
          basis *= (x - xj) / (xi - xj);
        }
        value += basis * series.values(chosen[i], c);
      }
      const auto& spec = series.schema[c];
      if (spec.bounded()) value = std::clamp(value, spec.min_valid, spec.max_valid);
      out.values(r, c) = value;
    }
  }
  std::fill(out.missing.begin(), out.missing.end(), std::uint8_t{0});
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats fit_normalizer(const TelemetrySeries& series, RowRange train_rows) {
  if (train_rows.empty()) throw Error(ErrorCode::InvalidArgument, "normalizer: empty training range");
  if (train_rows.end > series.rows()) {
    throw Error(ErrorCode::Range, "normalizer: training range ends at " + std::to_string(train_rows.end) +
                                      " past " + std::to_string(series.rows()) + " rows");
  }
  NormalizationStats stats;
  stats.min.assign(series.cols(), kInf);
  stats.max.assign(series.cols(), -kInf);
  for (std::size_t r = train_rows.begin; r < train_rows.end; ++r) {
    for (std::size_t c = 0; c < series.cols(); ++c) {
      if (series.is_missing(r, c)) {
        throw Error(ErrorCode::Data, "normalizer: missing cell at row " + std::to_string(r) + ", column " +
                                         series.schema[c].name + " (interpolate first)");
      }
      const double v = series.values(r, c);
      stats.min[c] = std::min(stats.min[c], v);
      stats.max[c] = std::max(stats.max[c], v);
    }
  }
  return stats;
}

namespace {

void check_stats(std::size_t cols, const NormalizationStats& stats) {
  if (stats.min.size() != cols || stats.max.size() != cols) {
    throw Error(ErrorCode::Shape, "normalization stats have " + std::to_string(stats.min.size()) +
                                      " columns, data has " + std::to_string(cols));
  }
}

}  // namespace

Matrix normalize(const Matrix& values, const NormalizationStats& stats, const std::vector<std::size_t>& columns) {
  if (columns.size() != values.cols()) throw Error(ErrorCode::Shape, "normalize: column map size mismatch");
  Matrix out = values;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const std::size_t c = columns[j];
    if (c >= stats.size()) throw Error(ErrorCode::Shape, "normalize: column index out of range");
    const bool flat = stats.degenerate(c);
    const double lo = stats.min[c];
    const double span = stats.range(c);
    for (std::size_t r = 0; r < values.rows(); ++r) {
      const double v = values(r, j);
      if (std::isnan(v)) continue;
      out(r, j) = flat ? 0.0 : (v - lo) / span;
    }
  }
  return out;
}

Matrix denormalize(const Matrix& values, const NormalizationStats& stats, const std::vector<std::size_t>& columns) {
  if (columns.size() != values.cols()) throw Error(ErrorCode::Shape, "denormalize: column map size mismatch");
  Matrix out = values;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const std::size_t c = columns[j];
    if (c >= stats.size()) throw Error(ErrorCode::Shape, "denormalize: column index out of range");
    const bool flat = stats.degenerate(c);
    const double lo = stats.min[c];
    const double span = stats.range(c);
    for (std::size_t r = 0; r < values.rows(); ++r) {
      const double v = values(r, j);
      if (std::isnan(v)) continue;
      out(r, j) = flat ? lo : v * span + lo;
    }
  }
  return out;
}

namespace {
std::vector<std::size_t> identity_columns(std::size_t n) {
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i < n; ++i) cols[i] = i;
  return cols;
}
}  // namespace

Matrix normalize(const Matrix& values, const NormalizationStats& stats) {
  check_stats(values.cols(), stats);
  return normalize(values, stats, identity_columns(values.cols()));
}

Matrix denormalize(const Matrix& values, const NormalizationStats& stats) {
  check_stats(values.cols(), stats);
  return denormalize(values, stats, identity_columns(values.cols()));
}

TelemetrySeries normalize(const TelemetrySeries& series, const NormalizationStats& stats) {
  TelemetrySeries out = series;
  out.values = normalize(series.values, stats);
  return out;
}

TelemetrySeries denormalize(const TelemetrySeries& series, const NormalizationStats& stats) {
  TelemetrySeries out = series;
  out.values = denormalize(series.values, stats);
  return out;
}

NormalizationStats select(const NormalizationStats& stats, const std::vector<std::size_t>& columns) {
  NormalizationStats out;
  for (auto c : columns) {
    if (c >= stats.size()) throw Error(ErrorCode::Range, "stats column " + std::to_string(c) + " out of range");
    out.min.push_back(stats.min[c]);
    out.max.push_back(stats.max[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

std::size_t window_count(std::size_t rows, const WindowConfig& cfg) {
  if (cfg.length == 0 || cfg.stride == 0 || rows < cfg.length + 1) return 0;
  return (rows - cfg.length - 1) / cfg.stride + 1;
}

WindowedDataset make_windows(const Matrix& values, const WindowConfig& cfg, RowRange rows) {
  if (cfg.length < 2) throw Error(ErrorCode::InvalidArgument, "window length must be at least 2");
  if (cfg.stride < 1) throw Error(ErrorCode::InvalidArgument, "window stride must be at least 1");
  if (rows.end > values.rows() || rows.begin > rows.end) {
    throw Error(ErrorCode::Range, "window row range outside the series");
  }
  const std::size_t count = window_count(rows.size(), cfg);
  if (count == 0) {
    throw Error(ErrorCode::Data, "need at least " + std::to_string(cfg.length + 1) + " rows for a window of " +
                                     std::to_string(cfg.length) + " plus a target, have " +
                                     std::to_string(rows.size()));
  }
  WindowedDataset ds;
  ds.window_len = cfg.length;
  ds.cols = values.cols();
  ds.inputs.reserve(count);
  ds.targets.reserve(count);
  ds.origins.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t o = rows.begin + i * cfg.stride;
    ds.inputs.push_back(values.rows_slice(o, o + cfg.length));
    auto target = values.row(o + cfg.length);
    ds.targets.emplace_back(target.begin(), target.end());
    ds.origins.push_back(o);
  }
  return ds;
}

WindowedDataset make_windows(const TelemetrySeries& series, const WindowConfig& cfg) {
  if (series.missing_count() != 0) {
    throw Error(ErrorCode::Data, "cannot window a series with missing cells (interpolate first)");
  }
  return make_windows(series.values, cfg, RowRange{0, series.rows()});
}

Split chronological_split(std::size_t count, std::array<double, 3> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1, got " + format_double(total));
  }
  const auto n = static_cast<double>(count);
  const auto train_end = static_cast<std::size_t>(std::llround(n * fractions[0]));
  const auto val_end = static_cast<std::size_t>(std::llround(n * (fractions[0] + fractions[1])));
  Split s{{0, train_end}, {train_end, std::min(val_end, count)}, {std::min(val_end, count), count}};
  if (s.train.empty() || s.validation.empty() || s.test.empty()) {
    throw Error(ErrorCode::InvalidArgument, "split of " + std::to_string(count) + " leaves an empty partition");
  }
  return s;
}

}  // namespace gatllm
