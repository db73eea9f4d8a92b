// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "doctest.h"
#include "gatllm/error.hpp"
#include "gatllm/telemetry.hpp"

using namespace gatllm;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ParameterSpec named(const std::string& name) {
  ParameterSpec p;
  p.name = name;
  return p;
}

/// One unbounded column named x with NaN marking missing cells.
TelemetrySeries single_column(const std::vector<double>& values) {
  TelemetrySeries s;
  s.schema = {named("x")};
  s.values = Matrix(values.size(), 1, values);
  s.missing.resize(values.size());
  for (std::size_t r = 0; r < values.size(); ++r) s.missing[r] = std::isnan(values[r]) ? 1 : 0;
  return s;
}

std::string header() {
  std::string h;
  for (const auto& p : canonical_schema()) h += (h.empty() ? "" : ",") + p.name;
  return h;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gatllm_test_" + name)).string();
}

}  // namespace

TEST_SUITE("telemetry") {

TEST_CASE("canonical schema lists the nine link parameters") {
  const auto& s = canonical_schema();
  REQUIRE(s.size() == 9);
  const char* names[] = {"DLBw", "ULSINR", "DLOccupyPRBNum", "CellDLMACRate", "DLMACRate",
                         "MCS", "PDCPOccupyBuffer", "PDCPUnusedBuffer", "DLPDCPSDUNum"};
  for (std::size_t i = 0; i < 9; ++i) CHECK(s[i].name == names[i]);
  CHECK(s[column::kMCS].min_valid == 0.0);
  CHECK(s[column::kMCS].max_valid == 28.0);
  CHECK(s[column::kDLOccupyPRBNum].max_valid == 100.0);
  CHECK(s[column::kPDCPOccupyBuffer].layer == ProtocolLayer::Pdcp);
  CHECK(headline_variables() == std::vector<std::string>{"DLBw", "DLMACRate", "MCS", "ULSINR"});
}

TEST_CASE("csv with columns in any order and an empty cell") {
  // Reverse column order, CRLF line ends, one empty cell.
  std::string text;
  const auto& s = canonical_schema();
  for (std::size_t i = s.size(); i-- > 0;) text += s[i].name + (i ? "," : "\r\n");
  text += "1,2,3,4,5,6,7,8,9\r\n";
  text += "1,2,3,,5,6,7,8,9\r\n";
  const TelemetrySeries series = parse_csv(text);
  REQUIRE(series.rows() == 2);
  REQUIRE(series.cols() == 9);
  // Canonical column j holds file column 8 - j, whose value is 9 - j.
  for (std::size_t j = 0; j < 9; ++j) CHECK(series.values(0, j) == static_cast<double>(9 - j));
  CHECK(series.is_missing(1, 5));
  CHECK(std::isnan(series.values(1, 5)));
  CHECK(series.missing_count() == 1);
  for (std::size_t j = 0; j < 9; ++j) {
    if (j != 5) CHECK(series.values(1, j) == static_cast<double>(9 - j));
  }
}

TEST_CASE("out-of-range MCS names row, column and bound") {
  const std::string text = header() + "\n1,2,3,4,5,29,7,8,9\n";
  try {
    parse_csv(text);
    FAIL("expected a range error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Range);
    const std::string msg = e.what();
    CHECK(msg.find("row 0") != std::string::npos);
    CHECK(msg.find("MCS") != std::string::npos);
    CHECK(msg.find("28") != std::string::npos);
  }
}

TEST_CASE("malformed csv inputs are rejected") {
  CHECK_THROWS_AS(parse_csv(""), Error);
  CHECK_THROWS_AS(parse_csv(header() + "\n"), Error);                        // no data rows
  CHECK_THROWS_AS(parse_csv("DLBw,Foo\n1,2\n"), Error);                      // unknown column
  CHECK_THROWS_AS(parse_csv("DLBw,ULSINR\n1,2\n"), Error);                   // missing columns
  CHECK_THROWS_AS(parse_csv(header() + "\n1,2,3\n"), Error);                 // short row
  CHECK_THROWS_AS(load_csv(temp_path("does_not_exist.csv")), Error);
  try {
    load_csv("/no/such/dir/file.csv");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
    CHECK(std::string(e.what()).find("/no/such/dir/file.csv") != std::string::npos);
  }
}

TEST_CASE("csv round trip is bit-exact including missing cells") {
  SyntheticConfig cfg;
  cfg.length = 500;
  cfg.missing_prob = 0.05;
  const TelemetrySeries a = generate_synthetic(cfg);
  REQUIRE(a.missing_count() > 0);
  const std::string path = temp_path("roundtrip.csv");
  write_csv(a, path);
  const TelemetrySeries b = load_csv(path);
  std::filesystem::remove(path);
  REQUIRE(b.rows() == a.rows());
  CHECK(b.missing == a.missing);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (!a.is_missing(r, c)) REQUIRE(b.values(r, c) == a.values(r, c));
    }
  }
  CHECK(to_csv(b) == to_csv(a));
}

TEST_CASE("ingest of a full-length file") {
  SyntheticConfig cfg;
  cfg.length = 22661;
  const std::string path = temp_path("full.csv");
  write_csv(generate_synthetic(cfg), path);
  const TelemetrySeries s = load_csv(path);
  std::filesystem::remove(path);
  CHECK(s.rows() == 22661);
  CHECK(s.cols() == 9);
}

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  cfg.length = 20000;
  cfg.seed = 11;
  const TelemetrySeries a = generate_synthetic(cfg);
  const TelemetrySeries b = generate_synthetic(cfg);

  SUBCASE("is deterministic") {
    CHECK(a.missing == b.missing);
    CHECK(to_csv(a) == to_csv(b));
    cfg.seed = 12;
    CHECK(to_csv(generate_synthetic(cfg)) != to_csv(a));
  }
  SUBCASE("respects bounds and the buffer identity") {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double mcs = a.values(r, column::kMCS);
      const double prb = a.values(r, column::kDLOccupyPRBNum);
      if (!a.is_missing(r, column::kMCS)) {
        CHECK(mcs >= 0.0);
        CHECK(mcs <= 28.0);
        CHECK(mcs == std::round(mcs));
      }
      if (!a.is_missing(r, column::kDLOccupyPRBNum)) {
        CHECK(prb >= 0.0);
        CHECK(prb <= 100.0);
      }
      if (!a.is_missing(r, column::kPDCPOccupyBuffer) && !a.is_missing(r, column::kPDCPUnusedBuffer)) {
        const double total = a.values(r, column::kPDCPOccupyBuffer) + a.values(r, column::kPDCPUnusedBuffer);
        CHECK(total == doctest::Approx(cfg.buffer_capacity).epsilon(1e-12));
      }
    }
  }
  SUBCASE("marks cells missing at roughly the configured rate") {
    const double rate = static_cast<double>(a.missing_count()) / static_cast<double>(a.rows() * a.cols());
    CHECK(rate == doctest::Approx(cfg.missing_prob).epsilon(0.15));
  }
  SUBCASE("uplink SINR lag-1 autocorrelation is near the persistence") {
    const TelemetrySeries f = interpolate_missing(a);
    double mean = 0.0;
    for (std::size_t r = 0; r < f.rows(); ++r) mean += f.values(r, column::kULSINR);
    mean /= static_cast<double>(f.rows());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < f.rows(); ++r) {
      const double d = f.values(r, column::kULSINR) - mean;
      den += d * d;
      if (r + 1 < f.rows()) num += d * (f.values(r + 1, column::kULSINR) - mean);
    }
    CHECK(std::abs(num / den - cfg.sinr_rho) <= 0.1);
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  cfg.sinr_rho = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SyntheticConfig{};
  cfg.missing_prob = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SyntheticConfig{};
  cfg.rate_noise = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("lagrange fill through two points") {
  const TelemetrySeries f = interpolate_missing(single_column({1.0, kNaN, 3.0}), 2);
  CHECK(f.values(1, 0) == 2.0);
  CHECK(f.missing_count() == 0);
}

TEST_CASE("lagrange fill through four points of a quadratic") {
  const TelemetrySeries f = interpolate_missing(single_column({0.0, 1.0, kNaN, 9.0, 16.0}), 4);
  CHECK(f.values(2, 0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("lagrange fill is exact on random low-degree polynomials") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::bernoulli_distribution drop(0.2);
  for (int trial = 0; trial < 200; ++trial) {
    const int degree = trial % 4;  // below four points
    std::vector<double> c(degree + 1);
    for (auto& v : c) v = coef(rng);
    auto poly = [&](double t) {
      double y = 0.0;
      for (int i = degree; i >= 0; --i) y = y * t + c[i];
      return y;
    };
    std::vector<double> values(30);
    std::vector<double> truth(30);
    for (std::size_t t = 0; t < 30; ++t) {
      truth[t] = poly(static_cast<double>(t) / 10.0);
      values[t] = (t % 7 != 0 && drop(rng)) ? kNaN : truth[t];
    }
    const TelemetrySeries f = interpolate_missing(single_column(values), 4);
    for (std::size_t t = 0; t < 30; ++t) REQUIRE(std::abs(f.values(t, 0) - truth[t]) <= 1e-9);
  }
}

TEST_CASE("lagrange fill leaves observed cells and complete series alone") {
  const TelemetrySeries s = single_column({1.0, 4.0, 2.0});
  const TelemetrySeries f = interpolate_missing(s);
  CHECK(f.values == s.values);
  CHECK(f.missing == s.missing);
  CHECK_THROWS_AS(interpolate_missing(single_column({kNaN, kNaN})), Error);
}

TEST_CASE("lagrange fill respects bounded columns") {
  SyntheticConfig cfg;
  cfg.length = 3000;
  cfg.missing_prob = 0.2;
  const TelemetrySeries f = interpolate_missing(generate_synthetic(cfg));
  CHECK_NOTHROW(validate(f));
}

TEST_CASE("normalizer statistics") {
  TelemetrySeries s;
  s.schema = {named("a"), named("b")};
  s.values = Matrix(4, 2, {2, 5, 4, 5, 6, 5, 100, -3});
  s.missing.assign(8, 0);
  const NormalizationStats stats = fit_normalizer(s, {0, 3});
  CHECK(stats.min[0] == 2.0);
  CHECK(stats.max[0] == 6.0);
  CHECK(stats.degenerate(1));

  const TelemetrySeries n = normalize(s, stats);
  CHECK(n.values(0, 0) == 0.0);
  CHECK(n.values(1, 0) == 0.5);
  CHECK(n.values(2, 0) == 1.0);
  for (std::size_t r = 0; r < 3; ++r) CHECK(n.values(r, 1) == 0.0);

  // Rows outside the training range never influence the statistics.
  TelemetrySeries changed = s;
  changed.values(3, 0) = -1e9;
  changed.values(3, 1) = 1e9;
  CHECK(fit_normalizer(changed, {0, 3}) == stats);

  CHECK_THROWS_AS(fit_normalizer(s, {2, 2}), Error);
  CHECK_THROWS_AS(normalize(Matrix(2, 3), stats), Error);
}

TEST_CASE("normalize and denormalize are inverse on non-degenerate columns") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  Matrix m(100, 3);
  for (auto& v : m.data()) v = u(rng);
  TelemetrySeries s;
  s.schema = {named("a"), named("b"), named("c")};
  s.values = m;
  s.missing.assign(300, 0);
  const NormalizationStats stats = fit_normalizer(s, {0, 80});
  const Matrix there_back = denormalize(normalize(m, stats), stats);
  const Matrix back_there = normalize(denormalize(m, stats), stats);
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    CHECK(std::abs(there_back.data()[i] - m.data()[i]) <= 1e-12 * std::max(1.0, std::abs(m.data()[i])));
    CHECK(std::abs(back_there.data()[i] - m.data()[i]) <= 1e-12 * std::max(1.0, std::abs(m.data()[i])));
  }
}

TEST_CASE("window counts") {
  CHECK(window_count(22661, {20, 1}) == 22641);
  CHECK(window_count(6, {5, 1}) == 1);
  CHECK(window_count(5, {5, 1}) == 0);
  CHECK(window_count(100, {20, 19}) == 5);
}

TEST_CASE("full-length windowing") {
  SyntheticConfig cfg;
  cfg.length = 22661;
  cfg.missing_prob = 0.0;
  const WindowedDataset d = make_windows(generate_synthetic(cfg), {20, 1});
  CHECK(d.size() == 22641);
  CHECK(d.inputs.front().rows() == 20);
  CHECK(d.origins.back() == 22640);
}

TEST_CASE("windowing edge cases") {
  Matrix m(6, 2);
  for (std::size_t r = 0; r < 6; ++r) m(r, 0) = m(r, 1) = static_cast<double>(r);
  const WindowedDataset d = make_windows(m, {5, 1}, {0, 6});
  REQUIRE(d.size() == 1);
  CHECK(d.targets[0] == std::vector<double>{5.0, 5.0});
  CHECK_THROWS_AS(make_windows(m, {5, 1}, {0, 5}), Error);
  CHECK_THROWS_AS(make_windows(m, {1, 1}, {0, 6}), Error);
}

TEST_CASE("windows align with their source rows") {
  std::mt19937_64 rng(6);
  Matrix m(200, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : m.data()) v = u(rng);
  for (std::size_t stride : {1u, 3u, 19u}) {
    const WindowConfig cfg{20, stride};
    const WindowedDataset d = make_windows(m, cfg, {10, 190});
    CHECK(d.size() == window_count(180, cfg));
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::size_t o = d.origins[i];
      CHECK(o == 10 + i * stride);
      for (std::size_t t = 0; t < 20; ++t) {
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(d.inputs[i](t, c) == m(o + t, c));
      }
      for (std::size_t c = 0; c < 3; ++c) REQUIRE(d.targets[i][c] == m(o + 20, c));
    }
  }
}

TEST_CASE("chronological split") {
  Split s = chronological_split(100);
  CHECK(s.train == RowRange{0, 80});
  CHECK(s.validation == RowRange{80, 90});
  CHECK(s.test == RowRange{90, 100});
  s = chronological_split(10);
  CHECK(s.train == RowRange{0, 8});
  CHECK(s.validation == RowRange{8, 9});
  CHECK(s.test == RowRange{9, 10});
  CHECK_THROWS_AS(chronological_split(100, {0.7, 0.1, 0.1}), Error);
  CHECK_THROWS_AS(chronological_split(3, {0.98, 0.01, 0.01}), Error);
}

}  // TEST_SUITE
