// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "gatllm/baselines.hpp"
#include "gatllm/error.hpp"
#include "gatllm/eval.hpp"
#include "test_util.hpp"

using namespace gatllm;

namespace {

/// Kahan-free long-double summation, kept separate from the library code.
double oracle_mae(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a[i]) - b[i]);
  return static_cast<double>(s / a.size());
}

double oracle_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    s += d * d;
  }
  return static_cast<double>(std::sqrt(s / a.size()));
}

MetricsReport make_report(const std::string& scheme, const std::vector<std::string>& vars, std::size_t horizon,
                          double base) {
  MetricsReport r;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    for (std::size_t h = 1; h <= horizon; ++h) {
      MetricCell c;
      c.scheme = scheme;
      c.variable = vars[v];
      c.horizon = h;
      c.mae_norm = base * static_cast<double>(h + v);
      c.rmse_norm = 1.5 * c.mae_norm;
      c.mae_orig = 10.0 * c.mae_norm;
      c.rmse_orig = 10.0 * c.rmse_norm;
      c.n = 100;
      r.cells.push_back(c);
    }
  }
  return r;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("metric examples") {
  const double actual[] = {0.0, 0.0};
  const double predicted[] = {1.0, 3.0};
  CHECK(mae(actual, predicted) == 2.0);
  CHECK(rmse(actual, predicted) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK_THROWS_AS(mae(std::span<const double>(actual, 2), std::span<const double>(predicted, 1)), Error);
  CHECK_THROWS_AS(rmse(std::span<const double>(), std::span<const double>()), Error);
}

TEST_CASE("metrics match an independent summation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::uniform_int_distribution<std::size_t> len(1, 500);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    const double m = mae(a, b);
    const double r = rmse(a, b);
    REQUIRE(std::abs(m - oracle_mae(a, b)) <= 1e-12 * std::max(1.0, oracle_mae(a, b)));
    REQUIRE(std::abs(r - oracle_rmse(a, b)) <= 1e-12 * std::max(1.0, oracle_rmse(a, b)));
    REQUIRE(m <= r);
  }
}

TEST_CASE("persistence on constant data has zero error") {
  const Matrix data(60, 2, 0.3);
  const NormalizationStats stats{{0.0, 5.0}, {1.0, 7.0}};
  EvaluationSpec spec;
  spec.window = 5;
  spec.horizon = 3;
  const MetricsReport r = evaluate_horizons(persistence_scheme(2), data, stats, {"a", "b"}, {30, 60}, spec);
  REQUIRE(r.cells.size() == 6);
  for (const auto& c : r.cells) {
    CHECK(c.mae_norm == 0.0);
    CHECK(c.rmse_orig == 0.0);
    CHECK(c.n == 30 - 5 - 3 + 1);
  }
}

TEST_CASE("horizon metrics match a direct computation") {
  std::mt19937_64 rng(2);
  const Matrix data = testing::random_matrix(50, 3, rng);
  const NormalizationStats stats{{0.0, -2.0, 10.0}, {4.0, 2.0, 10.0}};  // third column degenerate
  EvaluationSpec spec;
  spec.window = 4;
  spec.horizon = 2;
  spec.stride = 3;
  spec.batch = 2;
  spec.report_columns = {2, 0};
  const RowRange test{20, 50};
  const MetricsReport r = evaluate_horizons(persistence_scheme(3), data, stats, {"a", "b", "c"}, test, spec);

  for (std::size_t h = 1; h <= 2; ++h) {
    std::vector<double> truth, pred;
    for (std::size_t o = test.begin; o + 4 + 2 <= test.end; o += 3) {
      truth.push_back(data(o + 4 + h - 1, 0));
      pred.push_back(data(o + 3, 0));
    }
    const MetricCell* c = r.find("persistence", "a", h);
    REQUIRE(c != nullptr);
    CHECK(c->n == truth.size());
    CHECK(c->mae_norm == doctest::Approx(oracle_mae(truth, pred)).epsilon(1e-12));
    CHECK(c->rmse_norm == doctest::Approx(oracle_rmse(truth, pred)).epsilon(1e-12));
    CHECK(c->mae_orig == doctest::Approx(4.0 * oracle_mae(truth, pred)).epsilon(1e-12));
    const MetricCell* flat = r.find("persistence", "c", h);
    REQUIRE(flat != nullptr);
    CHECK(flat->mae_orig == 0.0);
  }
  CHECK(r.find("persistence", "b", 1) == nullptr);
  CHECK(r.variables() == std::vector<std::string>{"c", "a"});
  CHECK(r.max_horizon() == 2);

  EvaluationSpec bad = spec;
  bad.report_columns = {5};
  CHECK_THROWS_AS(evaluate_horizons(persistence_scheme(3), data, stats, {"a", "b", "c"}, test, bad), Error);
  CHECK_THROWS_AS(evaluate_horizons(persistence_scheme(3), data, stats, {"a", "b", "c"}, {45, 50}, spec), Error);
}

TEST_CASE("evaluation reads nothing before the test range") {
  std::mt19937_64 rng(3);
  Matrix data = testing::random_matrix(40, 2, rng);
  const NormalizationStats stats{{0.0, 0.0}, {1.0, 1.0}};
  EvaluationSpec spec;
  spec.window = 5;
  spec.horizon = 2;
  const auto scheme = persistence_scheme(2);
  const MetricsReport a = evaluate_horizons(scheme, data, stats, {"a", "b"}, {20, 40}, spec);
  for (std::size_t r = 0; r < 20; ++r) data(r, 0) = data(r, 1) = 1e6;
  const MetricsReport b = evaluate_horizons(scheme, data, stats, {"a", "b"}, {20, 40}, spec);
  CHECK(report_csv(a) == report_csv(b));
}

TEST_CASE("report csv round trip") {
  MetricsReport r = make_report("gatllm", {"DLBw", "MCS"}, 3, 0.1 / 3.0);
  r.metadata.seed = 4;
  const MetricsReport back = parse_report_csv(report_csv(r));
  REQUIRE(back.cells.size() == r.cells.size());
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    CHECK(back.cells[i].scheme == r.cells[i].scheme);
    CHECK(back.cells[i].variable == r.cells[i].variable);
    CHECK(back.cells[i].horizon == r.cells[i].horizon);
    CHECK(back.cells[i].mae_norm == r.cells[i].mae_norm);
    CHECK(back.cells[i].rmse_orig == r.cells[i].rmse_orig);
    CHECK(back.cells[i].n == r.cells[i].n);
  }
  CHECK(report_csv(back) == report_csv(r));
  CHECK_THROWS_AS(parse_report_csv("nonsense\n1,2\n"), Error);
  CHECK(metadata_json(r.metadata).find("\"seed\"") != std::string::npos);
}

TEST_CASE("mean mae over variables") {
  const MetricsReport r = make_report("s", {"a", "b"}, 2, 0.1);
  CHECK(r.mean_mae("s", {"a", "b"}, 1) == doctest::Approx((0.1 + 0.2) / 2.0));
  CHECK_THROWS_AS(r.mean_mae("s", {"zzz"}, 1), Error);
}

TEST_CASE("comparison flags strict winners") {
  const std::vector<std::string> vars = {"a", "b"};
  SUBCASE("identical schemes share no flag") {
    const Comparison c = compare({make_report("x", vars, 2, 0.1), make_report("y", vars, 2, 0.1)});
    REQUIRE(c.best.size() == c.cells.size());
    for (auto f : c.best) CHECK(f == 0);
  }
  SUBCASE("a dominating scheme wins every cell") {
    const Comparison c = compare({make_report("x", vars, 2, 0.1), make_report("y", vars, 2, 0.05),
                                  make_report("z", vars, 2, 0.2)});
    CHECK(c.schemes == std::vector<std::string>{"x", "y", "z"});
    for (std::size_t i = 0; i < c.cells.size(); ++i) CHECK((c.best[i] == 1) == (c.cells[i].scheme == "y"));
    const std::string csv = comparison_csv(c);
    CHECK(csv.substr(0, csv.find('\n')).find(",best") != std::string::npos);
  }
  SUBCASE("a single scheme has no best column") {
    const Comparison c = compare({make_report("x", vars, 2, 0.1)});
    CHECK(c.best.empty());
    const std::string csv = comparison_csv(c);
    CHECK(csv.substr(0, csv.find('\n')).find("best") == std::string::npos);
  }
  SUBCASE("mismatched reports are rejected") {
    CHECK_THROWS_AS(compare({make_report("x", vars, 2, 0.1), make_report("y", {"a"}, 2, 0.1)}), Error);
    CHECK_THROWS_AS(compare({make_report("x", vars, 2, 0.1), make_report("y", vars, 3, 0.1)}), Error);
    CHECK_THROWS_AS(compare({make_report("x", vars, 2, 0.1), make_report("x", vars, 2, 0.1)}), Error);
    CHECK_THROWS_AS(compare({}), Error);
  }
}

TEST_CASE("plots and files") {
  const Comparison c = compare({make_report("x", {"a", "b"}, 3, 0.1), make_report("y", {"a", "b"}, 3, 0.2)});
  const std::string svg = horizon_svg(c, "a");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("x") != std::string::npos);
  const auto dir = std::filesystem::temp_directory_path() / "gatllm_test_compare";
  std::filesystem::remove_all(dir);
  const auto files = write_comparison(c, dir.string());
  CHECK(files.size() == 3);  // csv plus one plot per variable
  for (const auto& f : files) CHECK(std::filesystem::exists(f));
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
