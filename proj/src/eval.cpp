// SPDX-License-Identifier: Apache-2.0

#include "gatllm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gatllm/error.hpp"
#include "json.hpp"

namespace gatllm {

namespace {

/// Neumaier-compensated running sum.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_pair(std::span<const double> a, std::span<const double> b, const char* metric) {
  if (a.empty()) throw Error(ErrorCode::InvalidArgument, std::string(metric) + ": empty input");
  if (a.size() != b.size()) {
    throw Error(ErrorCode::Shape, std::string(metric) + ": lengths " + std::to_string(a.size()) + " and " +
                                      std::to_string(b.size()) + " differ");
  }
}

/// 17 significant digits round-trip any double.
std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

constexpr const char* kReportHeader = "scheme,variable,horizon,mae_norm,rmse_norm,mae_orig,rmse_orig,n";

std::string cell_line(const MetricCell& c) {
  for (const auto* s : {&c.scheme, &c.variable}) {
    if (s->find_first_of(",\n\r") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "report: name '" + *s + "' contains a separator");
    }
  }
  return c.scheme + "," + c.variable + "," + std::to_string(c.horizon) + "," + fmt_exact(c.mae_norm) + "," +
         fmt_exact(c.rmse_norm) + "," + fmt_exact(c.mae_orig) + "," + fmt_exact(c.rmse_orig) + "," + std::to_string(c.n);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

double mae(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "mae");
  Accumulator acc;
  for (std::size_t i = 0; i < actual.size(); ++i) acc.add(std::abs(actual[i] - predicted[i]));
  return acc.value() / static_cast<double>(actual.size());
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  check_pair(actual, predicted, "rmse");
  Accumulator acc;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - predicted[i];
    acc.add(d * d);
  }
  return std::sqrt(acc.value() / static_cast<double>(actual.size()));
}

// ---------------------------------------------------------------------------
// MetricsReport

const MetricCell* MetricsReport::find(const std::string& scheme, const std::string& variable,
                                      std::size_t horizon) const {
  for (const auto& c : cells) {
    if (c.scheme == scheme && c.variable == variable && c.horizon == horizon) return &c;
  }
  return nullptr;
}

std::vector<std::string> MetricsReport::schemes() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.scheme) == out.end()) out.push_back(c.scheme);
  }
  return out;
}

std::vector<std::string> MetricsReport::variables() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.variable) == out.end()) out.push_back(c.variable);
  }
  return out;
}

std::size_t MetricsReport::max_horizon() const {
  std::size_t h = 0;
  for (const auto& c : cells) h = std::max(h, c.horizon);
  return h;
}

double MetricsReport::mean_mae(const std::string& scheme, const std::vector<std::string>& variables,
                               std::size_t horizon) const {
  if (variables.empty()) throw Error(ErrorCode::InvalidArgument, "mean_mae: no variables");
  double total = 0.0;
  for (const auto& v : variables) {
    const MetricCell* c = find(scheme, v, horizon);
    if (!c) {
      throw Error(ErrorCode::InvalidArgument, "report has no cell for " + scheme + "/" + v + " at horizon " +
                                                  std::to_string(horizon));
    }
    total += c->mae_norm;
  }
  return total / static_cast<double>(variables.size());
}

// ---------------------------------------------------------------------------
// Evaluation

MetricsReport evaluate_horizons(const Scheme& scheme, const Matrix& normalized, const NormalizationStats& stats,
                                const std::vector<std::string>& names, RowRange test, const EvaluationSpec& spec) {
  if (spec.window == 0 || spec.horizon == 0 || spec.stride == 0 || spec.batch == 0) {
    throw Error(ErrorCode::InvalidArgument, "evaluate: window, horizon, stride and batch must be positive");
  }
  if (test.end > normalized.rows() || test.empty()) throw Error(ErrorCode::Range, "evaluate: invalid test range");
  if (names.size() != normalized.cols() || stats.size() != normalized.cols()) {
    throw Error(ErrorCode::Shape, "evaluate: names/stats do not match the table width");
  }
  std::vector<std::size_t> report = spec.report_columns.empty() ? scheme.columns : spec.report_columns;
  std::vector<std::size_t> slot;  // position of each reported column in the scheme output
  for (auto c : report) {
    const auto it = std::find(scheme.columns.begin(), scheme.columns.end(), c);
    if (it == scheme.columns.end()) {
      throw Error(ErrorCode::InvalidArgument, "evaluate: scheme " + scheme.name + " does not predict column " +
                                                  (c < names.size() ? names[c] : std::to_string(c)));
    }
    slot.push_back(static_cast<std::size_t>(it - scheme.columns.begin()));
  }

  // Only test rows are visible from here on.
  const Matrix rows = normalized.rows_slice(test.begin, test.end);
  if (rows.rows() < spec.window + spec.horizon) {
    throw Error(ErrorCode::Data, "evaluate: test split of " + std::to_string(rows.rows()) +
                                     " rows has no window with " + std::to_string(spec.horizon) + " future rows");
  }
  std::vector<std::size_t> origins;
  for (std::size_t o = 0; o + spec.window + spec.horizon <= rows.rows(); o += spec.stride) origins.push_back(o);

  const std::size_t v = report.size();
  const std::size_t l = spec.horizon;
  std::vector<Accumulator> abs_n(v * l), sq_n(v * l), abs_o(v * l), sq_o(v * l);

  for (std::size_t start = 0; start < origins.size(); start += spec.batch) {
    const std::size_t count = std::min(spec.batch, origins.size() - start);
    std::vector<Matrix> windows;
    windows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t o = origins[start + i];
      windows.push_back(rows.rows_slice(o, o + spec.window));
    }
    const std::vector<Matrix> preds = scheme.rollout(windows, l);
    if (preds.size() != count) throw Error(ErrorCode::Shape, "evaluate: scheme returned wrong number of forecasts");
    for (std::size_t i = 0; i < count; ++i) {
      const Matrix& p = preds[i];
      if (p.rows() != l || p.cols() != scheme.columns.size()) {
        throw Error(ErrorCode::Shape, "evaluate: scheme " + scheme.name + " returned a " + std::to_string(p.rows()) +
                                          "x" + std::to_string(p.cols()) + " forecast");
      }
      const std::size_t o = origins[start + i];
      for (std::size_t s = 0; s < l; ++s) {
        const std::size_t truth_row = o + spec.window + s;
        for (std::size_t k = 0; k < v; ++k) {
          const std::size_t c = report[k];
          const double yn = rows(truth_row, c);
          const double pn = p(s, slot[k]);
          const double dn = pn - yn;
          const double lo = stats.min[c];
          const double span = stats.degenerate(c) ? 0.0 : stats.range(c);
          const double d_o = (pn * span + lo) - (yn * span + lo);
          const std::size_t idx = k * l + s;
          abs_n[idx].add(std::abs(dn));
          sq_n[idx].add(dn * dn);
          abs_o[idx].add(std::abs(d_o));
          sq_o[idx].add(d_o * d_o);
        }
      }
    }
  }

  MetricsReport out;
  out.metadata.test = test;
  const double n = static_cast<double>(origins.size());
  for (std::size_t k = 0; k < v; ++k) {
    for (std::size_t s = 0; s < l; ++s) {
      const std::size_t idx = k * l + s;
      MetricCell c;
      c.scheme = scheme.name;
      c.variable = names[report[k]];
      c.horizon = s + 1;
      c.mae_norm = abs_n[idx].value() / n;
      c.rmse_norm = std::sqrt(sq_n[idx].value() / n);
      c.mae_orig = abs_o[idx].value() / n;
      c.rmse_orig = std::sqrt(sq_o[idx].value() / n);
      c.n = origins.size();
      out.cells.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report files

std::string report_csv(const MetricsReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& c : report.cells) out += cell_line(c) + "\n";
  return out;
}

MetricsReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Format, "report: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind(kReportHeader, 0) != 0) throw Error(ErrorCode::Format, "report: unexpected header '" + line + "'");
  MetricsReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() < 8) throw Error(ErrorCode::Format, "report: line " + std::to_string(lineno) + " has too few fields");
    try {
      MetricCell c;
      c.scheme = f[0];
      c.variable = f[1];
      c.horizon = std::stoull(f[2]);
      c.mae_norm = std::stod(f[3]);
      c.rmse_norm = std::stod(f[4]);
      c.mae_orig = std::stod(f[5]);
      c.rmse_orig = std::stod(f[6]);
      c.n = std::stoull(f[7]);
      report.cells.push_back(std::move(c));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::Format, "report: line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return report;
}

std::string metadata_json(const ReportMetadata& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["config_digest"] = m.config_digest;
  j["split"] = {{"train", {m.train.begin, m.train.end}},
                {"validation", {m.validation.begin, m.validation.end}},
                {"test", {m.test.begin, m.test.end}}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Comparison

Comparison compare(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "compare: no reports");
  Comparison cmp;
  cmp.variables = reports.front().variables();
  cmp.horizon = reports.front().max_horizon();
  const std::set<std::string> vars(cmp.variables.begin(), cmp.variables.end());
  for (const auto& r : reports) {
    const auto rv = r.variables();
    if (std::set<std::string>(rv.begin(), rv.end()) != vars || r.max_horizon() != cmp.horizon) {
      throw Error(ErrorCode::InvalidArgument, "compare: reports cover different variables or horizons");
    }
    for (const auto& s : r.schemes()) {
      if (std::find(cmp.schemes.begin(), cmp.schemes.end(), s) != cmp.schemes.end()) {
        throw Error(ErrorCode::InvalidArgument, "compare: scheme " + s + " appears twice");
      }
      cmp.schemes.push_back(s);
      for (const auto& v : cmp.variables) {
        for (std::size_t h = 1; h <= cmp.horizon; ++h) {
          const MetricCell* c = r.find(s, v, h);
          if (!c) throw Error(ErrorCode::InvalidArgument, "compare: " + s + " lacks " + v + " at horizon " + std::to_string(h));
          cmp.cells.push_back(*c);
        }
      }
    }
  }
  if (cmp.schemes.size() > 1) {
    cmp.best.assign(cmp.cells.size(), 0);
    for (std::size_t i = 0; i < cmp.cells.size(); ++i) {
      bool strictly = true;
      for (std::size_t j = 0; j < cmp.cells.size() && strictly; ++j) {
        if (i == j || cmp.cells[j].variable != cmp.cells[i].variable || cmp.cells[j].horizon != cmp.cells[i].horizon) {
          continue;
        }
        strictly = cmp.cells[i].mae_norm < cmp.cells[j].mae_norm;
      }
      cmp.best[i] = strictly ? 1 : 0;
    }
  }
  return cmp;
}

std::string comparison_csv(const Comparison& cmp) {
  const bool flagged = !cmp.best.empty();
  std::string out = std::string(kReportHeader) + (flagged ? ",best\n" : "\n");
  for (std::size_t i = 0; i < cmp.cells.size(); ++i) {
    out += cell_line(cmp.cells[i]);
    if (flagged) out += cmp.best[i] ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

std::string horizon_svg(const Comparison& cmp, const std::string& variable) {
  constexpr double width = 640, height = 400, left = 70, right = 150, top = 40, bottom = 50;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  double ymax = 0.0;
  for (const auto& c : cmp.cells) {
    if (c.variable == variable) ymax = std::max(ymax, c.mae_norm);
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double hmax = static_cast<double>(std::max<std::size_t>(cmp.horizon, 2));
  auto x_of = [&](double h) { return left + (h - 1.0) / (hmax - 1.0) * plot_w; };
  auto y_of = [&](double v) { return top + plot_h - v / ymax * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << xml_escape(variable)
      << ": MAE (normalized) by horizon</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  for (std::size_t h = 1; h <= cmp.horizon; ++h) {
    svg << "<text x=\"" << x_of(static_cast<double>(h)) << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\">" << h << "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double v = ymax * t / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << fmt_short(v)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">horizon (steps)</text>\n";
  for (std::size_t s = 0; s < cmp.schemes.size(); ++s) {
    const char* colour = palette[s % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& c : cmp.cells) {
      if (c.scheme == cmp.schemes[s] && c.variable == variable) {
        svg << x_of(static_cast<double>(c.horizon)) << "," << y_of(c.mae_norm) << " ";
      }
    }
    svg << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(s);
    svg << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 32 << "\" y2=\""
        << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(cmp.schemes[s])
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> write_comparison(const Comparison& cmp, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& body) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    written.push_back(path);
  };
  put("comparison.csv", comparison_csv(cmp));
  for (const auto& v : cmp.variables) put(v + "_horizon.svg", horizon_svg(cmp, v));
  return written;
}

}  // namespace gatllm
