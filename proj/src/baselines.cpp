// SPDX-License-Identifier: Apache-2.0

#include "gatllm/baselines.hpp"

#include <Eigen/Dense>

#include "gatllm/error.hpp"

namespace gatllm {

namespace {

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRidgeLambda = 1e-8;

}  // namespace

Matrix difference(const Matrix& values, std::size_t d) {
  Matrix cur = values;
  for (std::size_t k = 0; k < d; ++k) {
    if (cur.rows() < 2) throw Error(ErrorCode::Data, "difference: too few rows for order " + std::to_string(d));
    Matrix next(cur.rows() - 1, cur.cols());
    for (std::size_t r = 0; r + 1 < cur.rows(); ++r) {
      for (std::size_t c = 0; c < cur.cols(); ++c) next(r, c) = cur(r + 1, c) - cur(r, c);
    }
    cur = std::move(next);
  }
  return cur;
}

VarModel fit_var(const Matrix& series, std::size_t p, std::size_t d) {
  const std::size_t n = series.cols();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "fit_var: no columns");
  if (series.rows() <= d || series.rows() - d <= n * p + 1) {
    throw Error(ErrorCode::Data, "fit_var: " + std::to_string(series.rows()) + " rows cannot identify VAR(" +
                                     std::to_string(p) + ") with d=" + std::to_string(d) + " over " +
                                     std::to_string(n) + " variables");
  }
  const Matrix z = difference(series, d);
  const std::size_t obs = z.rows() - p;
  const std::size_t k = 1 + n * p;
  EigenMatrix x(obs, k);
  EigenMatrix y(obs, n);
  for (std::size_t t = 0; t < obs; ++t) {
    const std::size_t row = t + p;
    x(t, 0) = 1.0;
    for (std::size_t lag = 1; lag <= p; ++lag) {
      for (std::size_t c = 0; c < n; ++c) x(t, 1 + (lag - 1) * n + c) = z(row - lag, c);
    }
    for (std::size_t c = 0; c < n; ++c) y(t, c) = z(row, c);
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  const Eigen::MatrixXd rhs = x.transpose() * y;
  VarModel model;
  model.p = p;
  model.d = d;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (static_cast<std::size_t>(lu.rank()) < k) {
    model.ridge_fallback = true;
    gram.diagonal().array() += kRidgeLambda;
  }
  const Eigen::MatrixXd beta = gram.ldlt().solve(rhs);  // k x n
  model.intercept.resize(n);
  for (std::size_t c = 0; c < n; ++c) model.intercept[c] = beta(0, c);
  for (std::size_t lag = 0; lag < p; ++lag) {
    Matrix a(n, n);
    for (std::size_t eq = 0; eq < n; ++eq) {
      for (std::size_t c = 0; c < n; ++c) a(eq, c) = beta(1 + lag * n + c, eq);
    }
    model.coefficients.push_back(std::move(a));
  }
  return model;
}

Matrix var_forecast(const VarModel& model, const Matrix& history, std::size_t steps) {
  const std::size_t n = model.dim();
  if (history.cols() != n) {
    throw Error(ErrorCode::Shape, "var_forecast: history has " + std::to_string(history.cols()) + " columns, model " +
                                      std::to_string(n));
  }
  if (history.rows() < model.p + model.d || history.rows() == 0) {
    throw Error(ErrorCode::Data, "var_forecast: history needs at least " + std::to_string(model.p + model.d) + " rows");
  }
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "var_forecast: steps must be at least 1");

  // Last level of each differencing order, needed to integrate back.
  std::vector<std::vector<double>> anchors;
  Matrix z = history;
  for (std::size_t k = 0; k < model.d; ++k) {
    anchors.emplace_back(z.row(z.rows() - 1).begin(), z.row(z.rows() - 1).end());
    z = difference(z, 1);
  }
  std::vector<std::vector<double>> lags;  // most recent first
  for (std::size_t i = 0; i < model.p; ++i) {
    const auto r = z.row(z.rows() - 1 - i);
    lags.emplace_back(r.begin(), r.end());
  }
  Matrix out(steps, n);
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<double> next = model.intercept;
    for (std::size_t i = 0; i < model.p; ++i) {
      const Matrix& a = model.coefficients[i];
      for (std::size_t eq = 0; eq < n; ++eq) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += a(eq, c) * lags[i][c];
        next[eq] += acc;
      }
    }
    if (model.p > 0) {
      lags.pop_back();
      lags.insert(lags.begin(), next);
    }
    for (std::size_t c = 0; c < n; ++c) out(s, c) = next[c];
  }
  for (std::size_t k = model.d; k-- > 0;) {
    std::vector<double> level = anchors[k];
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t c = 0; c < n; ++c) {
        level[c] += out(s, c);
        out(s, c) = level[c];
      }
    }
  }
  return out;
}

const char* to_string(BaselineKind kind) noexcept {
  switch (kind) {
    case BaselineKind::Varima: return "varima";
    case BaselineKind::UnivariateGatLlm: return "univariate";
    case BaselineKind::NoGatDecoder: return "nogat";
    case BaselineKind::Persistence: return "persistence";
  }
  return "unknown";
}

BaselineKind parse_baseline(const std::string& name) {
  for (auto k : {BaselineKind::Varima, BaselineKind::UnivariateGatLlm, BaselineKind::NoGatDecoder,
                 BaselineKind::Persistence}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::Config, "unknown baseline '" + name + "' (expected varima, univariate, nogat, persistence)");
}

// ---------------------------------------------------------------------------
// Schemes

Scheme persistence_scheme(std::size_t columns) {
  Scheme s;
  s.name = to_string(BaselineKind::Persistence);
  for (std::size_t c = 0; c < columns; ++c) s.columns.push_back(c);
  s.rollout = [](std::span<const Matrix> windows, std::size_t steps) {
    std::vector<Matrix> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
      Matrix f(steps, w.cols());
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t c = 0; c < w.cols(); ++c) f(t, c) = w(w.rows() - 1, c);
      }
      out.push_back(std::move(f));
    }
    return out;
  };
  return s;
}

Scheme var_scheme(std::shared_ptr<const VarModel> model) {
  Scheme s;
  s.name = to_string(BaselineKind::Varima);
  for (std::size_t c = 0; c < model->dim(); ++c) s.columns.push_back(c);
  s.rollout = [model](std::span<const Matrix> windows, std::size_t steps) {
    std::vector<Matrix> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(var_forecast(*model, w, steps));
    return out;
  };
  return s;
}

Scheme forecaster_scheme(const std::string& name, std::shared_ptr<const Forecaster> model) {
  Scheme s;
  s.name = name;
  s.columns = model->config().target_columns;
  s.rollout = [model](std::span<const Matrix> windows, std::size_t steps) {
    return model->rollout_normalized(windows, steps);
  };
  return s;
}

Scheme univariate_scheme(std::shared_ptr<const std::vector<Forecaster>> models, std::vector<std::size_t> columns) {
  if (models->size() != columns.size()) throw Error(ErrorCode::InvalidArgument, "univariate: one model per column");
  Scheme s;
  s.name = to_string(BaselineKind::UnivariateGatLlm);
  s.columns = columns;
  s.rollout = [models, columns](std::span<const Matrix> windows, std::size_t steps) {
    std::vector<Matrix> out(windows.size(), Matrix(steps, columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
      std::vector<Matrix> single;
      single.reserve(windows.size());
      const std::size_t col[] = {columns[k]};
      for (const auto& w : windows) single.push_back(w.select_columns(col));
      const auto preds = (*models)[k].rollout_normalized(single, steps);
      for (std::size_t b = 0; b < windows.size(); ++b) {
        for (std::size_t t = 0; t < steps; ++t) out[b](t, k) = preds[b](t, 0);
      }
    }
    return out;
  };
  return s;
}

ForecasterConfig nogat_config(ForecasterConfig base) {
  base.embedding = EmbeddingKind::Direct;
  return base;
}

ForecasterConfig univariate_config(const ForecasterConfig& base, const std::string& column) {
  ForecasterConfig c = base;
  c.columns = {column};
  c.target_columns = {0};
  c.adjacency.clear();
  return c;
}

// ---------------------------------------------------------------------------
// Runs

WindowedDataset training_windows(const Matrix& normalized, RowRange rows, std::size_t window, std::size_t stride,
                                 const std::vector<std::size_t>& columns) {
  if (columns.empty()) return make_windows(normalized, WindowConfig{window, stride}, rows);
  return make_windows(normalized.select_columns(columns), WindowConfig{window, stride}, rows);
}

namespace {

void check_inputs(const BaselineInputs& in) {
  if (!in.normalized) throw Error(ErrorCode::InvalidArgument, "baseline: no data");
  if (in.names.size() != in.normalized->cols()) throw Error(ErrorCode::Shape, "baseline: names do not match data");
}

Forecaster train_one(const ForecasterConfig& cfg, const BaselineInputs& in, const std::vector<std::size_t>& columns) {
  Forecaster model(cfg);
  const WindowedDataset data = training_windows(*in.normalized, in.train, cfg.window, in.train_stride, columns);
  WindowedDataset validation;
  // Validation loss only matters for early stopping.
  if (in.training.patience > 0 && in.validation.size() > cfg.window) {
    validation = training_windows(*in.normalized, in.validation, cfg.window, 1, columns);
  }
  train(model, data, in.training, validation.empty() ? nullptr : &validation, in.log);
  return model;
}

}  // namespace

std::vector<Forecaster> train_univariate(const BaselineInputs& in, const std::vector<std::size_t>& columns) {
  check_inputs(in);
  std::vector<Forecaster> models;
  for (auto c : columns) {
    const ForecasterConfig cfg = univariate_config(in.model, in.names.at(c));
    Forecaster m = train_one(cfg, in, {c});
    m.set_stats(select(in.stats, {c}));
    models.push_back(std::move(m));
  }
  return models;
}

MetricsReport run_baseline(BaselineKind kind, const BaselineInputs& in) {
  check_inputs(in);
  Scheme scheme;
  switch (kind) {
    case BaselineKind::Persistence:
      scheme = persistence_scheme(in.normalized->cols());
      break;
    case BaselineKind::Varima: {
      const Matrix train_rows = in.normalized->rows_slice(in.train.begin, in.train.end);
      scheme = var_scheme(std::make_shared<const VarModel>(fit_var(train_rows, in.var_p, in.var_d)));
      break;
    }
    case BaselineKind::NoGatDecoder: {
      Forecaster m = train_one(nogat_config(in.model), in, {});
      m.set_stats(in.stats);
      scheme = forecaster_scheme(to_string(kind), std::make_shared<const Forecaster>(std::move(m)));
      break;
    }
    case BaselineKind::UnivariateGatLlm: {
      std::vector<std::size_t> columns = in.evaluation.report_columns;
      if (columns.empty()) {
        for (std::size_t c = 0; c < in.names.size(); ++c) columns.push_back(c);
      }
      auto models = std::make_shared<const std::vector<Forecaster>>(train_univariate(in, columns));
      scheme = univariate_scheme(models, columns);
      break;
    }
  }
  MetricsReport report = evaluate_horizons(scheme, *in.normalized, in.stats, in.names, in.test, in.evaluation);
  report.metadata.train = in.train;
  report.metadata.validation = in.validation;
  report.metadata.seed = in.training.seed;
  return report;
}

}  // namespace gatllm
