// SPDX-License-Identifier: Apache-2.0

#include "gatllm/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "gatllm/error.hpp"
#include "json.hpp"

namespace gatllm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ForecasterConfig

bool ForecasterConfig::covers_all_columns() const {
  if (target_columns.size() != columns.size()) return false;
  std::set<std::size_t> seen(target_columns.begin(), target_columns.end());
  return seen.size() == columns.size();
}

VariableGraph ForecasterConfig::graph() const {
  if (adjacency.empty()) return VariableGraph::complete(input_dim());
  return VariableGraph(input_dim(), adjacency);
}

void ForecasterConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, "forecaster: " + what); };
  if (columns.empty()) fail("at least one input column is required");
  if (window < 2) fail("window must be at least 2");
  if (target_columns.empty()) fail("at least one target column is required");
  if (target_columns.size() > columns.size()) fail("more targets than input columns");
  std::set<std::size_t> seen;
  for (auto c : target_columns) {
    if (c >= columns.size()) fail("target column index " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second) fail("duplicate target column " + std::to_string(c));
  }
  if (rollout_steps < 1) fail("rollout_steps must be at least 1");
  if (gat.in_dim != 1) fail("gat.in_dim must be 1 (one scalar per variable)");
  gat.validate();
  backbone.validate();
  if (backbone.max_seq_len < window) fail("backbone.max_seq_len must be at least the window length");
  if (nonlinear_head && head_hidden == 0) fail("head_hidden must be positive");
  if (!adjacency.empty()) (void)graph();
}

namespace {

json config_json(const ForecasterConfig& c) {
  json j;
  j["window"] = c.window;
  j["columns"] = c.columns;
  j["target_columns"] = c.target_columns;
  j["gat"] = {{"in_dim", c.gat.in_dim},
              {"hidden_dim", c.gat.hidden_dim},
              {"heads", c.gat.heads},
              {"layers", c.gat.layers},
              {"leaky_slope", c.gat.leaky_slope},
              {"residual", c.gat.residual}};
  j["adjacency"] = c.adjacency;
  j["backbone"] = {{"layers", c.backbone.layers},       {"d_model", c.backbone.d_model},
                   {"heads", c.backbone.heads},         {"ff_dim", c.backbone.ff_dim},
                   {"max_seq_len", c.backbone.max_seq_len}, {"dropout", c.backbone.dropout},
                   {"init_std", c.backbone.init_std}};
  j["embedding"] = c.embedding == EmbeddingKind::Gat ? "gat" : "direct";
  j["rollout_steps"] = c.rollout_steps;
  j["nonlinear_head"] = c.nonlinear_head;
  j["head_hidden"] = c.head_hidden;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

std::string ForecasterConfig::to_text() const { return config_json(*this).dump(); }

ForecasterConfig ForecasterConfig::from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    ForecasterConfig c;
    c.window = j.at("window").get<std::size_t>();
    c.columns = j.at("columns").get<std::vector<std::string>>();
    c.target_columns = j.at("target_columns").get<std::vector<std::size_t>>();
    const auto& g = j.at("gat");
    c.gat.in_dim = g.at("in_dim").get<std::size_t>();
    c.gat.hidden_dim = g.at("hidden_dim").get<std::size_t>();
    c.gat.heads = g.at("heads").get<std::size_t>();
    c.gat.layers = g.at("layers").get<std::size_t>();
    c.gat.leaky_slope = g.at("leaky_slope").get<double>();
    c.gat.residual = g.at("residual").get<bool>();
    c.adjacency = j.at("adjacency").get<std::vector<std::uint8_t>>();
    const auto& b = j.at("backbone");
    c.backbone.layers = b.at("layers").get<std::size_t>();
    c.backbone.d_model = b.at("d_model").get<std::size_t>();
    c.backbone.heads = b.at("heads").get<std::size_t>();
    c.backbone.ff_dim = b.at("ff_dim").get<std::size_t>();
    c.backbone.max_seq_len = b.at("max_seq_len").get<std::size_t>();
    c.backbone.dropout = b.at("dropout").get<double>();
    c.backbone.init_std = b.at("init_std").get<double>();
    const auto embedding = j.at("embedding").get<std::string>();
    if (embedding != "gat" && embedding != "direct") throw Error(ErrorCode::Format, "unknown embedding " + embedding);
    c.embedding = embedding == "gat" ? EmbeddingKind::Gat : EmbeddingKind::Direct;
    c.rollout_steps = j.at("rollout_steps").get<std::size_t>();
    c.nonlinear_head = j.at("nonlinear_head").get<bool>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("forecaster config: ") + e.what());
  }
}

ForecasterConfig ForecasterConfig::for_columns(std::vector<std::string> columns) {
  ForecasterConfig c;
  c.target_columns.resize(columns.size());
  std::iota(c.target_columns.begin(), c.target_columns.end(), std::size_t{0});
  c.columns = std::move(columns);
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0) throw Error(ErrorCode::Config, "train: batch_size and epochs must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::Config, "train: learning_rate must be positive");
  if (!(grad_clip > 0.0)) throw Error(ErrorCode::Config, "train: grad_clip must be positive");
}

// ---------------------------------------------------------------------------
// Forecaster

Forecaster::Forecaster(ForecasterConfig config) : config_(std::move(config)) {
  config_.validate();
  build();
}

void Forecaster::build() {
  graph_ = config_.graph();
  std::mt19937_64 rng(config_.seed);
  const std::size_t n = config_.input_dim();
  const std::size_t d = config_.backbone.d_model;
  const double init_std = config_.backbone.init_std;
  std::size_t token_in = n;
  if (config_.embedding == EmbeddingKind::Gat) {
    gat_.emplace(config_.gat, rng);
    token_in = n * config_.gat.hidden_dim;
  }
  token_projection_ = Affine(token_in, d, "embed.projection", init_std, rng);
  decoder_.emplace(config_.backbone, rng);
  if (config_.nonlinear_head) {
    head_hidden_ = Affine(d, config_.head_hidden, "head.hidden", init_std, rng);
    head_ = Affine(config_.head_hidden, config_.output_dim(), "head.output", init_std, rng);
  } else {
    head_ = Affine(d, config_.output_dim(), "head.output", init_std, rng);
  }
}

Tensor Forecaster::forward(const Tensor& windows, Tape* tape, std::mt19937_64* dropout_rng,
                           AttentionProbe* probe) const {
  const std::size_t n = config_.input_dim();
  if (windows.rank() != 3 || windows.dim(2) != n) {
    throw Error(ErrorCode::Shape, "forecaster: expected windows [batch, tau, " + std::to_string(n) + "], got " +
                                      shape_string(windows.shape()));
  }
  if (windows.dim(1) > config_.backbone.max_seq_len) {
    throw Error(ErrorCode::Range, "forecaster: window of " + std::to_string(windows.dim(1)) +
                                      " rows exceeds max_seq_len " + std::to_string(config_.backbone.max_seq_len));
  }
  for (double v : windows.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::Data, "forecaster: non-finite value in input window");
  }
  const std::size_t batch = windows.dim(0);
  const std::size_t len = windows.dim(1);
  Tensor tokens;
  if (gat_) {
    const Tensor nodes = ops::reshape(windows, {batch, len, n, 1});
    const Tensor features = gat_->forward(nodes, graph_, tape);
    tokens = embed_tokens(ops::reshape(features, {batch, len, n * config_.gat.hidden_dim}), token_projection_, tape);
  } else {
    tokens = embed_tokens(windows, token_projection_, tape);
  }
  Tensor h = decoder_->forward(tokens, tape, dropout_rng, probe);
  if (config_.nonlinear_head) h = ops::gelu(head_hidden_(h, tape));
  return head_(h, tape);
}

Tensor Forecaster::batch_tensor(std::span<const Matrix> windows) const {
  if (windows.empty()) throw Error(ErrorCode::InvalidArgument, "forecaster: no windows");
  const std::size_t len = windows[0].rows();
  const std::size_t n = config_.input_dim();
  std::vector<double> data;
  data.reserve(windows.size() * len * n);
  for (const auto& w : windows) {
    if (w.rows() != len || w.cols() != n) {
      throw Error(ErrorCode::Shape, "forecaster: window " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                        ", expected " + std::to_string(len) + "x" + std::to_string(n));
    }
    data.insert(data.end(), w.data().begin(), w.data().end());
  }
  return Tensor({windows.size(), len, n}, std::move(data));
}

Matrix Forecaster::forward(const Matrix& window) const {
  const Tensor out = forward(batch_tensor(std::span<const Matrix>(&window, 1)), nullptr);
  return Matrix(out.dim(1), out.dim(2), std::vector<double>(out.data().begin(), out.data().end()));
}

std::vector<double> Forecaster::predict_one_step(const Matrix& window) const {
  const Matrix out = predict_one_step(std::span<const Matrix>(&window, 1));
  return {out.data().begin(), out.data().end()};
}

Matrix Forecaster::predict_one_step(std::span<const Matrix> windows) const {
  const Tensor out = forward(batch_tensor(windows), nullptr);
  const std::size_t len = out.dim(1);
  const std::size_t m = out.dim(2);
  Matrix result(windows.size(), m);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    for (std::size_t j = 0; j < m; ++j) result(b, j) = out[(b * len + len - 1) * m + j];
  }
  return result;
}

std::vector<Matrix> Forecaster::rollout_normalized(std::span<const Matrix> windows, std::size_t steps) const {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "rollout: steps must be at least 1");
  if (!config_.covers_all_columns()) {
    throw Error(ErrorCode::InvalidArgument,
                "rollout: autoregressive forecasting needs every input column as a target (M = N)");
  }
  const std::size_t m = config_.output_dim();
  std::vector<Matrix> current(windows.begin(), windows.end());
  std::vector<Matrix> result(windows.size(), Matrix(steps, m));
  for (std::size_t s = 0; s < steps; ++s) {
    const Matrix next = predict_one_step(current);
    for (std::size_t b = 0; b < current.size(); ++b) {
      auto& w = current[b];
      const std::size_t len = w.rows();
      const std::size_t n = w.cols();
      std::copy(w.data().begin() + static_cast<std::ptrdiff_t>(n), w.data().end(), w.data().begin());
      for (std::size_t j = 0; j < m; ++j) {
        result[b](s, j) = next(b, j);
        w(len - 1, config_.target_columns[j]) = next(b, j);
      }
    }
  }
  return result;
}

Matrix Forecaster::rollout_normalized(const Matrix& window, std::size_t steps) const {
  return rollout_normalized(std::span<const Matrix>(&window, 1), steps).front();
}

Forecast Forecaster::rollout(const Matrix& window, std::size_t steps, int sample_period_ms) const {
  if (stats_.size() != config_.input_dim()) {
    throw Error(ErrorCode::InvalidArgument, "rollout: model carries no normalization statistics");
  }
  Forecast f;
  f.values = denormalize(rollout_normalized(window, steps), stats_, config_.target_columns);
  for (auto c : config_.target_columns) f.columns.push_back(config_.columns[c]);
  for (std::size_t s = 0; s < steps; ++s) f.horizon_ms.push_back(static_cast<std::int64_t>(s + 1) * sample_period_ms);
  return f;
}

void Forecaster::set_stats(NormalizationStats stats) {
  if (stats.min.size() != config_.input_dim() || stats.max.size() != config_.input_dim()) {
    throw Error(ErrorCode::Shape, "forecaster: normalization stats cover " + std::to_string(stats.min.size()) +
                                      " columns, model has " + std::to_string(config_.input_dim()));
  }
  stats_ = std::move(stats);
}

std::vector<Parameter*> Forecaster::parameters() {
  std::vector<Parameter*> out;
  if (gat_) gat_->collect(out);
  token_projection_.collect(out);
  decoder_->collect(out);
  if (config_.nonlinear_head) head_hidden_.collect(out);
  head_.collect(out);
  return out;
}

std::vector<const Parameter*> Forecaster::parameters() const {
  std::vector<const Parameter*> out;
  if (gat_) gat_->collect(out);
  token_projection_.collect(out);
  decoder_->collect(out);
  if (config_.nonlinear_head) head_hidden_.collect(out);
  head_.collect(out);
  return out;
}

std::size_t Forecaster::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->value.size();
  return total;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Batch {
  Tensor inputs;   // [b, tau, N]
  Tensor targets;  // [b, tau - 1, M]
};

Batch make_batch(const WindowedDataset& data, std::span<const std::size_t> indices,
                 const std::vector<std::size_t>& target_columns) {
  const std::size_t len = data.window_len;
  const std::size_t n = data.cols;
  const std::size_t m = target_columns.size();
  const std::size_t b = indices.size();
  std::vector<double> x;
  x.reserve(b * len * n);
  std::vector<double> y;
  y.reserve(b * (len - 1) * m);
  for (auto i : indices) {
    const Matrix& w = data.inputs[i];
    x.insert(x.end(), w.data().begin(), w.data().end());
    // Position t (1..len-1) is scored against row t + 1; row len is the target.
    for (std::size_t t = 1; t < len; ++t) {
      for (auto c : target_columns) y.push_back(t + 1 < len ? w(t + 1, c) : data.targets[i][c]);
    }
  }
  return {Tensor({b, len, n}, std::move(x)), Tensor({b, len - 1, m}, std::move(y))};
}

Tensor supervised_loss(const Forecaster& model, const Batch& batch, Tape* tape, std::mt19937_64* dropout_rng) {
  const Tensor pred = model.forward(batch.inputs, tape, dropout_rng);
  const std::size_t len = pred.dim(1);
  const Tensor diff = ops::sub(ops::slice(pred, 1, 1, len), batch.targets);
  return ops::mean(ops::mul(diff, diff));
}

void check_dataset(const Forecaster& model, const WindowedDataset& data) {
  if (data.empty()) throw Error(ErrorCode::Data, "train: dataset is empty");
  if (data.cols != model.config().input_dim()) {
    throw Error(ErrorCode::Shape, "train: dataset has " + std::to_string(data.cols) + " columns, model expects " +
                                      std::to_string(model.config().input_dim()));
  }
  if (data.window_len < 2) throw Error(ErrorCode::Data, "train: windows need at least 2 rows");
  if (data.targets.size() != data.inputs.size()) throw Error(ErrorCode::Data, "train: targets missing");
}

}  // namespace

double evaluate_loss(const Forecaster& model, const WindowedDataset& data, std::size_t batch_size) {
  check_dataset(model, data);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, idx.size() - start);
    const Batch batch = make_batch(data, std::span<const std::size_t>(idx).subspan(start, count),
                                   model.config().target_columns);
    total += supervised_loss(model, batch, nullptr, nullptr).item() * static_cast<double>(count);
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(Forecaster& model, const WindowedDataset& data, const TrainConfig& cfg,
                  const WindowedDataset* validation, const TrainLog& log) {
  cfg.validate();
  check_dataset(model, data);
  if (validation && !validation->empty()) check_dataset(model, *validation);
  if (validation && validation->empty()) validation = nullptr;

  const auto params = model.parameters();
  AdamState adam(AdamConfig{cfg.learning_rate});
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64* dropout = model.config().backbone.dropout > 0.0 ? &dropout_rng : nullptr;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<double>> grads(params.size());

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const Batch batch = make_batch(data, std::span<const std::size_t>(order).subspan(start, count),
                                     model.config().target_columns);
      Tape tape;
      const Tensor loss = supervised_loss(model, batch, &tape, dropout);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::Diverged, "train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                             ", batch starting at " + std::to_string(start));
      }
      const Gradients g = tape.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto raw = g.raw(*params[i]);
        if (raw.empty()) {
          grads[i].assign(params[i]->value.size(), 0.0);
        } else {
          grads[i].assign(raw.begin(), raw.end());
        }
      }
      clip_global_norm(grads, cfg.grad_clip);
      adam.step(params, grads);
      total += value * static_cast<double>(count);
    }
    const double epoch_loss = total / static_cast<double>(data.size());
    result.epoch_loss.push_back(epoch_loss);

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (validation) {
      val_loss = evaluate_loss(model, *validation);
      result.validation_loss.push_back(val_loss);
      if (val_loss < best) {
        best = val_loss;
        result.best_epoch = epoch;
        stale = 0;
        if (cfg.patience > 0) {
          best_values.clear();
          for (auto* p : params) best_values.push_back(p->value.detach());
        }
      } else {
        ++stale;
      }
    } else if (epoch_loss < best) {
      best = epoch_loss;
      result.best_epoch = epoch;
    }
    if (log) log(epoch + 1, epoch_loss, val_loss);
    if (validation && cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (validation && cfg.patience > 0 && !best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  return result;
}

}  // namespace gatllm
