// SPDX-License-Identifier: Apache-2.0

#include "gatllm/experiment.hpp"

#include <zlib.h>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "gatllm/baselines.hpp"
#include "gatllm/error.hpp"
#include "json.hpp"

namespace gatllm {

using json = nlohmann::ordered_json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SyntheticConfig, length, missing_prob, sinr_mean_db, sinr_std_db, sinr_rho,
                                   sinr_noise_db, cqi_delay, mcs_offset, mcs_per_db, prb_mean, prb_rho, prb_logit_std,
                                   bits_per_prb, rate_noise, cell_load_mean, cell_load_std, cell_load_rho,
                                   buffer_capacity, arrival_rate, arrival_shape, sdu_bits, bw_smoothing, bw_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GatConfig, hidden_dim, heads, layers, leaky_slope, residual)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BackboneConfig, layers, d_model, heads, ff_dim, max_seq_len, dropout, init_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, batch_size, epochs, learning_rate, patience, grad_clip)

namespace {

// The field macros target the plain (sorted-key) document type.
json ordered(const nlohmann::json& j) { return json::parse(j.dump()); }

template <typename T>
T plain_get(const json& j) {
  return nlohmann::json::parse(j.dump()).get<T>();
}

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::Config, "config: " + what); }

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"source", c.data.source},
               {"csv_path", c.data.csv_path},
               {"sample_period_ms", c.data.sample_period_ms},
               {"interpolation_points", c.data.interpolation_points},
               {"split", c.data.split},
               {"synthetic", ordered(c.data.synthetic)}};
  j["window"] = {{"length", c.window}, {"train_stride", c.train_stride}};
  j["model"] = {{"embedding", c.embedding == EmbeddingKind::Gat ? "gat" : "direct"},
                {"targets", c.targets},
                {"adjacency", c.adjacency},
                {"gat", ordered(c.gat)},
                {"backbone", ordered(c.backbone)},
                {"nonlinear_head", c.nonlinear_head},
                {"head_hidden", c.head_hidden}};
  j["train"] = ordered(c.train);
  j["evaluation"] = {{"horizon", c.horizon},
                     {"stride", c.eval_stride},
                     {"batch", c.eval_batch},
                     {"variables", c.variables},
                     {"schemes", c.schemes}};
  j["varima"] = {{"p", c.var_p}, {"d", c.var_d}};
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  const auto& d = j.at("data");
  c.data.source = d.at("source").get<std::string>();
  c.data.csv_path = d.at("csv_path").get<std::string>();
  c.data.sample_period_ms = d.at("sample_period_ms").get<int>();
  c.data.interpolation_points = d.at("interpolation_points").get<std::size_t>();
  c.data.split = d.at("split").get<std::array<double, 3>>();
  c.data.synthetic = plain_get<SyntheticConfig>(d.at("synthetic"));
  c.window = j.at("window").at("length").get<std::size_t>();
  c.train_stride = j.at("window").at("train_stride").get<std::size_t>();
  const auto& m = j.at("model");
  const auto embedding = m.at("embedding").get<std::string>();
  if (embedding != "gat" && embedding != "direct") config_error("model.embedding must be gat or direct");
  c.embedding = embedding == "gat" ? EmbeddingKind::Gat : EmbeddingKind::Direct;
  c.targets = m.at("targets").get<std::vector<std::string>>();
  c.adjacency = m.at("adjacency").get<std::vector<std::vector<std::uint8_t>>>();
  c.gat = plain_get<GatConfig>(m.at("gat"));
  c.backbone = plain_get<BackboneConfig>(m.at("backbone"));
  c.nonlinear_head = m.at("nonlinear_head").get<bool>();
  c.head_hidden = m.at("head_hidden").get<std::size_t>();
  c.train = plain_get<TrainConfig>(j.at("train"));
  const auto& e = j.at("evaluation");
  c.horizon = e.at("horizon").get<std::size_t>();
  c.eval_stride = e.at("stride").get<std::size_t>();
  c.eval_batch = e.at("batch").get<std::size_t>();
  c.variables = e.at("variables").get<std::vector<std::string>>();
  c.schemes = e.at("schemes").get<std::vector<std::string>>();
  c.var_p = j.at("varima").at("p").get<std::size_t>();
  c.var_d = j.at("varima").at("d").get<std::size_t>();
  return c;
}

const char* type_label(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_number_unsigned()) return "a non-negative integer";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "an array";
  if (v.is_object()) return "an object";
  return "null";
}

bool compatible(const json& schema, const json& value) {
  if (schema.is_boolean()) return value.is_boolean();
  if (schema.is_number_unsigned()) return value.is_number_unsigned();
  if (schema.is_number_integer()) return value.is_number_integer();
  if (schema.is_number()) return value.is_number();
  if (schema.is_string()) return value.is_string();
  if (schema.is_array()) return value.is_array();
  return false;
}

/// Copies `user` over `base`, rejecting keys and types absent from `base`.
void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) config_error((path.empty() ? std::string("document") : path) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    auto it = base.find(key);
    if (it == base.end()) config_error("unknown key '" + where + "'");
    if (it->is_object()) {
      merge_strict(*it, value, where);
    } else if (!compatible(*it, value)) {
      config_error("'" + where + "' must be " + type_label(*it) + ", got " + type_label(value));
    } else {
      *it = value;
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) config_error("override key '" + key + "' has an empty component");
    if (!node->is_object()) config_error("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string crc_hex(const std::string& text) {
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08" PRIx32, crc);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

std::string in_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::vector<std::size_t> indices_of(const std::vector<std::string>& names, const std::vector<std::string>& wanted,
                                    const char* what) {
  std::vector<std::size_t> out;
  for (const auto& w : wanted) {
    const auto it = std::find(names.begin(), names.end(), w);
    if (it == names.end()) config_error(std::string(what) + " names unknown column '" + w + "'");
    out.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  return out;
}

BaselineInputs baseline_inputs(const ExperimentConfig& config, const PreparedData& data, const Logger& log) {
  BaselineInputs in;
  in.normalized = &data.normalized;
  in.stats = data.stats;
  in.names = data.names;
  in.train = data.split.train;
  in.validation = data.split.validation;
  in.test = data.split.test;
  in.model = model_config(config, data.names);
  in.training = config.train;
  in.training.seed = config.seed;
  in.train_stride = config.train_stride;
  in.evaluation.window = config.window;
  in.evaluation.horizon = config.horizon;
  in.evaluation.stride = config.eval_stride;
  in.evaluation.batch = config.eval_batch;
  in.evaluation.report_columns = indices_of(data.names, config.variables, "evaluation.variables");
  in.var_p = config.var_p;
  in.var_d = config.var_d;
  if (log) {
    in.log = [log](std::size_t epoch, double loss, double validation) {
      char buf[128];
      if (std::isnan(validation)) {
        std::snprintf(buf, sizeof buf, "epoch %zu loss %.6g", epoch, loss);
      } else {
        std::snprintf(buf, sizeof buf, "epoch %zu loss %.6g validation %.6g", epoch, loss, validation);
      }
      log(buf);
    };
  }
  return in;
}

Forecaster train_main(const BaselineInputs& in, TrainResult* result) {
  Forecaster model(in.model);
  const WindowedDataset data = training_windows(*in.normalized, in.train, in.model.window, in.train_stride);
  WindowedDataset validation;
  if (in.training.patience > 0) validation = training_windows(*in.normalized, in.validation, in.model.window, 1);
  TrainResult r = train(model, data, in.training, validation.empty() ? nullptr : &validation, in.log);
  if (result) *result = std::move(r);
  model.set_stats(in.stats);
  return model;
}

std::string loss_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,validation_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,", e + 1, result.epoch_loss[e]);
    out += buf;
    if (e < result.validation_loss.size()) {
      std::snprintf(buf, sizeof buf, "%.12g", result.validation_loss[e]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig::ExperimentConfig() {
  variables = headline_variables();
  for (const auto& s : known_schemes()) schemes.push_back(s);
}

std::string ExperimentConfig::to_text() const { return to_json(*this).dump(2) + "\n"; }

std::string ExperimentConfig::digest() const { return crc_hex(to_json(*this).dump()); }

void ExperimentConfig::validate() const {
  if (data.source != "synthetic" && data.source != "csv") config_error("data.source must be synthetic or csv");
  if (data.source == "csv" && data.csv_path.empty()) config_error("data.csv_path is required for csv input");
  if (data.sample_period_ms <= 0) config_error("data.sample_period_ms must be positive");
  if (data.interpolation_points < 2) config_error("data.interpolation_points must be at least 2");
  double total = 0.0;
  for (double f : data.split) {
    if (!(f > 0.0)) config_error("data.split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) config_error("data.split fractions must sum to 1");
  try {
    data.synthetic.validate();
  } catch (const Error& e) {
    config_error(std::string("data.synthetic: ") + e.what());
  }
  if (window < 2) config_error("window.length must be at least 2");
  if (train_stride == 0) config_error("window.train_stride must be positive");
  if (horizon == 0) config_error("evaluation.horizon must be positive");
  if (eval_stride == 0 || eval_batch == 0) config_error("evaluation.stride and evaluation.batch must be positive");
  if (schemes.empty()) config_error("evaluation.schemes is empty");
  std::set<std::string> seen;
  for (const auto& s : schemes) {
    const auto& known = known_schemes();
    if (std::find(known.begin(), known.end(), s) == known.end()) config_error("unknown scheme '" + s + "'");
    if (!seen.insert(s).second) config_error("scheme '" + s + "' listed twice");
  }
  if (var_p == 0) config_error("varima.p must be positive");
  const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& p : canonical_schema()) v.push_back(p.name);
    return v;
  }();
  if (data.source == "synthetic") {
    indices_of(names, targets, "model.targets");
    indices_of(names, variables, "evaluation.variables");
  }
  train.validate();
  // Model shape checks need the column list; synthetic data fixes it here.
  if (data.source == "synthetic") model_config(*this, names).validate();
}

const std::vector<std::string>& known_schemes() {
  static const std::vector<std::string> names = {kMainSchemeName, "nogat", "univariate", "varima", "persistence"};
  return names;
}

ExperimentConfig parse_experiment(const std::string& text, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!text.empty()) {
    user = json::parse(text, nullptr, false, true);
    if (user.is_discarded()) config_error("document is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(user, o);
  json doc = to_json(ExperimentConfig{});
  merge_strict(doc, user, "");
  ExperimentConfig c;
  try {
    c = from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    config_error(e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_experiment({}, overrides);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_experiment(text.str(), overrides);
}

// ---------------------------------------------------------------------------
// Pipelines

TelemetrySeries load_series(const ExperimentConfig& config) {
  if (config.data.source == "csv") {
    TelemetrySeries s = load_csv(config.data.csv_path);
    s.sample_period_ms = config.data.sample_period_ms;
    return s;
  }
  SyntheticConfig synthetic = config.data.synthetic;
  synthetic.seed = config.seed;
  TelemetrySeries s = generate_synthetic(synthetic);
  s.sample_period_ms = config.data.sample_period_ms;
  return s;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  const TelemetrySeries raw = load_series(config);
  out.missing_filled = raw.missing_count();
  out.series = interpolate_missing(raw, config.data.interpolation_points);
  out.names = out.series.column_names();
  out.split = chronological_split(out.series.rows(), config.data.split);
  out.stats = fit_normalizer(out.series, out.split.train);
  out.normalized = normalize(out.series.values, out.stats);
  return out;
}

ForecasterConfig model_config(const ExperimentConfig& config, const std::vector<std::string>& names) {
  ForecasterConfig m = ForecasterConfig::for_columns(names);
  if (!config.targets.empty()) m.target_columns = indices_of(names, config.targets, "model.targets");
  m.window = config.window;
  m.gat = config.gat;
  m.gat.in_dim = 1;
  if (!config.adjacency.empty()) {
    if (config.adjacency.size() != names.size()) config_error("model.adjacency must have one row per column");
    for (const auto& row : config.adjacency) {
      if (row.size() != names.size()) config_error("model.adjacency must be square");
      m.adjacency.insert(m.adjacency.end(), row.begin(), row.end());
    }
  }
  m.backbone = config.backbone;
  m.embedding = config.embedding;
  m.rollout_steps = config.horizon;
  m.nonlinear_head = config.nonlinear_head;
  m.head_hidden = config.head_hidden;
  m.seed = config.seed;
  return m;
}

GenerateResult run_generate(const ExperimentConfig& config, const std::string& path) {
  if (config.data.source != "synthetic") config_error("generate needs data.source = synthetic");
  const TelemetrySeries series = load_series(config);
  GenerateResult r;
  r.path = path.empty() ? in_dir(config.output_dir, "data.csv") : path;
  write_text(r.path, to_csv(series));
  r.rows = series.rows();
  r.cols = series.cols();
  return r;
}

TrainArtifacts run_train(const ExperimentConfig& config, const Logger& log) {
  const PreparedData data = prepare_data(config);
  if (log) {
    log("rows " + std::to_string(data.series.rows()) + ", filled " + std::to_string(data.missing_filled) +
        " missing cells");
  }
  const BaselineInputs in = baseline_inputs(config, data, log);
  TrainResult result;
  Forecaster model = train_main(in, &result);
  TrainArtifacts out{std::move(model), std::move(result), in_dir(config.output_dir, "model.ckpt"),
                     in_dir(config.output_dir, "loss.csv")};
  write_text(in_dir(config.output_dir, "config.json"), config.to_text());
  write_text(out.loss_path, loss_csv(out.result));
  write_text(out.checkpoint_path, checkpoint_bytes(out.model));
  return out;
}

Forecast run_predict(const std::string& checkpoint_path, const std::string& data_path, std::size_t steps) {
  if (steps == 0) throw Error(ErrorCode::InvalidArgument, "steps must be positive");
  const Forecaster model = load_checkpoint(checkpoint_path);
  const auto& cfg = model.config();
  if (!cfg.covers_all_columns()) {
    throw Error(ErrorCode::ConfigMismatch, "checkpoint predicts a subset of its inputs; rollout needs every column");
  }
  const TelemetrySeries raw = load_csv(data_path);
  if (raw.rows() < cfg.window) {
    throw Error(ErrorCode::Data, data_path + ": " + std::to_string(raw.rows()) + " rows, context needs " +
                                     std::to_string(cfg.window));
  }
  const TelemetrySeries filled = interpolate_missing(raw);
  const auto names = filled.column_names();
  std::vector<std::size_t> columns;
  for (const auto& c : cfg.columns) {
    const auto it = std::find(names.begin(), names.end(), c);
    if (it == names.end()) throw Error(ErrorCode::ConfigMismatch, data_path + " lacks column " + c);
    columns.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  Matrix context(cfg.window, columns.size());
  const std::size_t first = filled.rows() - cfg.window;
  for (std::size_t r = 0; r < cfg.window; ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) context(r, j) = filled.values(first + r, columns[j]);
  }
  return model.rollout(normalize(context, model.stats()), steps, raw.sample_period_ms);
}

std::string forecast_csv(const Forecast& forecast) {
  std::string out = "step,horizon_ms";
  for (const auto& c : forecast.columns) out += "," + c;
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < forecast.values.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu,%" PRId64, r + 1, forecast.horizon_ms[r]);
    out += buf;
    for (std::size_t c = 0; c < forecast.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", forecast.values(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

EvaluateArtifacts run_evaluate(const ExperimentConfig& config, const std::vector<std::string>& schemes,
                               const std::string& checkpoint_path, const Logger& log) {
  std::vector<std::string> selected = schemes.empty() ? config.schemes : schemes;
  {
    std::set<std::string> seen;
    for (const auto& s : selected) {
      const auto& known = known_schemes();
      if (std::find(known.begin(), known.end(), s) == known.end()) config_error("unknown scheme '" + s + "'");
      if (!seen.insert(s).second) config_error("scheme '" + s + "' listed twice");
    }
  }
  const PreparedData data = prepare_data(config);
  const BaselineInputs in = baseline_inputs(config, data, log);

  EvaluateArtifacts out;
  for (const auto& name : selected) {
    if (log) log("scheme " + name);
    MetricsReport report;
    if (name == kMainSchemeName) {
      std::shared_ptr<const Forecaster> model;
      if (!checkpoint_path.empty()) {
        Forecaster loaded = load_checkpoint(checkpoint_path, &in.model);
        if (!(loaded.stats() == in.stats)) {
          throw Error(ErrorCode::ConfigMismatch, checkpoint_path + " was trained on differently scaled data");
        }
        model = std::make_shared<const Forecaster>(std::move(loaded));
      } else {
        model = std::make_shared<const Forecaster>(train_main(in, nullptr));
      }
      report = evaluate_horizons(forecaster_scheme(kMainSchemeName, model), data.normalized, data.stats, data.names,
                                 data.split.test, in.evaluation);
    } else {
      report = run_baseline(parse_baseline(name), in);
    }
    report.metadata = {config.seed, config.digest(), data.split.train, data.split.validation, data.split.test};
    const std::string path = in_dir(config.output_dir, "report_" + name + ".csv");
    write_text(path, report_csv(report));
    out.files.push_back(path);
    out.reports.push_back(std::move(report));
  }
  const std::string meta = in_dir(config.output_dir, "metadata.json");
  write_text(meta, metadata_json(out.reports.front().metadata));
  out.files.push_back(meta);
  out.comparison = compare(out.reports);
  for (auto& f : write_comparison(out.comparison, config.output_dir)) out.files.push_back(std::move(f));
  return out;
}

EvaluateArtifacts run_compare(const std::vector<std::string>& report_paths, const std::string& dir) {
  if (report_paths.empty()) throw Error(ErrorCode::InvalidArgument, "compare needs at least one report");
  EvaluateArtifacts out;
  for (const auto& path : report_paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read report " + path);
    std::ostringstream text;
    text << in.rdbuf();
    out.reports.push_back(parse_report_csv(text.str()));
  }
  out.comparison = compare(out.reports);
  out.files = write_comparison(out.comparison, dir);
  return out;
}

}  // namespace gatllm
