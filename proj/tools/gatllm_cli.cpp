// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the library only through the C interface.
// Exit status: 0 success, 1 runtime or data error, 2 configuration or usage error.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "gatllm/gatllm.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  bool print_config = false;
  bool quiet = false;
};

struct ConfigDeleter {
  void operator()(gatllm_config* c) const { gatllm_config_free(c); }
};
struct ModelDeleter {
  void operator()(gatllm_model* m) const { gatllm_model_free(m); }
};
struct StringDeleter {
  void operator()(char* s) const { gatllm_string_free(s); }
};
using ConfigPtr = std::unique_ptr<gatllm_config, ConfigDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

/// Thrown to unwind with a status from the library.
struct Failure {
  gatllm_status status;
};

int exit_code(gatllm_status status) {
  switch (status) {
    case GATLLM_OK: return 0;
    case GATLLM_ERR_CONFIG: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(gatllm_status status) {
  if (status != GATLLM_OK) throw Failure{status};
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment JSON file; defaults apply to absent keys")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for data generation, initialisation and shuffling (key: seed)");
  cmd->add_option("-o,--out-dir", o.out_dir, "Directory receiving every artifact (key: output_dir)");
  cmd->add_option("--set", o.overrides, "Override one key, e.g. --set train.epochs=5; repeatable")
      ->type_name("KEY=VALUE");
  cmd->add_flag("--print-config", o.print_config, "Print the effective configuration and exit");
  cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

/// File < --set < --seed/--out-dir.
ConfigPtr load_config(const CommonOptions& o) {
  std::vector<std::string> assignments = o.overrides;
  if (o.seed) assignments.push_back("seed=" + std::to_string(*o.seed));
  if (o.out_dir) assignments.push_back("output_dir=" + json_string(*o.out_dir));
  std::vector<const char*> raw_assignments;
  for (const auto& a : assignments) raw_assignments.push_back(a.c_str());
  gatllm_config* raw = nullptr;
  check(gatllm_config_load_overrides(o.config_path.c_str(), raw_assignments.data(), raw_assignments.size(), &raw));
  return ConfigPtr(raw);
}

std::string output_dir(const gatllm_config* config) {
  char* raw = nullptr;
  check(gatllm_config_get(config, "output_dir", &raw));
  StringPtr text(raw);
  return nlohmann::json::parse(text.get()).get<std::string>();
}

bool print_config(const CommonOptions& o, const gatllm_config* config) {
  if (!o.print_config) return false;
  char* raw = nullptr;
  check(gatllm_config_to_json(config, &raw));
  StringPtr text(raw);
  std::fputs(text.get(), stdout);
  return true;
}

void log_to_stderr(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-layer link quality forecasting: graph attention feeding a causal decoder"};
  app.set_version_flag("--version", gatllm_version());
  app.require_subcommand(1);

  CommonOptions common;

  auto* generate = app.add_subcommand("generate", "Write a synthetic telemetry CSV");
  add_common(generate, common);
  std::string generate_out;
  generate->add_option("--out", generate_out, "CSV path (default <out-dir>/data.csv)");

  auto* train = app.add_subcommand("train", "Train the forecaster; writes model.ckpt, loss.csv and config.json");
  add_common(train, common);

  auto* predict = app.add_subcommand("predict", "Forecast from the last window of a CSV file");
  add_common(predict, common);
  std::string checkpoint;
  std::string data_path;
  std::size_t steps = 10;
  std::string predict_out;
  predict->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  predict->add_option("--data", data_path, "Telemetry CSV; its last rows form the context")->required();
  predict->add_option("--steps", steps, "Rows to forecast")->capture_default_str()->check(CLI::PositiveNumber);
  predict->add_option("--out", predict_out, "Forecast CSV path (default <out-dir>/forecast.csv)");

  auto* evaluate = app.add_subcommand("evaluate", "Score schemes on the test rows; writes reports, CSV and SVGs");
  add_common(evaluate, common);
  std::vector<std::string> schemes;
  std::string evaluate_checkpoint;
  evaluate->add_option("--schemes", schemes, "Comma-separated: gatllm,nogat,univariate,varima,persistence")
      ->delimiter(',');
  evaluate->add_option("--checkpoint", evaluate_checkpoint, "Use this checkpoint instead of training gatllm")
      ->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "Merge report CSV files into comparison.csv and SVGs");
  std::vector<std::string> reports;
  std::string compare_dir = "out";
  compare->add_option("reports", reports, "Report CSV files")->required()->check(CLI::ExistingFile);
  compare->add_option("-o,--out-dir", compare_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (compare->parsed()) {
      std::vector<const char*> paths;
      for (const auto& r : reports) paths.push_back(r.c_str());
      check(gatllm_compare(paths.data(), paths.size(), compare_dir.c_str()));
      std::printf("wrote %s/comparison.csv\n", compare_dir.c_str());
      return 0;
    }

    ConfigPtr config = load_config(common);
    if (print_config(common, config.get())) return 0;
    if (!common.quiet) gatllm_set_log_callback(log_to_stderr, nullptr);
    const std::string dir = output_dir(config.get());

    if (generate->parsed()) {
      std::size_t rows = 0;
      std::size_t cols = 0;
      const std::string path = generate_out.empty() ? dir + "/data.csv" : generate_out;
      check(gatllm_generate(config.get(), path.c_str(), &rows, &cols));
      std::printf("wrote %s: %zu rows x %zu columns\n", path.c_str(), rows, cols);
    } else if (train->parsed()) {
      gatllm_model* raw = nullptr;
      check(gatllm_train(config.get(), &raw));
      std::unique_ptr<gatllm_model, ModelDeleter> model(raw);
      std::size_t params = 0;
      check(gatllm_model_parameter_count(model.get(), &params));
      std::printf("trained %zu parameters; wrote %s/model.ckpt and %s/loss.csv\n", params, dir.c_str(), dir.c_str());
    } else if (predict->parsed()) {
      const std::string path = predict_out.empty() ? dir + "/forecast.csv" : predict_out;
      check(gatllm_predict(checkpoint.c_str(), data_path.c_str(), steps, path.c_str()));
      std::printf("wrote %s: %zu steps\n", path.c_str(), steps);
    } else if (evaluate->parsed()) {
      std::string list;
      for (const auto& s : schemes) list += (list.empty() ? "" : ",") + s;
      check(gatllm_evaluate(config.get(), list.c_str(), evaluate_checkpoint.c_str()));
      std::printf("wrote %s/comparison.csv\n", dir.c_str());
    }
    return 0;
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s: %s\n", gatllm_status_string(f.status), gatllm_last_error());
    return exit_code(f.status);
  }
}
