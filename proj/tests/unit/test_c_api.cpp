// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library through its C header only.

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "gatllm/gatllm.h"

namespace {

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gatllm_capi_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

gatllm_config* tiny_config(const std::string& out) {
  const std::string dir = "output_dir=\"" + out + "\"";
  const char* overrides[] = {dir.c_str(),
                             "data.synthetic.length=300",
                             "window.length=6",
                             "window.train_stride=3",
                             "model.gat.hidden_dim=4",
                             "model.gat.heads=2",
                             "model.backbone.layers=1",
                             "model.backbone.d_model=8",
                             "model.backbone.heads=2",
                             "model.backbone.ff_dim=8",
                             "model.backbone.max_seq_len=6",
                             "train.epochs=1",
                             "evaluation.horizon=2",
                             "evaluation.stride=5"};
  gatllm_config* c = nullptr;
  REQUIRE(gatllm_config_load_overrides(nullptr, overrides, sizeof overrides / sizeof *overrides, &c) == GATLLM_OK);
  return c;
}

std::string get(const gatllm_config* c, const char* key) {
  char* text = nullptr;
  REQUIRE(gatllm_config_get(c, key, &text) == GATLLM_OK);
  std::string out = text;
  gatllm_string_free(text);
  return out;
}

}  // namespace

TEST_SUITE("c_api") {

TEST_CASE("version and status strings") {
  CHECK(std::strlen(gatllm_version()) > 0);
  CHECK(std::string(gatllm_status_string(GATLLM_OK)) == "ok");
  CHECK(std::strlen(gatllm_status_string(GATLLM_ERR_CHECKSUM)) > 0);
  CHECK(std::strlen(gatllm_status_string(static_cast<gatllm_status>(999))) > 0);
}

TEST_CASE("configuration handles") {
  gatllm_config* c = nullptr;
  REQUIRE(gatllm_config_load(nullptr, &c) == GATLLM_OK);
  CHECK(get(c, "window.length") == "20");
  CHECK(gatllm_config_set(c, "train.epochs", "7") == GATLLM_OK);
  CHECK(get(c, "train.epochs") == "7");
  CHECK(gatllm_config_set(c, "train.epochz", "7") == GATLLM_ERR_CONFIG);
  CHECK(std::string(gatllm_last_error()).find("epochz") != std::string::npos);
  CHECK(gatllm_config_set(c, "train.epochs", "\"many\"") == GATLLM_ERR_CONFIG);
  CHECK(get(c, "train.epochs") == "7");  // failed updates leave the handle unchanged
  CHECK(gatllm_config_get(c, "no.such", nullptr) == GATLLM_ERR_INVALID_ARGUMENT);

  char* json = nullptr;
  REQUIRE(gatllm_config_to_json(c, &json) == GATLLM_OK);
  gatllm_config* copy = nullptr;
  REQUIRE(gatllm_config_parse(json, &copy) == GATLLM_OK);
  CHECK(get(copy, "train.epochs") == "7");
  gatllm_string_free(json);
  gatllm_config_free(copy);
  gatllm_config_free(c);

  CHECK(gatllm_config_parse("{\"bogus\": 1}", &c) == GATLLM_ERR_CONFIG);
  CHECK(gatllm_config_load("/no/such.json", &c) == GATLLM_ERR_IO);
  CHECK(gatllm_config_load(nullptr, nullptr) == GATLLM_ERR_INVALID_ARGUMENT);
  gatllm_config_free(nullptr);
}

TEST_CASE("series, training and forecasting") {
  const std::string out = scratch("train");
  gatllm_config* c = tiny_config(out);

  gatllm_series* s = nullptr;
  REQUIRE(gatllm_series_generate(c, &s) == GATLLM_OK);
  std::size_t rows = 0, cols = 0, missing = 0;
  REQUIRE(gatllm_series_shape(s, &rows, &cols) == GATLLM_OK);
  CHECK(rows == 300);
  CHECK(cols == 9);
  REQUIRE(gatllm_series_missing(s, &missing) == GATLLM_OK);
  CHECK(missing > 0);
  const std::string csv = out + "/data.csv";
  REQUIRE(gatllm_series_write_csv(s, csv.c_str()) == GATLLM_OK);
  gatllm_series* loaded = nullptr;
  REQUIRE(gatllm_series_load_csv(csv.c_str(), &loaded) == GATLLM_OK);

  gatllm_model* m = nullptr;
  REQUIRE(gatllm_train(c, &m) == GATLLM_OK);
  std::size_t window = 0, outputs = 0, params = 0;
  REQUIRE(gatllm_model_window(m, &window) == GATLLM_OK);
  REQUIRE(gatllm_model_output_dim(m, &outputs) == GATLLM_OK);
  REQUIRE(gatllm_model_parameter_count(m, &params) == GATLLM_OK);
  CHECK(window == 6);
  CHECK(outputs == 9);
  CHECK(params > 0);

  std::vector<double> a(3 * outputs), b(3 * outputs);
  REQUIRE(gatllm_model_forecast(m, loaded, 3, a.data(), a.size()) == GATLLM_OK);
  CHECK(gatllm_model_forecast(m, loaded, 3, a.data(), a.size() - 1) == GATLLM_ERR_INVALID_ARGUMENT);

  const std::string ckpt = out + "/copy.ckpt";
  REQUIRE(gatllm_model_save(m, ckpt.c_str()) == GATLLM_OK);
  gatllm_model* back = nullptr;
  REQUIRE(gatllm_model_load(ckpt.c_str(), &back) == GATLLM_OK);
  REQUIRE(gatllm_model_forecast(back, loaded, 3, b.data(), b.size()) == GATLLM_OK);
  CHECK(a == b);

  const std::string forecast = out + "/forecast.csv";
  CHECK(gatllm_predict(ckpt.c_str(), csv.c_str(), 3, forecast.c_str()) == GATLLM_OK);
  CHECK(std::filesystem::exists(forecast));
  CHECK(gatllm_model_load((out + "/missing.ckpt").c_str(), &back) == GATLLM_ERR_IO);
  CHECK(gatllm_series_load_csv((out + "/missing.csv").c_str(), &loaded) == GATLLM_ERR_IO);

  gatllm_model_free(back);
  gatllm_model_free(m);
  gatllm_series_free(loaded);
  gatllm_series_free(s);
  gatllm_config_free(c);
  std::filesystem::remove_all(out);
}

TEST_CASE("commands and logging") {
  const std::string out = scratch("commands");
  gatllm_config* c = tiny_config(out);
  std::vector<std::string> lines;
  gatllm_set_log_callback([](const char* msg, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(msg); },
                          &lines);
  std::size_t rows = 0, cols = 0;
  REQUIRE(gatllm_generate(c, nullptr, &rows, &cols) == GATLLM_OK);
  CHECK(std::filesystem::exists(out + "/data.csv"));
  REQUIRE(gatllm_evaluate(c, "persistence,varima", nullptr) == GATLLM_OK);
  CHECK(std::filesystem::exists(out + "/comparison.csv"));
  CHECK(gatllm_evaluate(c, "persistence,lstm", nullptr) == GATLLM_ERR_CONFIG);
  const std::string r1 = out + "/report_persistence.csv";
  const std::string r2 = out + "/report_varima.csv";
  const char* reports[] = {r1.c_str(), r2.c_str()};
  CHECK(gatllm_compare(reports, 2, (out + "/merged").c_str()) == GATLLM_OK);
  CHECK(gatllm_compare(reports, 0, out.c_str()) == GATLLM_ERR_INVALID_ARGUMENT);
  gatllm_set_log_callback(nullptr, nullptr);
  CHECK_FALSE(lines.empty());
  gatllm_config_free(c);
  std::filesystem::remove_all(out);
}

}  // TEST_SUITE
