// SPDX-License-Identifier: Apache-2.0
//
// Runs the command-line tool as a child process and checks exit codes and
// artifacts.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#ifndef GATLLM_CLI_PATH
#error "GATLLM_CLI_PATH must name the command-line binary"
#endif

namespace {

const std::string kTiny =
    " --set data.synthetic.length=300 --set window.length=6 --set window.train_stride=3"
    " --set model.gat.hidden_dim=4 --set model.gat.heads=2 --set model.backbone.layers=1"
    " --set model.backbone.d_model=8 --set model.backbone.heads=2 --set model.backbone.ff_dim=8"
    " --set model.backbone.max_seq_len=6 --set train.epochs=1 --set evaluation.horizon=2"
    " --set evaluation.stride=5 -q";

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& args, const std::string& dir) {
  const std::string log = dir + "/cli.log";
  const std::string cmd = std::string(GATLLM_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gatllm_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
  const std::string dir = scratch("usage");
  CHECK(run("", dir).status == 2);
  CHECK(run("frobnicate", dir).status == 2);
  CHECK(run("train --set train.epochz=3", dir).status == 2);
  const Run typed = run("train --set train.epochs=\\\"x\\\"", dir);
  CHECK(typed.status == 2);
  CHECK(typed.output.find("error:") != std::string::npos);
  CHECK(run("predict --data x.csv", dir).status == 2);  // checkpoint missing
  CHECK(run("train -c " + dir + "/absent.json", dir).status == 2);
  CHECK(run("--help", dir).status == 0);
  CHECK(run("--version", dir).status == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("print-config reflects precedence") {
  const std::string dir = scratch("print");
  std::ofstream(dir + "/cfg.json") << R"({"seed": 3, "train": {"epochs": 9}})";
  const Run r = run("train -c " + dir + "/cfg.json --set train.epochs=4 --set seed=8 --seed 11 --print-config", dir);
  REQUIRE(r.status == 0);
  CHECK(r.output.find("\"epochs\": 4") != std::string::npos);
  CHECK(r.output.find("\"seed\": 11") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("full workflow") {
  const std::string dir = scratch("workflow");
  const std::string common = " -o " + dir + kTiny;

  REQUIRE(run("generate" + common, dir).status == 0);
  const std::string data = slurp(dir + "/data.csv");
  REQUIRE(run("generate" + common, dir).status == 0);
  CHECK(slurp(dir + "/data.csv") == data);

  REQUIRE(run("train" + common, dir).status == 0);
  CHECK(std::filesystem::exists(dir + "/model.ckpt"));
  CHECK(std::filesystem::exists(dir + "/loss.csv"));

  const std::string predict = "predict" + common + " --checkpoint " + dir + "/model.ckpt --data " + dir + "/data.csv";
  REQUIRE(run(predict + " --steps 3", dir).status == 0);
  CHECK(slurp(dir + "/forecast.csv").rfind("step,horizon_ms,", 0) == 0);
  CHECK(run(predict + " --steps 0", dir).status == 2);

  std::ofstream(dir + "/short.csv") << data.substr(0, data.find('\n') + 1) << "1,2,3,4,5,6,7,8,9\n";
  const Run short_run = run("predict" + common + " --checkpoint " + dir + "/model.ckpt --data " + dir + "/short.csv", dir);
  CHECK(short_run.status == 1);

  const Run missing = run("predict" + common + " --checkpoint " + dir + "/model.ckpt --data /no/such.csv", dir);
  CHECK(missing.status == 1);
  CHECK(missing.output.find("/no/such.csv") != std::string::npos);

  REQUIRE(run("evaluate" + common + " --schemes gatllm,persistence --checkpoint " + dir + "/model.ckpt", dir).status ==
          0);
  const std::string cmp = slurp(dir + "/comparison.csv");
  CHECK(cmp.substr(0, cmp.find('\n')).find(",best") != std::string::npos);

  REQUIRE(run("compare " + dir + "/report_gatllm.csv -o " + dir + "/single", dir).status == 0);
  const std::string single = slurp(dir + "/single/comparison.csv");
  CHECK(single.substr(0, single.find('\n')).find("best") == std::string::npos);

  std::string corrupt = slurp(dir + "/model.ckpt");
  corrupt[corrupt.size() / 2] ^= 0x01;
  std::ofstream(dir + "/corrupt.ckpt", std::ios::binary) << corrupt;
  const Run bad = run("predict" + common + " --checkpoint " + dir + "/corrupt.ckpt --data " + dir + "/data.csv", dir);
  CHECK(bad.status == 1);
  CHECK(bad.output.find("checksum") != std::string::npos);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
