// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "gatllm/error.hpp"
#include "gatllm/gat.hpp"
#include "test_util.hpp"

using namespace gatllm;
using testing::random_tensor;

namespace {

VariableGraph random_graph(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(0.5);
  std::vector<std::uint8_t> adj(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t m = 0; m < n; ++m) adj[j * n + m] = (j == m || edge(rng)) ? 1 : 0;
  }
  return VariableGraph(n, std::move(adj));
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t cols = x.dim(-1);
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < perm.size(); ++j) {
    for (std::size_t c = 0; c < cols; ++c) out[j * cols + c] = x[perm[j] * cols + c];
  }
  return Tensor(x.shape(), std::move(out));
}

}  // namespace

TEST_SUITE("gat") {

TEST_CASE("graph construction requires self-loops") {
  CHECK_THROWS_AS(VariableGraph(2, {0, 1, 1, 1}), Error);
  CHECK_THROWS_AS(VariableGraph(2, {1, 1, 1}), Error);
  const VariableGraph g = VariableGraph::complete(3);
  CHECK(g.is_complete());
  CHECK(g.neighbour_count(1) == 3);
  CHECK(VariableGraph::self_loops(3).neighbour_count(2) == 1);
}

TEST_CASE("single node attends to itself with weight one") {
  std::mt19937_64 rng(1);
  GatLayer layer(1, 4, 2, 0.2, "g", rng);
  const Tensor x = random_tensor({1, 1}, rng);
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor alpha = layer.attention_coefficients(k, layer.transform(k, x, nullptr), VariableGraph::complete(1),
                                                      nullptr);
    REQUIRE(alpha.size() == 1);
    CHECK(alpha[0] == 1.0);
  }
}

TEST_CASE("single node with weight 2 maps 3 to 6") {
  std::mt19937_64 rng(2);
  GatLayer layer(1, 1, 1, 0.2, "g", rng, /*residual=*/false);
  layer.weights()[0].value = Tensor({1, 1}, {2.0});
  const Tensor out = layer.forward(Tensor({1, 1}, {3.0}), VariableGraph::complete(1), nullptr);
  REQUIRE(out.shape() == Shape{1, 1});
  CHECK(out[0] == 6.0);
}

TEST_CASE("attention rows sum to one and non-edges are exactly zero") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 8;
    const VariableGraph graph = random_graph(n, rng);
    GatLayer layer(1, 8, 4, 0.2, "g", rng);
    const Tensor x = random_tensor({n, 1}, rng, -3.0, 3.0);
    for (std::size_t k = 0; k < 4; ++k) {
      const Tensor alpha = layer.attention_coefficients(k, layer.transform(k, x, nullptr), graph, nullptr);
      for (std::size_t j = 0; j < n; ++j) {
        double total = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
          const double a = alpha[j * n + m];
          if (!graph.edge(j, m)) CHECK(a == 0.0);
          CHECK(a >= 0.0);
          total += a;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("zero attention vector gives uniform neighbourhood weights") {
  std::mt19937_64 rng(4);
  const VariableGraph graph = random_graph(6, rng);
  GatLayer layer(1, 4, 1, 0.2, "g", rng);
  layer.attention()[0].value = Tensor::zeros(layer.attention()[0].value.shape());
  const Tensor x = random_tensor({6, 1}, rng);
  const Tensor alpha = layer.attention_coefficients(0, layer.transform(0, x, nullptr), graph, nullptr);
  for (std::size_t j = 0; j < 6; ++j) {
    const double expected = 1.0 / static_cast<double>(graph.neighbour_count(j));
    for (std::size_t m = 0; m < 6; ++m) {
      CHECK(alpha[j * 6 + m] == doctest::Approx(graph.edge(j, m) ? expected : 0.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("identical node features on a complete graph give identical rows") {
  std::mt19937_64 rng(5);
  GatLayer layer(1, 8, 2, 0.2, "g", rng);
  const Tensor out = layer.forward(Tensor::full({5, 1}, 0.37), VariableGraph::complete(5), nullptr);
  for (std::size_t j = 1; j < 5; ++j) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(out[j * 8 + c] == out[c]);
  }
}

TEST_CASE("permutation equivariance on random instances") {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const VariableGraph graph = random_graph(n, rng);
    GatLayer layer(2, 8, 2, 0.2, "g", rng, trial % 2 == 0);
    const Tensor x = random_tensor({n, 2}, rng, -2.0, 2.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor out = layer.forward(x, graph, nullptr);
    const Tensor out_perm = layer.forward(permute_rows(x, perm), graph.permuted(perm), nullptr);
    const Tensor expected = permute_rows(out, perm);
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out_perm[i] - expected[i]));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("self-loop-only graph keeps each node local") {
  std::mt19937_64 rng(7);
  const std::size_t n = 6;
  GatLayer layer(1, 8, 4, 0.2, "g", rng, true);
  const VariableGraph graph = VariableGraph::self_loops(n);
  const Tensor x = random_tensor({n, 1}, rng);
  const Tensor out = layer.forward(x, graph, nullptr);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> isolated(n, 0.0);
    isolated[j] = x[j];
    const Tensor alone = layer.forward(Tensor({n, 1}, isolated), graph, nullptr);
    for (std::size_t c = 0; c < 8; ++c) CHECK(alone[j * 8 + c] == out[j * 8 + c]);
  }
}

TEST_CASE("batched graphs match one-at-a-time evaluation") {
  std::mt19937_64 rng(8);
  GatLayer layer(1, 8, 2, 0.2, "g", rng);
  const VariableGraph graph = random_graph(4, rng);
  const Tensor batch = random_tensor({3, 5, 4, 1}, rng);
  const Tensor out = layer.forward(batch, graph, nullptr);
  REQUIRE(out.shape() == Shape{3, 5, 4, 8});
  const Tensor one = layer.forward(ops::reshape(ops::slice(ops::slice(batch, 0, 2, 3), 1, 4, 5), {4, 1}), graph,
                                   nullptr);
  const std::size_t base = (2 * 5 + 4) * 32;
  for (std::size_t i = 0; i < 32; ++i) CHECK(out[base + i] == doctest::Approx(one[i]).epsilon(1e-13));
}

TEST_CASE("gradients through the layer match finite differences") {
  std::mt19937_64 rng(9);
  for (bool residual : {false, true}) {
    GatLayer layer(1, 6, 3, 0.2, "g", rng, residual);
    const VariableGraph graph = random_graph(4, rng);
    const Tensor x = random_tensor({2, 4, 1}, rng, -2.0, 2.0);

    CHECK(testing::grad_error([&](const Tensor& t) { return layer.forward(t, graph, nullptr); }, x) < 1e-6);

    std::vector<Parameter*> params;
    layer.collect(params);
    CHECK(params.size() == (residual ? 7u : 6u));
    const Tensor flat = testing::flatten_values(params);
    const double err = finite_diff_check(
        [&](const Tensor& theta, Tape* tape) {
          GatLayer copy = layer;
          std::vector<Parameter*> ps;
          copy.collect(ps);
          testing::assign_values(ps, theta);
          return testing::weighted_sum(copy.forward(x, graph, tape));
        },
        flat);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("stacked encoder gradients match finite differences") {
  std::mt19937_64 rng(10);
  GatConfig cfg;
  cfg.hidden_dim = 4;
  cfg.heads = 2;
  cfg.layers = 2;
  GatEncoder encoder(cfg, rng);
  const VariableGraph graph = VariableGraph::complete(3);
  const Tensor x = random_tensor({3, 1}, rng);
  std::vector<Parameter*> params;
  encoder.collect(params);
  const double err = finite_diff_check(
      [&](const Tensor& theta, Tape* tape) {
        GatEncoder copy = encoder;
        std::vector<Parameter*> ps;
        copy.collect(ps);
        testing::assign_values(ps, theta);
        return testing::weighted_sum(copy.forward(x, graph, tape));
      },
      testing::flatten_values(params));
  CHECK(err < 1e-6);
}

TEST_CASE("config validation") {
  GatConfig cfg;
  cfg.hidden_dim = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.hidden_dim = 8;
  CHECK_NOTHROW(cfg.validate());
}

}  // TEST_SUITE
