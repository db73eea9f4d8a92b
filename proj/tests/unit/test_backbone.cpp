// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "gatllm/backbone.hpp"
#include "gatllm/error.hpp"
#include "test_util.hpp"

using namespace gatllm;
using testing::random_tensor;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.ff_dim = 16;
  cfg.max_seq_len = 8;
  cfg.init_std = 0.3;  // larger than the default so attention is not uniform
  return cfg;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("causal mask is zero on and below the diagonal") {
  const Tensor m = causal_mask(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (j <= i) {
        CHECK(m[i * 4 + j] == 0.0);
      } else {
        CHECK(m[i * 4 + j] == -std::numeric_limits<double>::infinity());
      }
    }
  }
}

TEST_CASE("token projection with zero weights yields the bias") {
  std::mt19937_64 rng(1);
  Affine proj(6, 4, "p", 0.02, rng);
  proj.weight.value = Tensor::zeros({6, 4});
  proj.bias.value = Tensor({4}, {1.0, -2.0, 0.5, 3.0});
  const Tensor tokens = embed_tokens(random_tensor({5, 6}, rng), proj, nullptr);
  REQUIRE(tokens.shape() == Shape{5, 4});
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(tokens[t * 4 + c] == proj.bias.value[c]);
  }
}

TEST_CASE("identity projection passes features through") {
  std::mt19937_64 rng(2);
  Affine proj(3, 3, "p", 0.02, rng);
  proj.weight.value = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x = random_tensor({2, 4, 3}, rng);
  const Tensor tokens = embed_tokens(x, proj, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(tokens[i] == x[i]);
  CHECK_THROWS_AS(embed_tokens(random_tensor({4, 5}, rng), proj, nullptr), Error);
}

TEST_CASE("token projection gradients match finite differences") {
  std::mt19937_64 rng(3);
  Affine proj(6, 4, "p", 0.5, rng);
  const Tensor x = random_tensor({3, 6}, rng);
  CHECK(testing::grad_error([&](const Tensor& t) { return embed_tokens(t, proj, nullptr); }, x) < 1e-6);
  std::vector<Parameter*> params;
  proj.collect(params);
  const double err = finite_diff_check(
      [&](const Tensor& theta, Tape* tape) {
        Affine copy = proj;
        std::vector<Parameter*> ps;
        copy.collect(ps);
        testing::assign_values(ps, theta);
        return testing::weighted_sum(embed_tokens(x, copy, tape));
      },
      testing::flatten_values(params));
  CHECK(err < 1e-6);
}

TEST_CASE("position table addition") {
  std::mt19937_64 rng(4);
  Parameter zeros{"pos", Tensor::zeros({6, 4})};
  const Tensor tokens = random_tensor({2, 5, 4}, rng);
  const Tensor same = add_positions(tokens, zeros, nullptr);
  for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(same[i] == tokens[i]);

  Parameter table{"pos", random_tensor({6, 4}, rng)};
  const Tensor rows = add_positions(Tensor::zeros({5, 4}), table, nullptr);
  for (std::size_t i = 0; i < 20; ++i) CHECK(rows[i] == table.value[i]);

  CHECK_THROWS_AS(add_positions(Tensor::zeros({7, 4}), table, nullptr), Error);
  CHECK_NOTHROW(add_positions(Tensor::zeros({6, 4}), table, nullptr));
}

TEST_CASE("empty stack applies only the final norm") {
  std::mt19937_64 rng(5);
  BackboneConfig cfg = tiny_config();
  cfg.layers = 0;
  Decoder decoder(cfg, rng);
  const Tensor x = random_tensor({2, 5, 8}, rng);
  const Tensor out = decoder.decode(x, nullptr);
  const Tensor expected = ops::layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == expected[i]);
}

TEST_CASE("decoder preserves shape") {
  std::mt19937_64 rng(6);
  BackboneConfig cfg = tiny_config();
  cfg.layers = 2;
  Decoder decoder(cfg, rng);
  for (std::size_t len : {1u, 3u, 8u}) {
    const Tensor x = random_tensor({3, len, 8}, rng);
    CHECK(decoder.forward(x, nullptr).shape() == x.shape());
  }
}

TEST_CASE("prefix perturbation leaves earlier positions bit-identical") {
  std::mt19937_64 rng(7);
  BackboneConfig cfg = tiny_config();
  cfg.layers = 2;
  Decoder decoder(cfg, rng);
  std::uniform_int_distribution<std::size_t> pick(1, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor({2, 8, 8}, rng);
    const std::size_t cut = pick(rng);
    std::vector<double> perturbed(x.data().begin(), x.data().end());
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t t = cut; t < 8; ++t) {
        for (std::size_t c = 0; c < 8; ++c) perturbed[(b * 8 + t) * 8 + c] += noise(rng);
      }
    }
    const Tensor y = decoder.forward(x, nullptr);
    const Tensor yp = decoder.forward(Tensor(x.shape(), perturbed), nullptr);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t t = 0; t < cut; ++t) {
        for (std::size_t c = 0; c < 8; ++c) REQUIRE(y[(b * 8 + t) * 8 + c] == yp[(b * 8 + t) * 8 + c]);
      }
    }
  }
}

TEST_CASE("attention rows are causal distributions") {
  std::mt19937_64 rng(8);
  BackboneConfig cfg = tiny_config();
  cfg.layers = 2;
  Decoder decoder(cfg, rng);
  AttentionProbe probe;
  decoder.forward(random_tensor({3, 6, 8}, rng), nullptr, nullptr, &probe);
  REQUIRE(probe.size() == 2);
  for (const auto& w : probe) {
    REQUIRE(w.shape() == Shape{3, 2, 6, 6});
    for (std::size_t bh = 0; bh < 6; ++bh) {
      for (std::size_t i = 0; i < 6; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          const double a = w[(bh * 6 + i) * 6 + j];
          CHECK(a >= 0.0);
          if (j > i) CHECK(a == 0.0);
          total += a;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("decoder block gradients match finite differences") {
  std::mt19937_64 rng(9);
  const BackboneConfig cfg = tiny_config();
  DecoderBlock block(cfg, "b", rng);
  const Tensor x = random_tensor({2, 4, 8}, rng);
  CHECK(testing::grad_error([&](const Tensor& t) { return block.forward(t, nullptr); }, x) < 1e-6);

  std::vector<Parameter*> params;
  block.collect(params);
  const double err = finite_diff_check(
      [&](const Tensor& theta, Tape* tape) {
        DecoderBlock copy = block;
        std::vector<Parameter*> ps;
        copy.collect(ps);
        testing::assign_values(ps, theta);
        return testing::weighted_sum(copy.forward(x, tape));
      },
      testing::flatten_values(params));
  CHECK(err < 1e-6);
}

TEST_CASE("full decoder gradients match finite differences") {
  std::mt19937_64 rng(10);
  const BackboneConfig cfg = tiny_config();
  Decoder decoder(cfg, rng);
  const Tensor x = random_tensor({1, 5, 8}, rng);
  std::vector<Parameter*> params;
  decoder.collect(params);
  const double err = finite_diff_check(
      [&](const Tensor& theta, Tape* tape) {
        Decoder copy = decoder;
        std::vector<Parameter*> ps;
        copy.collect(ps);
        testing::assign_values(ps, theta);
        return testing::weighted_sum(copy.forward(x, tape));
      },
      testing::flatten_values(params));
  CHECK(err < 1e-6);
}

TEST_CASE("every backbone parameter receives a gradient") {
  std::mt19937_64 rng(11);
  BackboneConfig cfg = tiny_config();
  cfg.layers = 2;
  Decoder decoder(cfg, rng);
  const Tensor x = random_tensor({2, 6, 8}, rng);
  Tape tape;
  const Gradients g = tape.backward(testing::weighted_sum(decoder.forward(x, &tape)));
  std::vector<const Parameter*> params;
  decoder.collect(params);
  for (const auto* p : params) {
    double norm = 0.0;
    for (double v : g.raw(*p)) norm += v * v;
    CHECK_MESSAGE(norm > 0.0, p->name);
  }
}

TEST_CASE("config validation") {
  BackboneConfig cfg;
  cfg.d_model = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.d_model = 64;
  CHECK_NOTHROW(cfg.validate());
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

}  // TEST_SUITE
