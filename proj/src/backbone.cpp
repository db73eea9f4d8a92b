// SPDX-License-Identifier: Apache-2.0

#include "gatllm/backbone.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "gatllm/error.hpp"

namespace gatllm {

namespace {

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

Tensor maybe_dropout(const Tensor& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  return ops::dropout(x, rate, *rng);
}

}  // namespace

void BackboneConfig::validate() const {
  if (d_model == 0 || heads == 0 || ff_dim == 0 || max_seq_len == 0) {
    throw Error(ErrorCode::Config, "backbone: d_model, heads, ff_dim and max_seq_len must be positive");
  }
  if (d_model % heads != 0) {
    throw Error(ErrorCode::Config, "backbone: d_model " + std::to_string(d_model) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::Config, "backbone: dropout must lie in [0, 1)");
  if (!(init_std > 0.0)) throw Error(ErrorCode::Config, "backbone: init_std must be positive");
}

// ---------------------------------------------------------------------------

Affine::Affine(std::size_t in, std::size_t out, const std::string& name, double init_std, std::mt19937_64& rng)
    : weight{name + ".weight", random_normal({in, out}, init_std, rng)},
      bias{name + ".bias", Tensor::zeros({out})} {}

Tensor Affine::operator()(const Tensor& x, Tape* tape) const {
  return ops::add(ops::matmul(x, bind(tape, weight)), bind(tape, bias));
}

void Affine::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

void Affine::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNormParams::LayerNormParams(std::size_t dim, const std::string& name)
    : gain{name + ".gain", Tensor::full({dim}, 1.0)}, bias{name + ".bias", Tensor::zeros({dim})} {}

Tensor LayerNormParams::operator()(const Tensor& x, Tape* tape) const {
  return ops::layer_norm(x, bind(tape, gain), bind(tape, bias), -1);
}

void LayerNormParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

void LayerNormParams::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&gain);
  out.push_back(&bias);
}

Tensor causal_mask(std::size_t length) {
  std::vector<double> mask(length * length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = i + 1; j < length; ++j) mask[i * length + j] = -std::numeric_limits<double>::infinity();
  }
  return Tensor({length, length}, std::move(mask));
}

// ---------------------------------------------------------------------------

DecoderBlock::DecoderBlock(const BackboneConfig& config, const std::string& prefix, std::mt19937_64& rng)
    : d_model_(config.d_model),
      heads_(config.heads),
      dropout_(config.dropout),
      norm_attn_(config.d_model, prefix + ".norm_attn"),
      query_(config.d_model, config.d_model, prefix + ".attn.query", config.init_std, rng),
      key_(config.d_model, config.d_model, prefix + ".attn.key", config.init_std, rng),
      value_(config.d_model, config.d_model, prefix + ".attn.value", config.init_std, rng),
      output_(config.d_model, config.d_model, prefix + ".attn.output", config.init_std, rng),
      norm_ff_(config.d_model, prefix + ".norm_ff"),
      ff_in_(config.d_model, config.ff_dim, prefix + ".ff.in", config.init_std, rng),
      ff_out_(config.ff_dim, config.d_model, prefix + ".ff.out", config.init_std, rng) {}

Tensor DecoderBlock::self_attention(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng,
                                    AttentionProbe* probe) const {
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t head_dim = d_model_ / heads_;
  auto split_heads = [&](const Tensor& t) {
    return ops::transpose(ops::reshape(t, {batch, len, heads_, head_dim}), 1, 2);
  };
  const Tensor q = split_heads(query_(x, tape));
  const Tensor k = split_heads(key_(x, tape));
  const Tensor v = split_heads(value_(x, tape));
  Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k, -2, -1)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  scores = ops::add(scores, causal_mask(len));
  Tensor weights = ops::softmax(scores, -1);
  if (probe) probe->push_back(weights.detach());
  weights = maybe_dropout(weights, dropout_, dropout_rng);
  const Tensor mixed = ops::reshape(ops::transpose(ops::matmul(weights, v), 1, 2), {batch, len, d_model_});
  return maybe_dropout(output_(mixed, tape), dropout_, dropout_rng);
}

Tensor DecoderBlock::forward(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng, AttentionProbe* probe) const {
  if (x.rank() != 3 || x.dim(2) != d_model_) {
    throw Error(ErrorCode::Shape, "decoder block: expected [batch, tau, " + std::to_string(d_model_) + "], got " +
                                      shape_string(x.shape()));
  }
  const Tensor h = ops::add(x, self_attention(norm_attn_(x, tape), tape, dropout_rng, probe));
  const Tensor ff = ff_out_(ops::gelu(ff_in_(norm_ff_(h, tape), tape)), tape);
  return ops::add(h, maybe_dropout(ff, dropout_, dropout_rng));
}

void DecoderBlock::collect(std::vector<Parameter*>& out) {
  norm_attn_.collect(out);
  query_.collect(out);
  key_.collect(out);
  value_.collect(out);
  output_.collect(out);
  norm_ff_.collect(out);
  ff_in_.collect(out);
  ff_out_.collect(out);
}

void DecoderBlock::collect(std::vector<const Parameter*>& out) const {
  norm_attn_.collect(out);
  query_.collect(out);
  key_.collect(out);
  value_.collect(out);
  output_.collect(out);
  norm_ff_.collect(out);
  ff_in_.collect(out);
  ff_out_.collect(out);
}

// ---------------------------------------------------------------------------

Tensor embed_tokens(const Tensor& features, const Affine& projection, Tape* tape) {
  const std::size_t expected = projection.weight.value.dim(0);
  if (features.rank() < 2 || features.dim(-1) != expected) {
    throw Error(ErrorCode::Shape, "embed_tokens: expected [..., tau, " + std::to_string(expected) + "], got " +
                                      shape_string(features.shape()));
  }
  return projection(features, tape);
}

Tensor add_positions(const Tensor& tokens, const Parameter& table, Tape* tape) {
  if (tokens.rank() < 2 || tokens.dim(-1) != table.value.dim(1)) {
    throw Error(ErrorCode::Shape, "add_positions: tokens " + shape_string(tokens.shape()) + " vs table " +
                                      shape_string(table.value.shape()));
  }
  const std::size_t len = tokens.dim(-2);
  if (len > table.value.dim(0)) {
    throw Error(ErrorCode::Range, "add_positions: sequence length " + std::to_string(len) +
                                      " exceeds maximum " + std::to_string(table.value.dim(0)));
  }
  std::vector<std::size_t> idx(len);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return ops::add(tokens, ops::embedding_lookup(bind(tape, table), idx));
}

Decoder::Decoder(const BackboneConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  positions_ = {"backbone.positions", random_normal({config_.max_seq_len, config_.d_model}, config_.init_std, rng)};
  for (std::size_t l = 0; l < config_.layers; ++l) {
    blocks_.emplace_back(config_, "backbone.block" + std::to_string(l), rng);
  }
  final_norm_ = LayerNormParams(config_.d_model, "backbone.final_norm");
}

Tensor Decoder::decode(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng, AttentionProbe* probe) const {
  if (x.rank() != 3 || x.dim(2) != config_.d_model) {
    throw Error(ErrorCode::Shape, "decoder: expected [batch, tau, " + std::to_string(config_.d_model) + "], got " +
                                      shape_string(x.shape()));
  }
  Tensor h = x;
  for (const auto& block : blocks_) h = block.forward(h, tape, dropout_rng, probe);
  return final_norm_(h, tape);
}

Tensor Decoder::forward(const Tensor& tokens, Tape* tape, std::mt19937_64* dropout_rng, AttentionProbe* probe) const {
  return decode(add_positions(tokens, positions_, tape), tape, dropout_rng, probe);
}

void Decoder::collect(std::vector<Parameter*>& out) {
  out.push_back(&positions_);
  for (auto& b : blocks_) b.collect(out);
  final_norm_.collect(out);
}

void Decoder::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&positions_);
  for (const auto& b : blocks_) b.collect(out);
  final_norm_.collect(out);
}

}  // namespace gatllm
