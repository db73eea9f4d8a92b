// SPDX-License-Identifier: Apache-2.0
//
// GPT-2 style decoder: learnable positions, pre-norm blocks with causally
// masked multi-head self-attention and a gelu feed-forward, final layer norm.

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gatllm/tensor.hpp"

namespace gatllm {

struct BackboneConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t max_seq_len = 64;
  double dropout = 0.0;
  double init_std = 0.02;

  void validate() const;
};

/// Affine map applied to every position: [..., in] -> [..., out].
struct Affine {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]

  Affine() = default;
  Affine(std::size_t in, std::size_t out, const std::string& name, double init_std, std::mt19937_64& rng);

  Tensor operator()(const Tensor& x, Tape* tape) const;
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

struct LayerNormParams {
  Parameter gain;
  Parameter bias;

  LayerNormParams() = default;
  LayerNormParams(std::size_t dim, const std::string& name);

  Tensor operator()(const Tensor& x, Tape* tape) const;
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

/// Receives the attention weights [batch, heads, tau, tau] of each block.
using AttentionProbe = std::vector<Tensor>;

/// Causal additive mask: 0 on and below the diagonal, -inf above.
Tensor causal_mask(std::size_t length);

class DecoderBlock {
 public:
  DecoderBlock(const BackboneConfig& config, const std::string& prefix, std::mt19937_64& rng);

  /// x: [batch, tau, d_model].
  Tensor forward(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng = nullptr,
                 AttentionProbe* probe = nullptr) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

 private:
  Tensor self_attention(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng, AttentionProbe* probe) const;

  std::size_t d_model_;
  std::size_t heads_;
  double dropout_;
  LayerNormParams norm_attn_;
  Affine query_;
  Affine key_;
  Affine value_;
  Affine output_;
  LayerNormParams norm_ff_;
  Affine ff_in_;
  Affine ff_out_;
};

/// token_t = flatten(features_t) W + b, for features [..., tau, F].
Tensor embed_tokens(const Tensor& features, const Affine& projection, Tape* tape);

/// tokens [..., tau, d_model] + table[0..tau). Throws when tau exceeds the table.
Tensor add_positions(const Tensor& tokens, const Parameter& table, Tape* tape);

class Decoder {
 public:
  Decoder(const BackboneConfig& config, std::mt19937_64& rng);

  const BackboneConfig& config() const noexcept { return config_; }
  const Parameter& positions() const noexcept { return positions_; }
  Parameter& positions() noexcept { return positions_; }

  /// Adds positions, runs the blocks, applies the final norm.
  Tensor forward(const Tensor& tokens, Tape* tape, std::mt19937_64* dropout_rng = nullptr,
                 AttentionProbe* probe = nullptr) const;
  /// Blocks and final norm only, on inputs that already carry positions.
  Tensor decode(const Tensor& x, Tape* tape, std::mt19937_64* dropout_rng = nullptr,
                AttentionProbe* probe = nullptr) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

 private:
  BackboneConfig config_;
  Parameter positions_;  // [max_seq_len, d_model]
  std::vector<DecoderBlock> blocks_;
  LayerNormParams final_norm_;
};

}  // namespace gatllm
