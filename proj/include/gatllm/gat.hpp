// SPDX-License-Identifier: Apache-2.0
//
// Multi-head graph attention over the variables observed at one timestep.
// Each variable is a node; leading tensor axes are independent graphs, so a
// whole batch of windows runs through one call.

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gatllm/tensor.hpp"

namespace gatllm {

/// Directed neighbourhoods over `node_count` variables. Self-loops are
/// mandatory: a node always attends to itself.
class VariableGraph {
 public:
  VariableGraph() = default;
  VariableGraph(std::size_t node_count, std::vector<std::uint8_t> adjacency);

  static VariableGraph complete(std::size_t node_count);
  static VariableGraph self_loops(std::size_t node_count);

  std::size_t node_count() const noexcept { return n_; }
  bool edge(std::size_t j, std::size_t m) const { return adjacency_[j * n_ + m] != 0; }
  bool is_complete() const noexcept;
  const std::vector<std::uint8_t>& adjacency() const noexcept { return adjacency_; }
  std::size_t neighbour_count(std::size_t j) const;

  /// Relabels nodes: node j of the result is node perm[j] of this graph.
  VariableGraph permuted(const std::vector<std::size_t>& perm) const;

  friend bool operator==(const VariableGraph&, const VariableGraph&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> adjacency_;
};

struct GatConfig {
  std::size_t in_dim = 1;
  std::size_t hidden_dim = 64;  // total across heads
  std::size_t heads = 4;
  std::size_t layers = 1;
  double leaky_slope = 0.2;
  /// Adds x W_res to each node's concatenated output so the node's own value
  /// survives aggregation.
  bool residual = true;

  std::size_t head_dim() const { return hidden_dim / heads; }
  void validate() const;
};

/// Weights draw from a Glorot normal; attention vectors likewise.
class GatLayer {
 public:
  GatLayer(std::size_t in_dim, std::size_t hidden_dim, std::size_t heads, double leaky_slope, const std::string& prefix,
           std::mt19937_64& rng, bool residual = false);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t heads() const noexcept { return weights_.size(); }
  std::size_t head_dim() const noexcept { return head_dim_; }
  std::size_t out_dim() const noexcept { return head_dim_ * weights_.size(); }

  /// Per-head projection x W_k for x of shape [..., N, in_dim].
  Tensor transform(std::size_t head, const Tensor& x, Tape* tape) const;

  /// Normalized attention [..., N, N] for transformed features h [..., N, d].
  /// Row j is a softmax over the neighbourhood of j; non-edges are exactly 0.
  Tensor attention_coefficients(std::size_t head, const Tensor& h, const VariableGraph& graph, Tape* tape) const;

  /// [..., N, in_dim] -> [..., N, heads * head_dim]: per head, every node sums
  /// its neighbours' transformed features weighted by attention; heads are
  /// concatenated. With a residual map, x W_res is added to the result.
  Tensor forward(const Tensor& x, const VariableGraph& graph, Tape* tape) const;

  std::vector<Parameter>& weights() noexcept { return weights_; }
  std::vector<Parameter>& attention() noexcept { return attention_; }
  bool residual() const noexcept { return residual_.value.defined(); }
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

 private:
  std::size_t in_dim_;
  std::size_t head_dim_;
  double leaky_slope_;
  std::vector<Parameter> weights_;    // [in_dim, head_dim] per head
  std::vector<Parameter> attention_;  // [2 * head_dim, 1] per head: source half, then neighbour half
  Parameter residual_;                // [in_dim, heads * head_dim], unset without residual
};

/// Stack of GAT layers with gelu between consecutive layers.
class GatEncoder {
 public:
  GatEncoder(const GatConfig& config, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const VariableGraph& graph, Tape* tape) const;

  const GatConfig& config() const noexcept { return config_; }
  std::vector<GatLayer>& layers() noexcept { return layers_; }
  const std::vector<GatLayer>& layers() const noexcept { return layers_; }
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;

 private:
  GatConfig config_;
  std::vector<GatLayer> layers_;
};

}  // namespace gatllm
