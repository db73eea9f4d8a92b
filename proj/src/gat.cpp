// SPDX-License-Identifier: Apache-2.0

#include "gatllm/gat.hpp"

#include <cmath>
#include <limits>

#include "gatllm/error.hpp"

namespace gatllm {

namespace {

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

Tensor mask_bias(const VariableGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<double> bias(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t m = 0; m < n; ++m) {
      if (!graph.edge(j, m)) bias[j * n + m] = -std::numeric_limits<double>::infinity();
    }
  }
  return Tensor({n, n}, std::move(bias));
}

}  // namespace

// ---------------------------------------------------------------------------
// VariableGraph

VariableGraph::VariableGraph(std::size_t node_count, std::vector<std::uint8_t> adjacency)
    : n_(node_count), adjacency_(std::move(adjacency)) {
  if (n_ == 0) throw Error(ErrorCode::InvalidArgument, "graph needs at least one node");
  if (adjacency_.size() != n_ * n_) {
    throw Error(ErrorCode::Shape, "adjacency has " + std::to_string(adjacency_.size()) + " entries for " +
                                      std::to_string(n_) + " nodes");
  }
  for (std::size_t j = 0; j < n_; ++j) {
    if (!edge(j, j)) throw Error(ErrorCode::InvalidArgument, "node " + std::to_string(j) + " lacks its self-loop");
  }
}

VariableGraph VariableGraph::complete(std::size_t node_count) {
  return VariableGraph(node_count, std::vector<std::uint8_t>(node_count * node_count, 1));
}

VariableGraph VariableGraph::self_loops(std::size_t node_count) {
  std::vector<std::uint8_t> adj(node_count * node_count, 0);
  for (std::size_t j = 0; j < node_count; ++j) adj[j * node_count + j] = 1;
  return VariableGraph(node_count, std::move(adj));
}

bool VariableGraph::is_complete() const noexcept {
  for (auto a : adjacency_) {
    if (!a) return false;
  }
  return true;
}

std::size_t VariableGraph::neighbour_count(std::size_t j) const {
  std::size_t count = 0;
  for (std::size_t m = 0; m < n_; ++m) count += edge(j, m) ? 1 : 0;
  return count;
}

VariableGraph VariableGraph::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != n_) throw Error(ErrorCode::Shape, "permutation length does not match node count");
  std::vector<std::uint8_t> adj(n_ * n_);
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t m = 0; m < n_; ++m) adj[j * n_ + m] = adjacency_[perm[j] * n_ + perm[m]];
  }
  return VariableGraph(n_, std::move(adj));
}

void GatConfig::validate() const {
  if (in_dim == 0 || hidden_dim == 0 || heads == 0 || layers == 0) {
    throw Error(ErrorCode::Config, "gat: dimensions, heads and layers must be positive");
  }
  if (hidden_dim % heads != 0) {
    throw Error(ErrorCode::Config, "gat: hidden_dim " + std::to_string(hidden_dim) + " not divisible by " +
                                       std::to_string(heads) + " heads");
  }
}

// ---------------------------------------------------------------------------
// GatLayer

GatLayer::GatLayer(std::size_t in_dim, std::size_t hidden_dim, std::size_t heads, double leaky_slope,
                   const std::string& prefix, std::mt19937_64& rng, bool residual)
    : in_dim_(in_dim), head_dim_(hidden_dim / heads), leaky_slope_(leaky_slope) {
  const double w_std = std::sqrt(2.0 / static_cast<double>(in_dim + head_dim_));
  const double a_std = std::sqrt(2.0 / static_cast<double>(2 * head_dim_ + 1));
  for (std::size_t k = 0; k < heads; ++k) {
    const std::string head = prefix + ".head" + std::to_string(k);
    weights_.push_back({head + ".weight", random_normal({in_dim_, head_dim_}, w_std, rng)});
    attention_.push_back({head + ".attention", random_normal({2 * head_dim_, 1}, a_std, rng)});
  }
  if (residual) {
    const std::size_t out = head_dim_ * heads;
    residual_ = {prefix + ".residual", random_normal({in_dim_, out}, std::sqrt(2.0 / static_cast<double>(in_dim + out)), rng)};
  }
}

Tensor GatLayer::transform(std::size_t head, const Tensor& x, Tape* tape) const {
  if (x.rank() < 2 || x.dim(-1) != in_dim_) {
    throw Error(ErrorCode::Shape, "gat: expected node features [..., N, " + std::to_string(in_dim_) + "], got " +
                                      shape_string(x.shape()));
  }
  return ops::matmul(x, bind(tape, weights_.at(head)));
}

Tensor GatLayer::attention_coefficients(std::size_t head, const Tensor& h, const VariableGraph& graph,
                                        Tape* tape) const {
  const std::size_t n = graph.node_count();
  if (h.rank() < 2 || h.dim(-2) != n || h.dim(-1) != head_dim_) {
    throw Error(ErrorCode::Shape, "gat attention: expected [..., " + std::to_string(n) + ", " +
                                      std::to_string(head_dim_) + "], got " + shape_string(h.shape()));
  }
  const Tensor a = bind(tape, attention_.at(head));
  const Tensor a_self = ops::slice(a, 0, 0, head_dim_);
  const Tensor a_neighbour = ops::slice(a, 0, head_dim_, 2 * head_dim_);
  const Tensor ones = Tensor::full({1, n}, 1.0);
  // e[j, m] = a_self . h_j + a_neighbour . h_m
  const Tensor from_self = ops::matmul(ops::matmul(h, a_self), ones);
  const Tensor from_neighbour = ops::transpose(ops::matmul(ops::matmul(h, a_neighbour), ones), -2, -1);
  Tensor logits = ops::leaky_relu(ops::add(from_self, from_neighbour), leaky_slope_);
  if (!graph.is_complete()) logits = ops::add(logits, mask_bias(graph));
  return ops::softmax(logits, -1);
}

Tensor GatLayer::forward(const Tensor& x, const VariableGraph& graph, Tape* tape) const {
  if (x.rank() < 2 || x.dim(-2) != graph.node_count()) {
    throw Error(ErrorCode::Shape, "gat: expected " + std::to_string(graph.node_count()) + " nodes, got " +
                                      shape_string(x.shape()));
  }
  std::vector<Tensor> heads;
  heads.reserve(weights_.size());
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const Tensor h = transform(k, x, tape);
    const Tensor alpha = attention_coefficients(k, h, graph, tape);
    heads.push_back(ops::matmul(alpha, h));
  }
  Tensor out = heads.size() == 1 ? heads.front() : ops::concat(heads, -1);
  if (residual()) out = ops::add(out, ops::matmul(x, bind(tape, residual_)));
  return out;
}

void GatLayer::collect(std::vector<Parameter*>& out) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&attention_[k]);
  }
  if (residual()) out.push_back(&residual_);
}

void GatLayer::collect(std::vector<const Parameter*>& out) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&attention_[k]);
  }
  if (residual()) out.push_back(&residual_);
}

// ---------------------------------------------------------------------------
// GatEncoder

GatEncoder::GatEncoder(const GatConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? config_.in_dim : config_.hidden_dim;
    layers_.emplace_back(in, config_.hidden_dim, config_.heads, config_.leaky_slope, "gat.layer" + std::to_string(l),
                         rng, config_.residual);
  }
}

Tensor GatEncoder::forward(const Tensor& x, const VariableGraph& graph, Tape* tape) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0) h = ops::gelu(h);
    h = layers_[l].forward(h, graph, tape);
  }
  return h;
}

void GatEncoder::collect(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer.collect(out);
}

void GatEncoder::collect(std::vector<const Parameter*>& out) const {
  for (const auto& layer : layers_) layer.collect(out);
}

}  // namespace gatllm
