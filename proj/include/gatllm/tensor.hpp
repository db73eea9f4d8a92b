// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors with reverse-mode differentiation.
//
// A `Tensor` is an immutable value: a shape plus shared row-major storage.
// When at least one input of an op is attached to a `Tape`, the op appends an
// entry to that tape and the result is attached too. `Tape::backward` then
// walks the entries in reverse. Entries only ever reference earlier nodes, so
// append order is already a topological order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gatllm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  /// Axis length; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  bool defined() const noexcept { return static_cast<bool>(data_); }

  std::span<const double> data() const noexcept {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a single-element tensor.
  double item() const;

  /// Writable storage; copies first when the buffer is shared.
  std::vector<double>& mutable_data();

  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }
  bool tracked() const noexcept { return tape_ != nullptr; }
  /// Same values, detached from any tape.
  Tensor detach() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// A named, trainable tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor value;
};

/// Receives the output gradient and one slot per op input. A slot is null
/// when that input does not need a gradient; otherwise the closure adds its
/// contribution into the slot.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> grad_in)>;

class Gradients {
 public:
  /// Gradient with respect to a tensor tracked on the tape that produced this
  /// map. Untouched nodes yield zeros.
  Tensor of(const Tensor& tracked) const;
  /// Gradient of a parameter bound through `Tape::use`; zeros if unused.
  Tensor of(const Parameter& param) const;
  std::span<const double> raw(const Parameter& param) const;

 private:
  friend class Tape;

  const Tape* tape_ = nullptr;
  std::vector<Shape> shapes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const Parameter*, std::size_t> params_;
};

/// Append-only computation record. Single-threaded; distinct tapes are
/// independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Attaches a constant as a differentiable leaf.
  Tensor watch(const Tensor& leaf);
  /// Binds a parameter for this pass. Repeated calls return the same node.
  /// A parameter whose value is already tracked on this tape is returned as
  /// is, which lets callers differentiate with respect to substituted values.
  Tensor use(const Parameter& param);

  Tensor record(std::string_view tag, Tensor output, std::span<const Tensor> inputs, BackwardFn backward);

  Gradients backward(const Tensor& loss) const;

  std::size_t node_count() const noexcept { return shapes_.size(); }
  std::size_t entry_count() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    std::string_view tag;
    std::vector<std::size_t> inputs;  // node ids, or npos for untracked
    std::size_t output;
    BackwardFn backward;
  };

  std::size_t new_node(const Shape& shape);

  std::vector<Shape> shapes_;
  std::vector<Entry> entries_;
  std::unordered_map<const Parameter*, std::size_t> params_;
};

/// Parameter binding that works with or without an active tape.
inline Tensor bind(Tape* tape, const Parameter& param) {
  return tape ? tape->use(param) : param.value;
}

namespace ops {

/// Matrix product over the last two axes. Leading axes must match exactly,
/// or one operand must be rank 2 and is shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise binary ops. Shapes must be equal, or one operand's shape must be
// a suffix of the other's (broadcast over leading axes only).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
/// Swaps two axes (materialized copy).
Tensor transpose(const Tensor& x, int axis_a = -2, int axis_b = -1);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x, int axis, bool keep_dim = false);
Tensor mean(const Tensor& x, int axis, bool keep_dim = false);
/// Sum / mean of every element, as a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax(const Tensor& x, int axis = -1);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.2);
/// tanh approximation used by GPT-2.
Tensor gelu(const Tensor& x);
/// Normalizes along `axis`. `gain` and `bias` are optional; when given they
/// have shape {dim(axis)}.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis = -1, double eps = 1e-5);
/// Rows of a rank-2 table.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);
/// Inverted dropout. Identity when rate is zero.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace ops

/// Central-difference gradient check of a scalar function. `f` receives a
/// tracked tensor and the tape when differentiating, a plain tensor and null
/// otherwise. Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-3);
/// the floor keeps round-off on exactly-zero gradients from reading as error.
double finite_diff_check(const std::function<Tensor(const Tensor&, Tape*)>& f, const Tensor& x, double h = 1e-5);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<std::vector<double>>& first_moment() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moment() const noexcept { return v_; }

  /// One bias-corrected Adam update. `grads[i]` belongs to `*params[i]`.
  void step(std::span<Parameter* const> params, std::span<const std::vector<double>> grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline void adam_step(std::span<Parameter* const> params, std::span<const std::vector<double>> grads,
                      AdamState& state) {
  state.step(params, grads);
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<std::vector<double>> grads, double max_norm);

}  // namespace gatllm
