// SPDX-License-Identifier: Apache-2.0

#include "gatllm/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gatllm/error.hpp"

namespace gatllm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr std::size_t kUntracked = std::numeric_limits<std::size_t>::max();

// Below this many multiply-adds a coefficient-wise product beats the blocked
// GEMM kernel. The choice depends only on shapes, so results stay deterministic.
constexpr std::size_t kSmallProduct = 16384;

template <typename Out, typename A, typename B>
void product(Out&& out, const A& a, const B& b, bool accumulate) {
  const auto work = static_cast<std::size_t>(a.rows() * a.cols() * b.cols());
  if (work <= kSmallProduct) {
    if (accumulate) {
      out.noalias() += a.lazyProduct(b);
    } else {
      out.noalias() = a.lazyProduct(b);
    }
  } else if (accumulate) {
    out.noalias() += a * b;
  } else {
    out.noalias() = a * b;
  }
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::Shape,
              std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const std::string& what) {
  throw Error(ErrorCode::Shape, std::string(op) + ": " + what + " for shape " + shape_string(a));
}

std::size_t resolve_axis(std::string_view op, const Shape& shape, int axis) {
  const int rank = static_cast<int>(shape.size());
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank) {
    shape_error(op, shape, "axis " + std::to_string(axis) + " out of range");
  }
  return static_cast<std::size_t>(resolved);
}

// outer × length × inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Tape* common_tape(std::string_view op, std::span<const Tensor> inputs) {
  Tape* tape = nullptr;
  for (const auto& t : inputs) {
    if (!t.tracked()) continue;
    if (tape != nullptr && tape != t.tape()) {
      throw Error(ErrorCode::InvalidArgument, std::string(op) + ": inputs recorded on different tapes");
    }
    tape = t.tape();
  }
  return tape;
}

Tensor finish(std::string_view tag, Tensor out, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  std::span<const Tensor> span(inputs.begin(), inputs.size());
  Tape* tape = common_tape(tag, span);
  if (tape == nullptr) return out;
  return tape->record(tag, std::move(out), span, std::move(fn));
}

Tensor finish(std::string_view tag, Tensor out, std::span<const Tensor> inputs, BackwardFn fn) {
  Tape* tape = common_tape(tag, inputs);
  if (tape == nullptr) return out;
  return tape->record(tag, std::move(out), inputs, std::move(fn));
}

void require_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) throw Error(ErrorCode::InvalidArgument, std::string(op) + ": undefined tensor");
}

// Swap axes a < b of `in` (shape `shape`) into `out`.
void swap_axes(const double* in, double* out, const Shape& shape, std::size_t a, std::size_t b,
               bool accumulate) {
  std::size_t pre = 1, mid = 1, post = 1;
  for (std::size_t i = 0; i < a; ++i) pre *= shape[i];
  for (std::size_t i = a + 1; i < b; ++i) mid *= shape[i];
  for (std::size_t i = b + 1; i < shape.size(); ++i) post *= shape[i];
  const std::size_t na = shape[a];
  const std::size_t nb = shape[b];
  // in  layout: [pre, na, mid, nb, post]
  // out layout: [pre, nb, mid, na, post]
  for (std::size_t p = 0; p < pre; ++p) {
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t m = 0; m < mid; ++m) {
        for (std::size_t j = 0; j < na; ++j) {
          const double* src = in + ((((p * na + j) * mid + m) * nb + i) * post);
          double* dst = out + ((((p * nb + i) * mid + m) * na + j) * post);
          if (accumulate) {
            for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
          } else {
            std::copy(src, src + post, dst);
          }
        }
      }
    }
  }
}


// Applies f(x, y) with `small` repeating over the leading axes of `big`.
template <typename F>
void broadcast_apply(std::span<const double> big, std::span<const double> small, double* out, bool big_first, F f) {
  const std::size_t n = big.size();
  const std::size_t ns = small.size();
  for (std::size_t base = 0; base < n; base += ns) {
    const double* x = big.data() + base;
    double* o = out + base;
    if (big_first) {
      for (std::size_t i = 0; i < ns; ++i) o[i] = f(x[i], small[i]);
    } else {
      for (std::size_t i = 0; i < ns; ++i) o[i] = f(small[i], x[i]);
    }
  }
}

// Adds factor * g into dst, folding the leading axes when dst is smaller.
void reduce_into(std::span<const double> g, std::vector<double>& dst, double factor) {
  const std::size_t ns = dst.size();
  double* d = dst.data();
  for (std::size_t base = 0; base < g.size(); base += ns) {
    const double* src = g.data() + base;
    for (std::size_t i = 0; i < ns; ++i) d[i] += factor * src[i];
  }
}

// Adds g * other into dst, where `other` and g share the big shape or other is
// broadcast; dst is folded when smaller.
void reduce_product_into(std::span<const double> g, std::span<const double> other, std::vector<double>& dst) {
  const std::size_t n = g.size();
  const std::size_t no = other.size();
  const std::size_t nd = dst.size();
  double* d = dst.data();
  if (no == n && nd == n) {
    for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * other[i];
    return;
  }
  for (std::size_t base = 0; base < n; base += std::min(no, nd)) {
    const std::size_t len = std::min(no, nd);
    const double* gs = g.data() + base;
    const double* os = other.data() + (no == n ? base : 0);
    double* ds = d + (nd == n ? base : 0);
    for (std::size_t i = 0; i < len; ++i) ds[i] += gs[i] * os[i];
  }
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(std::string_view tag, const Tensor& a, const Tensor& b, BinaryKind kind) {
  require_defined(tag, a);
  require_defined(tag, b);
  const bool a_big = is_suffix(b.shape(), a.shape());
  if (!a_big && !is_suffix(a.shape(), b.shape())) shape_error(tag, a.shape(), b.shape());
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  std::vector<double> out(big.size());
  switch (kind) {
    case BinaryKind::Add:
      broadcast_apply(big.data(), small.data(), out.data(), a_big, [](double x, double y) { return x + y; });
      break;
    case BinaryKind::Sub:
      broadcast_apply(big.data(), small.data(), out.data(), a_big, [](double x, double y) { return x - y; });
      break;
    case BinaryKind::Mul:
      broadcast_apply(big.data(), small.data(), out.data(), a_big, [](double x, double y) { return x * y; });
      break;
  }
  Tensor result(big.shape(), std::move(out));
  if (!a.tracked() && !b.tracked()) return result;
  // Add and sub never read the operands during backward.
  const Tensor keep_a = kind == BinaryKind::Mul ? a.detach() : Tensor();
  const Tensor keep_b = kind == BinaryKind::Mul ? b.detach() : Tensor();
  return finish(tag, std::move(result), {a, b},
                [a = keep_a, b = keep_b, kind](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  if (kind == BinaryKind::Mul) {
                    if (gin[0] != nullptr) reduce_product_into(g, b.data(), *gin[0]);
                    if (gin[1] != nullptr) reduce_product_into(g, a.data(), *gin[1]);
                    return;
                  }
                  if (gin[0] != nullptr) reduce_into(g, *gin[0], 1.0);
                  if (gin[1] != nullptr) reduce_into(g, *gin[1], kind == BinaryKind::Sub ? -1.0 : 1.0);
                });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(ErrorCode::Shape, "tensor: zero-length axis in " + shape_string(shape_));
  }
  if (shape_size(shape_) != data.size()) {
    throw Error(ErrorCode::Shape, "tensor: data length " + std::to_string(data.size()) +
                                      " does not match shape " + shape_string(shape_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

std::size_t Tensor::dim(int axis) const { return shape_[resolve_axis("dim", shape_, axis)]; }

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorCode::Shape, "item: tensor of shape " + shape_string(shape_) + " is not a scalar");
  return (*data_)[0];
}

std::vector<double>& Tensor::mutable_data() {
  if (!data_) throw Error(ErrorCode::InvalidArgument, "mutable_data: undefined tensor");
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return *data_;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

// ---------------------------------------------------------------------------
// Tape

std::size_t Tape::new_node(const Shape& shape) {
  shapes_.push_back(shape);
  return shapes_.size() - 1;
}

Tensor Tape::watch(const Tensor& leaf) {
  require_defined("watch", leaf);
  Tensor t = leaf.detach();
  t.tape_ = this;
  t.node_ = new_node(t.shape_);
  return t;
}

Tensor Tape::use(const Parameter& param) {
  if (param.value.tape() == this) return param.value;
  if (auto it = params_.find(&param); it != params_.end()) {
    Tensor t = param.value.detach();
    t.tape_ = this;
    t.node_ = it->second;
    return t;
  }
  Tensor t = watch(param.value);
  params_.emplace(&param, t.node_);
  return t;
}

Tensor Tape::record(std::string_view tag, Tensor output, std::span<const Tensor> inputs, BackwardFn backward) {
  Entry entry;
  entry.tag = tag;
  entry.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tracked() && in.tape() != this) {
      throw Error(ErrorCode::InvalidArgument, std::string(tag) + ": input recorded on a different tape");
    }
    entry.inputs.push_back(in.tracked() ? in.node() : kUntracked);
  }
  output.tape_ = this;
  output.node_ = new_node(output.shape_);
  entry.output = output.node_;
  entry.backward = std::move(backward);
  entries_.push_back(std::move(entry));
  return output;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (!loss.tracked() || loss.tape() != this) {
    throw Error(ErrorCode::InvalidArgument, "backward: loss is detached from this tape");
  }
  if (loss.size() != 1) {
    throw Error(ErrorCode::Shape, "backward: loss must be scalar, got " + shape_string(loss.shape()));
  }
  Gradients result;
  result.tape_ = this;
  result.shapes_ = shapes_;
  result.params_ = params_;
  auto& grads = result.grads_;
  grads.resize(shapes_.size());
  grads[loss.node()].assign(1, 1.0);

  std::vector<std::vector<double>*> slots;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& g_out = grads[it->output];
    if (g_out.empty()) continue;
    slots.assign(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const auto id = it->inputs[i];
      if (id == kUntracked) continue;
      if (grads[id].empty()) grads[id].assign(shape_size(shapes_[id]), 0.0);
      slots[i] = &grads[id];
    }
    it->backward(g_out, slots);
  }
  return result;
}

Tensor Gradients::of(const Tensor& tracked) const {
  if (!tracked.tracked() || tracked.tape() != tape_) {
    throw Error(ErrorCode::InvalidArgument, "gradient requested for a tensor not on this tape");
  }
  const auto id = tracked.node();
  const auto& g = grads_[id];
  if (g.empty()) return Tensor::zeros(shapes_[id]);
  return Tensor(shapes_[id], g);
}

Tensor Gradients::of(const Parameter& param) const {
  if (param.value.tape() == tape_ && tape_ != nullptr) return of(param.value);
  auto it = params_.find(&param);
  if (it == params_.end() || grads_[it->second].empty()) return Tensor::zeros(param.value.shape());
  return Tensor(shapes_[it->second], grads_[it->second]);
}

std::span<const double> Gradients::raw(const Parameter& param) const {
  auto it = params_.find(&param);
  if (it == params_.end()) return {};
  return grads_[it->second];
}

// ---------------------------------------------------------------------------
// Ops

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.rank() < 2 || b.rank() < 2) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-1);
  if (b.dim(-2) != k) shape_error("matmul", a.shape(), b.shape());

  const Shape a_lead(a.shape().begin(), a.shape().end() - 2);
  const Shape b_lead(b.shape().begin(), b.shape().end() - 2);
  enum class Mode { SharedRight, SharedLeft, Batched } mode;
  Shape out_shape;
  if (b.rank() == 2) {
    mode = Mode::SharedRight;
    out_shape = a_lead;
  } else if (a.rank() == 2) {
    mode = Mode::SharedLeft;
    out_shape = b_lead;
  } else if (a_lead == b_lead) {
    mode = Mode::Batched;
    out_shape = a_lead;
  } else {
    shape_error("matmul", a.shape(), b.shape());
  }
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(shape_size(out_shape));
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  switch (mode) {
    case Mode::SharedRight: {
      const std::size_t rows = a.size() / k;
      product(MutMap(out.data(), rows, n), ConstMap(ad, rows, k), ConstMap(bd, k, n), false);
      break;
    }
    case Mode::SharedLeft: {
      const std::size_t batches = b.size() / (k * n);
      ConstMap am(ad, m, k);
      for (std::size_t i = 0; i < batches; ++i) {
        product(MutMap(out.data() + i * m * n, m, n), am, ConstMap(bd + i * k * n, k, n), false);
      }
      break;
    }
    case Mode::Batched: {
      const std::size_t batches = a.size() / (m * k);
      for (std::size_t i = 0; i < batches; ++i) {
        product(MutMap(out.data() + i * m * n, m, n), ConstMap(ad + i * m * k, m, k),
                ConstMap(bd + i * k * n, k, n), false);
      }
      break;
    }
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (!a.tracked() && !b.tracked()) return result;
  return finish("matmul", std::move(result), {a, b},
                [a = a.detach(), b = b.detach(), mode, m, k, n](std::span<const double> g,
                                                                std::span<std::vector<double>* const> gin) {
                  const double* ad = a.data().data();
                  const double* bd = b.data().data();
                  switch (mode) {
                    case Mode::SharedRight: {
                      const std::size_t rows = a.size() / k;
                      ConstMap gm(g.data(), rows, n);
                      if (gin[0]) product(MutMap(gin[0]->data(), rows, k), gm, ConstMap(bd, k, n).transpose(), true);
                      if (gin[1]) product(MutMap(gin[1]->data(), k, n), ConstMap(ad, rows, k).transpose(), gm, true);
                      break;
                    }
                    case Mode::SharedLeft: {
                      const std::size_t batches = b.size() / (k * n);
                      ConstMap am(ad, m, k);
                      for (std::size_t i = 0; i < batches; ++i) {
                        ConstMap gm(g.data() + i * m * n, m, n);
                        ConstMap bm(bd + i * k * n, k, n);
                        if (gin[0]) product(MutMap(gin[0]->data(), m, k), gm, bm.transpose(), true);
                        if (gin[1]) product(MutMap(gin[1]->data() + i * k * n, k, n), am.transpose(), gm, true);
                      }
                      break;
                    }
                    case Mode::Batched: {
                      const std::size_t batches = a.size() / (m * k);
                      for (std::size_t i = 0; i < batches; ++i) {
                        ConstMap gm(g.data() + i * m * n, m, n);
                        if (gin[0]) {
                          product(MutMap(gin[0]->data() + i * m * k, m, k), gm,
                                  ConstMap(bd + i * k * n, k, n).transpose(), true);
                        }
                        if (gin[1]) {
                          product(MutMap(gin[1]->data() + i * k * n, k, n),
                                  ConstMap(ad + i * m * k, m, k).transpose(), gm, true);
                        }
                      }
                      break;
                    }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, BinaryKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, BinaryKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, BinaryKind::Mul); }

Tensor scale(const Tensor& x, double factor) {
  require_defined("scale", x);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  Tensor result(x.shape(), std::move(out));
  if (!x.tracked()) return result;
  return finish("scale", std::move(result), {x},
                [factor](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto& gx = *gin[0];
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat: no operands");
  for (const auto& p : parts) require_defined("concat", p);
  const Shape& first = parts[0].shape();
  const std::size_t ax = resolve_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error("concat", first, p.shape());
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != ax && p.shape()[i] != first[i]) shape_error("concat", first, p.shape());
    }
    lengths.push_back(p.shape()[ax]);
    out_shape[ax] += p.shape()[ax];
  }
  const AxisSplit s = split_at(out_shape, ax);
  std::vector<double> out(shape_size(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const std::size_t block = lengths[pi] * s.inner;
    auto src = parts[pi].data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(src.data() + o * block, block, out.data() + o * s.length * s.inner + offset);
    }
    offset += block;
  }
  Tensor result(std::move(out_shape), std::move(out));
  return finish("concat", std::move(result), parts,
                [s, lengths](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  std::size_t offset = 0;
                  for (std::size_t pi = 0; pi < gin.size(); ++pi) {
                    const std::size_t block = lengths[pi] * s.inner;
                    if (gin[pi]) {
                      auto& gp = *gin[pi];
                      for (std::size_t o = 0; o < s.outer; ++o) {
                        const double* src = g.data() + o * s.length * s.inner + offset;
                        double* dst = gp.data() + o * block;
                        for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                      }
                    }
                    offset += block;
                  }
                });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  require_defined("slice", x);
  const std::size_t ax = resolve_axis("slice", x.shape(), axis);
  if (begin >= end || end > x.shape()[ax]) {
    shape_error("slice", x.shape(),
                "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid on axis " +
                    std::to_string(ax));
  }
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<double> out(shape_size(out_shape));
  auto src = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.data() + (o * s.length + begin) * s.inner, block, out.data() + o * block);
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (!x.tracked()) return result;
  return finish("slice", std::move(result), {x},
                [s, begin, block](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto& gx = *gin[0];
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    double* dst = gx.data() + (o * s.length + begin) * s.inner;
                    const double* src = g.data() + o * block;
                    for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                  }
                });
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
  require_defined("transpose", x);
  std::size_t a = resolve_axis("transpose", x.shape(), axis_a);
  std::size_t b = resolve_axis("transpose", x.shape(), axis_b);
  if (a == b) return x;
  if (a > b) std::swap(a, b);
  Shape out_shape = x.shape();
  std::swap(out_shape[a], out_shape[b]);
  std::vector<double> out(x.size());
  swap_axes(x.data().data(), out.data(), x.shape(), a, b, false);
  Tensor result(out_shape, std::move(out));
  if (!x.tracked()) return result;
  return finish("transpose", std::move(result), {x},
                [out_shape, a, b](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  swap_axes(g.data(), gin[0]->data(), out_shape, a, b, true);
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (!x.tracked()) return result;
  return finish("reshape", std::move(result), {x},
                [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto& gx = *gin[0];
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor sum(const Tensor& x, int axis, bool keep_dim) {
  require_defined("sum", x);
  const std::size_t ax = resolve_axis("sum", x.shape(), axis);
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keep_dim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.length; ++l) {
      const double* src = xd.data() + (o * s.length + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t q = 0; q < s.inner; ++q) dst[q] += src[q];
    }
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (!x.tracked()) return result;
  return finish("sum", std::move(result), {x},
                [s](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto& gx = *gin[0];
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t l = 0; l < s.length; ++l) {
                      double* dst = gx.data() + (o * s.length + l) * s.inner;
                      const double* src = g.data() + o * s.inner;
                      for (std::size_t q = 0; q < s.inner; ++q) dst[q] += src[q];
                    }
                  }
                });
}

Tensor mean(const Tensor& x, int axis, bool keep_dim) {
  const std::size_t ax = resolve_axis("mean", x.shape(), axis);
  return scale(sum(x, axis, keep_dim), 1.0 / static_cast<double>(x.shape()[ax]));
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  if (!x.tracked()) return result;
  return finish("sum_all", std::move(result), {x},
                [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  for (auto& v : *gin[0]) v += g[0];
                });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined("softmax", x);
  const std::size_t ax = resolve_axis("softmax", x.shape(), axis);
  const AxisSplit s = split_at(x.shape(), ax);
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t q = 0; q < s.inner; ++q) {
      const std::size_t base = o * s.length * s.inner + q;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.length; ++l) peak = std::max(peak, xd[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double e = std::exp(xd[base + l * s.inner] - peak);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.length; ++l) out[base + l * s.inner] /= total;
    }
  }
  Tensor result(x.shape(), std::move(out));
  if (!x.tracked()) return result;
  return finish("softmax", std::move(result), {x},
                [s, y = result.detach()](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto yd = y.data();
                  auto& gx = *gin[0];
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t q = 0; q < s.inner; ++q) {
                      const std::size_t base = o * s.length * s.inner + q;
                      double dot = 0.0;
                      for (std::size_t l = 0; l < s.length; ++l) {
                        dot += g[base + l * s.inner] * yd[base + l * s.inner];
                      }
                      for (std::size_t l = 0; l < s.length; ++l) {
                        const std::size_t i = base + l * s.inner;
                        gx[i] += yd[i] * (g[i] - dot);
                      }
                    }
                  }
                });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  require_defined("leaky_relu", x);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0.0 ? v : v * negative_slope;
  Tensor result(x.shape(), std::move(out));
  if (!x.tracked()) return result;
  return finish("leaky_relu", std::move(result), {x},
                [x = x.detach(), negative_slope](std::span<const double> g,
                                                 std::span<std::vector<double>* const> gin) {
                  auto xd = x.data();
                  auto& gx = *gin[0];
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (xd[i] > 0.0 ? 1.0 : negative_slope);
                });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  require_defined("gelu", x);
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  Tensor result(x.shape(), std::move(out));
  if (!x.tracked()) return result;
  return finish("gelu", std::move(result), {x},
                [x = x.detach()](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto xd = x.data();
                  auto& gx = *gin[0];
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double v = xd[i];
                    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
                    const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                    gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis, double eps) {
  require_defined("layer_norm", x);
  const std::size_t ax = resolve_axis("layer_norm", x.shape(), axis);
  const AxisSplit s = split_at(x.shape(), ax);
  const Shape param_shape{s.length};
  if (gain.defined() && gain.shape() != param_shape) shape_error("layer_norm", x.shape(), gain.shape());
  if (bias.defined() && bias.shape() != param_shape) shape_error("layer_norm", x.shape(), bias.shape());

  std::vector<double> xhat(x.size());
  std::vector<double> rstd(s.outer * s.inner);
  std::vector<double> out(x.size());
  auto xd = x.data();
  const double inv_len = 1.0 / static_cast<double>(s.length);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t q = 0; q < s.inner; ++q) {
      const std::size_t base = o * s.length * s.inner + q;
      double mu = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) mu += xd[base + l * s.inner];
      mu *= inv_len;
      double var = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double d = xd[base + l * s.inner] - mu;
        var += d * d;
      }
      var *= inv_len;
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[o * s.inner + q] = r;
      for (std::size_t l = 0; l < s.length; ++l) {
        const std::size_t i = base + l * s.inner;
        xhat[i] = (xd[i] - mu) * r;
        double y = xhat[i];
        if (gain.defined()) y *= gain[l];
        if (bias.defined()) y += bias[l];
        out[i] = y;
      }
    }
  }
  Tensor result(x.shape(), std::move(out));
  if (!x.tracked() && !gain.tracked() && !bias.tracked()) return result;

  std::vector<Tensor> inputs{x};
  if (gain.defined()) inputs.push_back(gain);
  if (bias.defined()) inputs.push_back(bias);
  const bool has_gain = gain.defined();
  const bool has_bias = bias.defined();
  return finish("layer_norm", std::move(result), std::span<const Tensor>(inputs),
                [s, inv_len, has_gain, has_bias, gain = gain.detach(), xhat = std::move(xhat),
                 rstd = std::move(rstd)](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  std::vector<double>* gx = gin[0];
                  std::vector<double>* gg = has_gain ? gin[1] : nullptr;
                  std::vector<double>* gb = has_bias ? gin[has_gain ? 2 : 1] : nullptr;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t q = 0; q < s.inner; ++q) {
                      const std::size_t base = o * s.length * s.inner + q;
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t l = 0; l < s.length; ++l) {
                        const std::size_t i = base + l * s.inner;
                        if (gg) (*gg)[l] += g[i] * xhat[i];
                        if (gb) (*gb)[l] += g[i];
                        const double d = has_gain ? g[i] * gain[l] : g[i];
                        mean_d += d;
                        mean_dx += d * xhat[i];
                      }
                      if (!gx) continue;
                      mean_d *= inv_len;
                      mean_dx *= inv_len;
                      const double r = rstd[o * s.inner + q];
                      for (std::size_t l = 0; l < s.length; ++l) {
                        const std::size_t i = base + l * s.inner;
                        const double d = has_gain ? g[i] * gain[l] : g[i];
                        (*gx)[i] += r * (d - mean_d - xhat[i] * mean_dx);
                      }
                    }
                  }
                });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_defined("embedding_lookup", table);
  if (table.rank() != 2) shape_error("embedding_lookup", table.shape(), "table must be rank 2");
  if (indices.empty()) throw Error(ErrorCode::InvalidArgument, "embedding_lookup: no indices");
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<double> out(indices.size() * width);
  auto td = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw Error(ErrorCode::Range, "embedding_lookup: index " + std::to_string(indices[i]) +
                                        " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(td.data() + indices[i] * width, width, out.data() + i * width);
  }
  Tensor result({indices.size(), width}, std::move(out));
  if (!table.tracked()) return result;
  return finish("embedding_lookup", std::move(result), {table},
                [idx = std::vector<std::size_t>(indices.begin(), indices.end()), width](
                    std::span<const double> g, std::span<std::vector<double>* const> gin) {
                  auto& gt = *gin[0];
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    for (std::size_t c = 0; c < width; ++c) gt[idx[i] * width + c] += g[i * width + c];
                  }
                });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  require_defined("dropout", x);
  if (rate < 0.0 || rate >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  const double scale_kept = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = keep(rng) ? scale_kept : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Gradient check

double finite_diff_check(const std::function<Tensor(const Tensor&, Tape*)>& f, const Tensor& x, double h) {
  if (h <= 0.0) throw Error(ErrorCode::InvalidArgument, "finite_diff_check: step must be positive");
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor loss = f(xt, &tape);
    if (!loss.tracked()) {
      // Output does not depend on x at all.
      analytic.assign(x.size(), 0.0);
    } else {
      Gradients grads = tape.backward(loss);
      const Tensor g = grads.of(xt);
      analytic.assign(g.data().begin(), g.data().end());
    }
  }
  double worst = 0.0;
  std::vector<double> probe(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = f(Tensor(x.shape(), probe), nullptr).item();
    probe[i] = original - h;
    const double down = f(Tensor(x.shape(), probe), nullptr).item();
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Optimizer

void AdamState::step(std::span<Parameter* const> params, std::span<const std::vector<double>> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::Shape, "adam_step: " + std::to_string(params.size()) + " parameters but " +
                                      std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->value.size(), 0.0);
      v_[i].assign(params[i]->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorCode::Shape, "adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->value.size() || m_[i].size() != grads[i].size()) {
      throw Error(ErrorCode::Shape, "adam_step: gradient for '" + params[i]->name + "' has " +
                                        std::to_string(grads[i].size()) + " elements, parameter has " +
                                        std::to_string(params[i]->value.size()));
    }
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

double clip_global_norm(std::span<std::vector<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      for (auto& v : g) v *= factor;
    }
  }
  return norm;
}

}  // namespace gatllm
