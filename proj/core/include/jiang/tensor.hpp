#pragma once

// Dense row-major tensors with tape-style reverse-mode autodiff.
//
// Every operation that consumes a tensor with requires_grad() records a
// GradFn on its output. Creation order is a valid topological order, so
// backward() collects the ancestors of the loss, sorts them by creation
// sequence and runs each local gradient rule exactly once. The graph lives
// only as long as the tensors holding it; it is rebuilt on every forward.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace jiang {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
struct TensorImpl;

template <typename T>
using InputList = std::vector<std::shared_ptr<TensorImpl<T>>>;

// Local gradient rule: reads out.grad and accumulates into inputs' grads.
template <typename T>
using BackwardFn = std::function<void(const TensorImpl<T>& out, const InputList<T>& inputs)>;

template <typename T>
struct GradFn {
  const char* op = "";
  InputList<T> inputs;
  BackwardFn<T> apply;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::shared_ptr<GradFn<T>> grad_fn;
  bool graph_consumed = false;

  // Grad buffer, zero-initialised on first use.
  std::span<T> grad_slot();
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor randn(Shape shape, T stddev, std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // In-place access for initialisation and optimiser updates. Tensors that
  // are shared across threads must not be mutated.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();
  bool is_leaf() const;

  // Deep copy with no graph attachment.
  Tensor detach() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    const auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape(), std::move(out), false);
  }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  std::uint64_t id() const;

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl<T>> impl_;

  template <typename U>
  friend Tensor<U> make_result(const char*, Shape, std::vector<U>,
                               std::initializer_list<std::reference_wrapper<const Tensor<U>>>,
                               BackwardFn<U>);
};

// Builds an op output and, when gradients are enabled and some input
// requires them, attaches `backward` as its GradFn. Also the extension point
// for fused ops defined outside this file.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<std::reference_wrapper<const Tensor<T>>> inputs,
                      BackwardFn<T> backward);

// ---------------------------------------------------------------------------
// Graph control

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// When on, every op output is scanned for NaN/Inf and a NumericError thrown.
// Defaults to on in debug builds and off under NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

struct GraphNode {
  std::uint64_t id;
  std::string op;  // "leaf" for tensors without a GradFn
  std::vector<std::uint64_t> inputs;
};

// Ancestors of `root` (inclusive) in topological (creation) order.
template <typename T>
std::vector<GraphNode> compute_graph(const Tensor<T>& root);

// Populates grads of every requires_grad ancestor of a single-element loss.
// Leaf grads accumulate across calls until zero_grad(). The graph below the
// loss is released afterwards; a second call on the same loss throws.
template <typename T>
void backward(const Tensor<T>& loss);

// ---------------------------------------------------------------------------
// Operations

enum class ElementwiseOp { add, sub, mul, div, silu, exp, scale };

// Binary ops accept equal shapes or a `b` whose shape matches the trailing
// dimensions of `a` (including a single-element b). Unary ops (silu, exp)
// ignore `b`.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::div, a, b);
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return elementwise(ElementwiseOp::scale, a, s);
}
template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  return elementwise(ElementwiseOp::silu, a, T{0});
}
template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return elementwise(ElementwiseOp::exp, a, T{0});
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

// [m×k]·[k×n], or batched [B×m×k]·[B×k×n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Swaps the last two dimensions of a rank-2 or rank-3 tensor.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Softmax over the last axis of [..×T×T] scores where entry (i, j) with
// j > i gets exactly zero weight.
template <typename T>
Tensor<T> causal_softmax(const Tensor<T>& scores);

// Mean negative log-likelihood of `targets` under row-wise softmax of
// logits [T×V]. Positions whose target equals ignore_index are skipped.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::int32_t ignore_index = -1);

// Gathers rows of table [V×d] -> [ids.size()×d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckOptions {
  double step = 1e-5;
  // Above this many coordinates in total, a seeded random sample is checked.
  std::size_t max_coords = 4096;
  std::uint64_t seed = 0;
  // Magnitudes below this are treated as this value in the relative error
  // denominator, so gradients that are zero up to rounding do not dominate.
  double magnitude_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

// Compares backward() gradients of scalar `f` w.r.t. `params` with central
// differences. Throws ContractError if f is not deterministic.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                           const GradCheckOptions& options = {});

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                           const GradCheckOptions& options = {});

}  // namespace jiang
