#include "jiang/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "jiang/error.hpp"

namespace jiang {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

thread_local bool t_grad_enabled = true;

template <typename T>
void check_finite(const char* op, const std::vector<T>& data) {
  for (const T v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

template <typename T>
std::shared_ptr<TensorImpl<T>> new_impl(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

template <typename T>
const TensorImpl<T>& deref(const Tensor<T>& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
  return *t.impl();
}

bool trailing_broadcastable(const Shape& a, const Shape& b) {
  if (shape_numel(b) == 1) return true;
  if (b.size() > a.size()) return false;
  return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

// C[M×N] += A[M×K]·B[K×N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M×K] += A[M×N]·B[K×N]ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[K×N] += A[M×K]ᵀ·B[M×N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
std::span<T> TensorImpl<T>::grad_slot() {
  if (grad.empty()) grad.assign(data.size(), T{0});
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(new_impl<T>(std::move(shape), std::move(data), requires_grad)) {}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{1}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, T stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return deref(*this, "shape").shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) throw ShapeError("dim: axis " + std::to_string(i) + " out of range for " + shape_to_string(s));
  return s[i];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return deref(*this, "numel").data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return deref(*this, "data").data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  deref(*this, "mutable_data");
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& impl = deref(*this, "item");
  if (impl.data.size() != 1) throw ContractError("item: tensor " + shape_to_string(impl.shape) + " is not a scalar");
  return impl.data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t flat_index) const {
  return deref(*this, "at").data.at(flat_index);
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return deref(*this, "requires_grad").requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  deref(*this, "set_requires_grad");
  impl_->requires_grad = value;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !deref(*this, "has_grad").grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return deref(*this, "grad").grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  deref(*this, "mutable_grad");
  return impl_->grad_slot();
}

template <typename T>
void Tensor<T>::zero_grad() {
  deref(*this, "zero_grad");
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return !deref(*this, "is_leaf").grad_fn;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& impl = deref(*this, "detach");
  return Tensor(impl.shape, impl.data, false);
}

template <typename T>
std::uint64_t Tensor<T>::id() const {
  return deref(*this, "id").seq;
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<std::reference_wrapper<const Tensor<T>>> inputs,
                      BackwardFn<T> backward) {
  if (finite_checks_enabled()) check_finite(op, data);
  bool needs_grad = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.get().requires_grad();
  }
  auto impl = new_impl<T>(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    auto fn = std::make_shared<GradFn<T>>();
    fn->op = op;
    for (const auto& in : inputs) fn->inputs.push_back(in.get().impl());
    fn->apply = std::move(backward);
    impl->grad_fn = std::move(fn);
  }
  return Tensor<T>(std::move(impl));
}

// ---------------------------------------------------------------------------
// Graph control

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

namespace {

template <typename T>
std::vector<TensorImpl<T>*> ancestors(TensorImpl<T>* root) {
  std::vector<TensorImpl<T>*> out;
  std::unordered_set<TensorImpl<T>*> seen{root};
  std::vector<TensorImpl<T>*> stack{root};
  while (!stack.empty()) {
    TensorImpl<T>* node = stack.back();
    stack.pop_back();
    out.push_back(node);
    if (!node->grad_fn) continue;
    for (const auto& in : node->grad_fn->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->seq < b->seq; });
  return out;
}

}  // namespace

template <typename T>
std::vector<GraphNode> compute_graph(const Tensor<T>& root) {
  std::vector<GraphNode> out;
  deref(root, "compute_graph");
  for (const auto* node : ancestors(root.impl().get())) {
    GraphNode g{node->seq, node->grad_fn ? node->grad_fn->op : "leaf", {}};
    if (node->grad_fn) {
      for (const auto& in : node->grad_fn->inputs) g.inputs.push_back(in->seq);
    }
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  const auto& root = deref(loss, "backward");
  if (root.data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(root.shape));
  }
  if (root.graph_consumed) throw ContractError("backward: graph already consumed");
  if (!root.requires_grad) throw ContractError("backward: loss does not require grad");

  const bool had_graph = static_cast<bool>(root.grad_fn);
  auto order = ancestors(loss.impl().get());
  loss.impl()->grad_slot()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* node = *it;
    if (!node->grad_fn || node->grad.empty()) continue;
    node->grad_fn->apply(*node, node->grad_fn->inputs);
  }
  for (TensorImpl<T>* node : order) {
    if (node->grad_fn) {
      node->grad_fn.reset();
      if (node != loss.impl().get()) std::vector<T>().swap(node->grad);
    }
  }
  if (had_graph) loss.impl()->graph_consumed = true;
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const auto& ai = deref(a, "elementwise");
  if (op == ElementwiseOp::silu || op == ElementwiseOp::exp) return elementwise(op, a, T{0});
  if (op == ElementwiseOp::scale) {
    if (deref(b, "elementwise").data.size() != 1) throw ShapeError("scale: factor must be a single value");
    // Treat scale-by-tensor as a broadcast multiply so the factor gets a gradient.
    op = ElementwiseOp::mul;
  }
  const auto& bi = deref(b, "elementwise");
  if (!trailing_broadcastable(ai.shape, bi.shape)) {
    throw ShapeError("elementwise: cannot broadcast " + shape_to_string(bi.shape) + " onto " +
                     shape_to_string(ai.shape));
  }
  const std::size_t n = ai.data.size();
  const std::size_t nb = bi.data.size();
  std::vector<T> out(n);
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] + bi.data[i % nb];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] - bi.data[i % nb];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] * bi.data[i % nb];
      break;
    case ElementwiseOp::div:
      for (std::size_t j = 0; j < nb; ++j) {
        if (std::abs(static_cast<double>(bi.data[j])) < 1e-30) {
          throw NumericError("div: divisor magnitude below 1e-30 at index " + std::to_string(j));
        }
      }
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] / bi.data[i % nb];
      break;
    default:
      break;
  }
  const char* name = op == ElementwiseOp::add   ? "add"
                     : op == ElementwiseOp::sub ? "sub"
                     : op == ElementwiseOp::mul ? "mul"
                                                : "div";
  return make_result<T>(name, ai.shape, std::move(out), {a, b},
                        [op, n, nb](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto& x = *in[0];
                          auto& y = *in[1];
                          const T* g = o.grad.data();
                          if (x.requires_grad) {
                            auto gx = x.grad_slot();
                            for (std::size_t i = 0; i < n; ++i) {
                              switch (op) {
                                case ElementwiseOp::add:
                                case ElementwiseOp::sub: gx[i] += g[i]; break;
                                case ElementwiseOp::mul: gx[i] += g[i] * y.data[i % nb]; break;
                                default: gx[i] += g[i] / y.data[i % nb]; break;
                              }
                            }
                          }
                          if (y.requires_grad) {
                            auto gy = y.grad_slot();
                            for (std::size_t i = 0; i < n; ++i) {
                              const std::size_t j = i % nb;
                              switch (op) {
                                case ElementwiseOp::add: gy[j] += g[i]; break;
                                case ElementwiseOp::sub: gy[j] -= g[i]; break;
                                case ElementwiseOp::mul: gy[j] += g[i] * x.data[i]; break;
                                default: gy[j] -= g[i] * x.data[i] / (y.data[j] * y.data[j]); break;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b) {
  const auto& ai = deref(a, "elementwise");
  const std::size_t n = ai.data.size();
  std::vector<T> out(n);
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] + b;
      return make_result<T>("add_scalar", ai.shape, std::move(out), {a},
                            [n](const TensorImpl<T>& o, const InputList<T>& in) {
                              auto gx = in[0]->grad_slot();
                              for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[i];
                            });
    case ElementwiseOp::sub:
      return elementwise(ElementwiseOp::add, a, -b);
    case ElementwiseOp::div:
      if (std::abs(static_cast<double>(b)) < 1e-30) throw NumericError("div: divisor magnitude below 1e-30");
      return elementwise(ElementwiseOp::scale, a, T{1} / b);
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] * b;
      return make_result<T>("scale", ai.shape, std::move(out), {a},
                            [n, b](const TensorImpl<T>& o, const InputList<T>& in) {
                              auto gx = in[0]->grad_slot();
                              for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[i] * b;
                            });
    case ElementwiseOp::silu:
      for (std::size_t i = 0; i < n; ++i) out[i] = ai.data[i] * sigmoid(ai.data[i]);
      return make_result<T>("silu", ai.shape, std::move(out), {a},
                            [n](const TensorImpl<T>& o, const InputList<T>& in) {
                              auto& x = *in[0];
                              auto gx = x.grad_slot();
                              for (std::size_t i = 0; i < n; ++i) {
                                const T s = sigmoid(x.data[i]);
                                gx[i] += o.grad[i] * s * (T{1} + x.data[i] * (T{1} - s));
                              }
                            });
    case ElementwiseOp::exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(ai.data[i]);
      return make_result<T>("exp", ai.shape, std::move(out), {a},
                            [n](const TensorImpl<T>& o, const InputList<T>& in) {
                              auto gx = in[0]->grad_slot();
                              for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[i] * o.data[i];
                            });
  }
  throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Linear algebra and reshaping

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& ai = deref(a, "matmul");
  const auto& bi = deref(b, "matmul");
  const auto mismatch = [&] {
    return ShapeError("matmul: shape mismatch " + shape_to_string(ai.shape) + " x " + shape_to_string(bi.shape));
  };
  if (ai.shape.size() != bi.shape.size() || (ai.shape.size() != 2 && ai.shape.size() != 3)) throw mismatch();
  const bool batched = ai.shape.size() == 3;
  const std::size_t batch = batched ? ai.shape[0] : 1;
  if (batched && bi.shape[0] != batch) throw mismatch();
  const std::size_t m = ai.shape[batched ? 1 : 0];
  const std::size_t k = ai.shape[batched ? 2 : 1];
  const std::size_t kb = bi.shape[batched ? 1 : 0];
  const std::size_t n = bi.shape[batched ? 2 : 1];
  if (k != kb) throw mismatch();

  std::vector<T> out(batch * m * n, T{0});
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(m, k, n, ai.data.data() + s * m * k, bi.data.data() + s * k * n, out.data() + s * m * n);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return make_result<T>("matmul", std::move(shape), std::move(out), {a, b},
                        [batch, m, k, n](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto& x = *in[0];
                          auto& y = *in[1];
                          for (std::size_t s = 0; s < batch; ++s) {
                            const T* g = o.grad.data() + s * m * n;
                            if (x.requires_grad) {
                              gemm_nt(m, n, k, g, y.data.data() + s * k * n, x.grad_slot().data() + s * m * k);
                            }
                            if (y.requires_grad) {
                              gemm_tn(m, k, n, x.data.data() + s * m * k, g, y.grad_slot().data() + s * k * n);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const auto& ai = deref(a, "transpose");
  const std::size_t r = ai.shape.size();
  if (r != 2 && r != 3) throw ShapeError("transpose: expected rank 2 or 3, got " + shape_to_string(ai.shape));
  const std::size_t batch = r == 3 ? ai.shape[0] : 1;
  const std::size_t rows = ai.shape[r - 2];
  const std::size_t cols = ai.shape[r - 1];
  std::vector<T> out(ai.data.size());
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t off = s * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[off + j * rows + i] = ai.data[off + i * cols + j];
    }
  }
  Shape shape = ai.shape;
  std::swap(shape[r - 2], shape[r - 1]);
  return make_result<T>("transpose", std::move(shape), std::move(out), {a},
                        [batch, rows, cols](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t s = 0; s < batch; ++s) {
                            const std::size_t off = s * rows * cols;
                            for (std::size_t i = 0; i < rows; ++i) {
                              for (std::size_t j = 0; j < cols; ++j) {
                                gx[off + i * cols + j] += o.grad[off + j * rows + i];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  const auto& ai = deref(a, "reshape");
  if (shape_numel(shape) != ai.data.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(ai.shape) + " as " + shape_to_string(shape));
  }
  return make_result<T>("reshape", std::move(shape), ai.data, {a},
                        [](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto& ai = deref(a, "sum");
  T total{0};
  for (const T v : ai.data) total += v;
  return make_result<T>("sum", Shape{}, {total}, {a}, [](const TensorImpl<T>& o, const InputList<T>& in) {
    auto gx = in[0]->grad_slot();
    for (auto& g : gx) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const auto n = static_cast<T>(deref(a, "mean").data.size());
  return scale(sum(a), T{1} / n);
}

// ---------------------------------------------------------------------------
// Softmax family

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto& xi = deref(x, "softmax");
  if (axis >= xi.shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_to_string(xi.shape));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= xi.shape[d];
  for (std::size_t d = axis + 1; d < xi.shape.size(); ++d) inner *= xi.shape[d];
  const std::size_t len = xi.shape[axis];
  std::vector<T> out(xi.data.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xi.data[base + j * inner]);
      T denom{0};
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xi.data[base + j * inner] - mx);
        out[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= denom;
    }
  }
  return make_result<T>("softmax", xi.shape, std::move(out), {x},
                        [outer, inner, len](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t a = 0; a < outer; ++a) {
                            for (std::size_t b = 0; b < inner; ++b) {
                              const std::size_t base = a * len * inner + b;
                              T dot{0};
                              for (std::size_t j = 0; j < len; ++j) {
                                dot += o.grad[base + j * inner] * o.data[base + j * inner];
                              }
                              for (std::size_t j = 0; j < len; ++j) {
                                const std::size_t idx = base + j * inner;
                                gx[idx] += o.data[idx] * (o.grad[idx] - dot);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> causal_softmax(const Tensor<T>& scores) {
  const auto& si = deref(scores, "causal_softmax");
  const std::size_t r = si.shape.size();
  if (r < 2 || si.shape[r - 1] != si.shape[r - 2]) {
    throw ShapeError("causal_softmax: expected [..xTxT], got " + shape_to_string(si.shape));
  }
  const std::size_t t = si.shape[r - 1];
  const std::size_t mats = si.data.size() / (t * t);
  std::vector<T> out(si.data.size(), T{0});
  for (std::size_t s = 0; s < mats; ++s) {
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t row = s * t * t + i * t;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, si.data[row + j]);
      T denom{0};
      for (std::size_t j = 0; j <= i; ++j) {
        out[row + j] = std::exp(si.data[row + j] - mx);
        denom += out[row + j];
      }
      for (std::size_t j = 0; j <= i; ++j) out[row + j] /= denom;
    }
  }
  return make_result<T>("causal_softmax", si.shape, std::move(out), {scores},
                        [mats, t](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t s = 0; s < mats; ++s) {
                            for (std::size_t i = 0; i < t; ++i) {
                              const std::size_t row = s * t * t + i * t;
                              T dot{0};
                              for (std::size_t j = 0; j <= i; ++j) dot += o.grad[row + j] * o.data[row + j];
                              for (std::size_t j = 0; j <= i; ++j) {
                                gx[row + j] += o.data[row + j] * (o.grad[row + j] - dot);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::int32_t ignore_index) {
  const auto& li = deref(logits, "cross_entropy");
  if (li.shape.size() != 2 || li.shape[0] != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(li.shape) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = li.shape[0];
  const std::size_t vocab = li.shape[1];
  std::size_t valid = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::int32_t t = targets[i];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw ContractError("cross_entropy: target id " + std::to_string(t) + " outside [0," +
                          std::to_string(vocab) + ")");
    }
    ++valid;
  }
  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(rows * vocab, T{0});
  T total{0};
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] == ignore_index) continue;
    const T* row = li.data.data() + i * vocab;
    const T mx = *std::max_element(row, row + vocab);
    T denom{0};
    for (std::size_t j = 0; j < vocab; ++j) {
      (*probs)[i * vocab + j] = std::exp(row[j] - mx);
      denom += (*probs)[i * vocab + j];
    }
    for (std::size_t j = 0; j < vocab; ++j) (*probs)[i * vocab + j] /= denom;
    total += std::log(denom) + mx - row[targets[i]];
  }
  const T inv = valid ? T{1} / static_cast<T>(valid) : T{0};
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", Shape{}, {total * inv}, {logits},
                        [probs, tgt = std::move(tgt), ignore_index, vocab, inv](const TensorImpl<T>& o,
                                                                                const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          const T g = o.grad[0] * inv;
                          for (std::size_t i = 0; i < tgt.size(); ++i) {
                            if (tgt[i] == ignore_index) continue;
                            for (std::size_t j = 0; j < vocab; ++j) gx[i * vocab + j] += g * (*probs)[i * vocab + j];
                            gx[i * vocab + static_cast<std::size_t>(tgt[i])] -= g;
                          }
                        });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  const auto& ti = deref(table, "embedding");
  if (ti.shape.size() != 2) throw ShapeError("embedding: table must be [V x d], got " + shape_to_string(ti.shape));
  const std::size_t vocab = ti.shape[0];
  const std::size_t d = ti.shape[1];
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ContractError("embedding: token id " + std::to_string(ids[i]) + " outside [0," + std::to_string(vocab) +
                          ")");
    }
    std::copy_n(ti.data.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return make_result<T>("embedding", Shape{ids.size(), d}, std::move(out), {table},
                        [idv = std::move(idv), d](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t i = 0; i < idv.size(); ++i) {
                            T* dst = gx.data() + static_cast<std::size_t>(idv[i]) * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += o.grad[i * d + j];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Gradient checking

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    if (!p.requires_grad() || !p.is_leaf()) throw ContractError("grad_check: params must be leaves requiring grad");
    p.zero_grad();
  }
  {
    NoGradGuard guard;
    const T first = f().item();
    const T second = f().item();
    if (!(first == second)) throw ContractError("grad_check: f is not deterministic");
  }
  const Tensor<T> y = f();
  if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  backward(y);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);
  }
  if (coords.size() > options.max_coords) {
    std::mt19937_64 rng(options.seed);
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
      std::swap(coords[i], coords[pick(rng)]);
    }
    coords.resize(options.max_coords);
  }

  GradCheckResult result;
  const T h = static_cast<T>(options.step);
  NoGradGuard guard;
  for (const auto& [p, i] : coords) {
    auto values = params[p].mutable_data();
    const T original = values[i];
    values[i] = original + h;
    const double plus = static_cast<double>(f().item());
    values[i] = original - h;
    const double minus = static_cast<double>(f().item());
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
    const double analytic = params[p].has_grad() ? static_cast<double>(params[p].grad()[i]) : 0.0;
    const double denom = std::max({std::abs(numeric), std::abs(analytic), options.magnitude_floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - analytic) / denom);
    ++result.coords_checked;
  }
  return result;
}

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                           const GradCheckOptions& options) {
  return grad_check<T>(std::function<Tensor<T>()>([&f, &x] { return f(x); }), {x}, options);
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define JIANG_INSTANTIATE_TENSOR(T)                                                                         \
  template struct TensorImpl<T>;                                                                            \
  template class Tensor<T>;                                                                                 \
  template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>,                                     \
                                    std::initializer_list<std::reference_wrapper<const Tensor<T>>>,         \
                                    BackwardFn<T>);                                                         \
  template std::vector<GraphNode> compute_graph<T>(const Tensor<T>&);                                       \
  template void backward<T>(const Tensor<T>&);                                                              \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> elementwise<T>(ElementwiseOp, const Tensor<T>&, T);                                    \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                                        \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                   \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                              \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                             \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> causal_softmax<T>(const Tensor<T>&);                                                   \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const std::int32_t>, std::int32_t);       \
  template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const std::int32_t>);                         \
  template GradCheckResult grad_check<T>(const std::function<Tensor<T>()>&, std::vector<Tensor<T>>,         \
                                         const GradCheckOptions&);                                          \
  template GradCheckResult grad_check<T>(const std::function<Tensor<T>(const Tensor<T>&)>&, Tensor<T>,      \
                                         const GradCheckOptions&);

JIANG_INSTANTIATE_TENSOR(float)
JIANG_INSTANTIATE_TENSOR(double)

#undef JIANG_INSTANTIATE_TENSOR

}  // namespace jiang
