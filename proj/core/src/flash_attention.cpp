#include "jiang/flash_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jiang/error.hpp"

namespace jiang::flash {

template <typename T>
SoftmaxState<T> SoftmaxState<T>::empty(std::size_t d_head) {
  return {-std::numeric_limits<T>::infinity(), T{0}, std::vector<T>(d_head, T{0})};
}

template <typename T>
SoftmaxState<T> SoftmaxState<T>::singleton(T score, std::span<const T> value) {
  return {score, T{1}, std::vector<T>(value.begin(), value.end())};
}

template <typename T>
std::vector<T> SoftmaxState<T>::output() const {
  if (is_empty()) throw ContractError("SoftmaxState::output: no keys folded in");
  std::vector<T> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = acc[i] / denom;
  return out;
}

template <typename T>
SoftmaxState<T> merge(const SoftmaxState<T>& a, const SoftmaxState<T>& b) {
  if (a.acc.size() != b.acc.size()) throw ShapeError("merge: states have different widths");
  if (b.is_empty()) return a;
  if (a.is_empty()) return b;
  const T m = std::max(a.max, b.max);
  const T sa = std::exp(a.max - m);
  const T sb = std::exp(b.max - m);
  SoftmaxState<T> out{m, a.denom * sa + b.denom * sb, std::vector<T>(a.acc.size())};
  for (std::size_t i = 0; i < out.acc.size(); ++i) out.acc[i] = a.acc[i] * sa + b.acc[i] * sb;
  return out;
}

TileConfig TileConfig::clamped_to(std::size_t seq_len) const {
  if (block_q == 0 || block_kv == 0) throw ContractError("TileConfig: block sizes must be >= 1");
  const std::size_t cap = std::max<std::size_t>(seq_len, 1);
  return {std::min(block_q, cap), std::min(block_kv, cap)};
}

template <typename T>
void tiled_attention_into(std::span<const T> q, std::span<const T> k, std::span<const T> v, std::size_t heads,
                          std::size_t seq_len, std::size_t d_head, bool causal, TileConfig tiles, std::span<T> out) {
  const std::size_t n = heads * seq_len * d_head;
  if (q.size() != n || k.size() != n || v.size() != n || out.size() != n) {
    throw ShapeError("tiled_attention: buffers do not match heads x T x d_head = " + std::to_string(n));
  }
  if (seq_len == 0) return;
  tiles = tiles.clamped_to(seq_len);
  const std::size_t bq = tiles.block_q;
  const std::size_t bkv = tiles.block_kv;
  const T scale = T{1} / std::sqrt(static_cast<T>(d_head));
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();

  std::vector<T> scores(bq * bkv);
  std::vector<T> row_max(bq);
  std::vector<T> row_denom(bq);
  std::vector<T> row_acc(bq * d_head);

  for (std::size_t h = 0; h < heads; ++h) {
    const T* qh = q.data() + h * seq_len * d_head;
    const T* kh = k.data() + h * seq_len * d_head;
    const T* vh = v.data() + h * seq_len * d_head;
    T* oh = out.data() + h * seq_len * d_head;

    for (std::size_t qs = 0; qs < seq_len; qs += bq) {
      const std::size_t rows = std::min(bq, seq_len - qs);
      std::fill_n(row_max.begin(), rows, kNegInf);
      std::fill_n(row_denom.begin(), rows, T{0});
      std::fill_n(row_acc.begin(), rows * d_head, T{0});
      const std::size_t kv_end = causal ? qs + rows : seq_len;

      for (std::size_t ks = 0; ks < kv_end; ks += bkv) {
        const std::size_t cols = std::min(bkv, kv_end - ks);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t i = qs + r;
          // Keys past the query position are never scored under the mask.
          const std::size_t live = causal ? std::min(cols, i + 1 > ks ? i + 1 - ks : 0) : cols;
          if (live == 0) continue;
          T* s = scores.data() + r * bkv;
          T block_max = kNegInf;
          for (std::size_t c = 0; c < live; ++c) {
            const T* krow = kh + (ks + c) * d_head;
            T dot{0};
            for (std::size_t d = 0; d < d_head; ++d) dot += qh[i * d_head + d] * krow[d];
            s[c] = dot * scale;
            block_max = std::max(block_max, s[c]);
          }
          // Fold this block's state into the running one (the merge rule).
          const T m_new = std::max(row_max[r], block_max);
          const T rescale = row_max[r] == kNegInf ? T{0} : std::exp(row_max[r] - m_new);
          T* acc = row_acc.data() + r * d_head;
          for (std::size_t d = 0; d < d_head; ++d) acc[d] *= rescale;
          T denom = row_denom[r] * rescale;
          for (std::size_t c = 0; c < live; ++c) {
            const T p = std::exp(s[c] - m_new);
            denom += p;
            const T* vrow = vh + (ks + c) * d_head;
            for (std::size_t d = 0; d < d_head; ++d) acc[d] += p * vrow[d];
          }
          row_denom[r] = denom;
          row_max[r] = m_new;
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        const T inv = T{1} / row_denom[r];
        for (std::size_t d = 0; d < d_head; ++d) oh[(qs + r) * d_head + d] = row_acc[r * d_head + d] * inv;
      }
    }
  }
}

template <typename T>
Tensor<T> tiled_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal,
                          TileConfig tiles) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("tiled_attention: q/k/v must share one [heads x T x d_head] shape, got " +
                     shape_to_string(q.shape()) + ", " + shape_to_string(k.shape()) + ", " +
                     shape_to_string(v.shape()));
  }
  std::vector<T> out(q.numel());
  tiled_attention_into<T>(q.data(), k.data(), v.data(), q.dim(0), q.dim(1), q.dim(2), causal, tiles, out);
  return Tensor<T>(q.shape(), std::move(out));
}

MemoryEstimate memory_estimate(std::size_t seq_len, std::size_t d_head, std::size_t heads, TileConfig tiles,
                               std::size_t elem_size) {
  if (seq_len == 0 || d_head == 0 || heads == 0 || elem_size == 0) {
    throw ContractError("memory_estimate: sizes must be positive");
  }
  tiles = tiles.clamped_to(seq_len);
  const std::uint64_t t = seq_len;
  const std::uint64_t naive = heads * t * t * elem_size;
  std::uint64_t tiled = std::uint64_t{heads} * tiles.block_q * tiles.block_kv * elem_size;
  // A single key block needs no running state: it is a one-shot softmax.
  if (tiles.block_kv < seq_len) tiled += std::uint64_t{heads} * tiles.block_q * (d_head + 2) * elem_size;
  return {naive, tiled};
}

template struct SoftmaxState<float>;
template struct SoftmaxState<double>;
template SoftmaxState<float> merge(const SoftmaxState<float>&, const SoftmaxState<float>&);
template SoftmaxState<double> merge(const SoftmaxState<double>&, const SoftmaxState<double>&);
template void tiled_attention_into<float>(std::span<const float>, std::span<const float>, std::span<const float>,
                                          std::size_t, std::size_t, std::size_t, bool, TileConfig, std::span<float>);
template void tiled_attention_into<double>(std::span<const double>, std::span<const double>,
                                           std::span<const double>, std::size_t, std::size_t, std::size_t, bool,
                                           TileConfig, std::span<double>);
template Tensor<float> tiled_attention<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, bool,
                                              TileConfig);
template Tensor<double> tiled_attention<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                                bool, TileConfig);

}  // namespace jiang::flash
