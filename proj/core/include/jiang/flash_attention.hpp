#pragma once

// Tiled attention with an online softmax. Scores are produced one
// [block_q x block_kv] tile at a time and folded into per-row running
// (max, denominator, accumulator) states, so no T x T matrix is ever held.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "jiang/tensor.hpp"

namespace jiang::flash {

// Partial softmax-weighted sum for one query row over some subset of keys.
// output() == acc / denom once at least one key has been folded in.
template <typename T>
struct SoftmaxState {
  T max;
  T denom;
  std::vector<T> acc;

  static SoftmaxState empty(std::size_t d_head);
  static SoftmaxState singleton(T score, std::span<const T> value);
  bool is_empty() const { return denom == T{0}; }
  std::vector<T> output() const;
};

// max' = max(a, b); denom' and acc' are each side rescaled by exp(m - max')
// and summed. Commutative; associative up to rounding; empty() is identity.
template <typename T>
SoftmaxState<T> merge(const SoftmaxState<T>& a, const SoftmaxState<T>& b);

struct TileConfig {
  std::size_t block_q = 64;
  std::size_t block_kv = 64;

  // Blocks larger than the sequence are clamped to it; zero is an error.
  TileConfig clamped_to(std::size_t seq_len) const;
};

// Same contract as jiang::attention for [heads x T x d_head] inputs. The
// result carries no gradient.
template <typename T>
Tensor<T> tiled_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal,
                          TileConfig tiles = {});

// Raw-buffer variant writing into caller storage of heads·T·d_head values.
template <typename T>
void tiled_attention_into(std::span<const T> q, std::span<const T> k, std::span<const T> v, std::size_t heads,
                          std::size_t seq_len, std::size_t d_head, bool causal, TileConfig tiles, std::span<T> out);

// Auxiliary (non-input, non-output) buffer sizes in bytes.
struct MemoryEstimate {
  std::uint64_t naive_bytes;  // heads·T²·elem
  std::uint64_t tiled_bytes;  // heads·block_q·block_kv·elem + running-state storage
};

MemoryEstimate memory_estimate(std::size_t seq_len, std::size_t d_head, std::size_t heads, TileConfig tiles,
                               std::size_t elem_size = sizeof(float));

}  // namespace jiang::flash
