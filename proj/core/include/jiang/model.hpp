#pragma once

// Decoder-only transformer: token embedding, pre-norm blocks of
// RMSNorm -> multi-head attention (RoPE on Q/K) -> residual ->
// RMSNorm -> gated FFN -> residual, final RMSNorm and an output head that
// is tied to the embedding unless configured otherwise.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/flash_attention.hpp"
#include "jiang/tensor.hpp"

namespace jiang {

// Which fully-connected layers carry an additive bias.
//   qkv_only: the Q, K and V projections only (default)
//   none:     no layer
//   all:      every projection inside the blocks
enum class BiasPolicy { qkv_only, none, all };

std::string to_string(BiasPolicy policy);
BiasPolicy parse_bias_policy(const std::string& text);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  double ffn_ratio = 2.4;
  std::size_t vocab_size = 512;
  std::size_t max_seq_len = 256;
  double rope_base = 10000.0;
  double rmsnorm_eps = 1e-5;
  BiasPolicy bias_policy = BiasPolicy::qkv_only;
  bool gated = true;
  bool tie_embeddings = true;

  std::size_t head_dim() const { return d_model / n_heads; }
  // round(ffn_ratio * d_model) to the nearest multiple of 8, at least 8.
  std::size_t ffn_hidden() const;

  // Throws ContractError on any violated invariant.
  void validate() const;

  // Deep-narrow gated variant: d_model 1024, 22 layers, FFN ratio 2.4.
  static ModelConfig deep_gated_400m(std::size_t vocab_size = 65600, bool tie_embeddings = true);

  // Keys are prefixed with "model.".
  void write_to(KeyValues& kv) const;
  static ModelConfig from(const KeyValues& kv);
  static ModelConfig from(const KeyValues& kv, const ModelConfig& defaults);

  bool operator==(const ModelConfig&) const = default;
};

// Exact parameter total implied by a config.
std::uint64_t param_count(const ModelConfig& config);

template <typename T>
struct LayerWeights {
  Tensor<T> attn_norm;
  Tensor<T> wq, wk, wv, wo;  // [d_model x d_model], applied as x·W
  Tensor<T> bq, bk, bv, bo;  // [d_model]; bo only under BiasPolicy::all
  Tensor<T> ffn_norm;
  Tensor<T> w_gate, w_up;  // [d_model x hidden]; w_gate absent when not gated
  Tensor<T> w_down;        // [hidden x d_model]
  Tensor<T> b_gate, b_up, b_down;
};

template <typename T>
struct DecoderWeights {
  Tensor<T> tok_emb;  // [vocab x d_model]
  std::vector<LayerWeights<T>> layers;
  Tensor<T> final_norm;
  Tensor<T> lm_head;  // [d_model x vocab]; undefined when tied

  // Defined tensors in a fixed order with stable dotted names
  // ("tok_emb", "layers.0.wq", ..., "final_norm", "lm_head"). The returned
  // handles share storage with the weights.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;

  void set_requires_grad(bool value) const;
  void zero_grad() const;
  DecoderWeights clone() const;
};

// Standard deep-residual init: N(0, 0.02) for projections and embeddings,
// N(0, 0.02/sqrt(2·n_layers)) for the residual outputs (wo, w_down), zero
// biases, unit norm gains.
template <typename T>
DecoderWeights<T> init_weights(const ModelConfig& config, std::uint64_t seed);

// Rebuilds weights from named tensors, checking names and shapes against
// the config.
template <typename T>
DecoderWeights<T> weights_from_named(const ModelConfig& config,
                                     const std::vector<std::pair<std::string, Tensor<T>>>& named);

template <typename T, typename U>
DecoderWeights<U> cast_weights(const DecoderWeights<T>& weights);

// ---------------------------------------------------------------------------
// Building blocks (all differentiable)

// y = gain ⊙ x / sqrt(mean(x²) + eps) over the last dimension.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, double eps);

// Rotates pairs (x[2i], x[2i+1]) of each [heads x T x d_head] row at
// position p by p·base^(-2i/d_head).
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::span<const std::int64_t> positions, double base);

// x·W (+ b).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {});

// [T x heads·d_head] <-> [heads x T x d_head]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

// softmax(q·kᵀ/sqrt(d_head) [+ causal mask])·v for [heads x T x d_head].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal);

// down(silu(gate(x)) ⊙ up(x)); when w_gate is undefined, down(silu(up(x))).
template <typename T>
Tensor<T> gated_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up, const Tensor<T>& w_down,
                    const Tensor<T>& b_gate = {}, const Tensor<T>& b_up = {}, const Tensor<T>& b_down = {});

struct ForwardOptions {
  // Forward-only tiled attention; gradients do not flow through it.
  bool use_tiled = false;
  flash::TileConfig tiles{};
  // Position of the first token (RoPE offset).
  std::int64_t position_offset = 0;
};

// Logits [T x vocab] for a token sequence.
template <typename T>
Tensor<T> decoder_forward(std::span<const std::int32_t> tokens, const ModelConfig& config,
                          const DecoderWeights<T>& weights, const ForwardOptions& options = {});

}  // namespace jiang
