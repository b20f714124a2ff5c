#include "jiang/model.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "jiang/error.hpp"

namespace jiang {

std::string to_string(BiasPolicy policy) {
  switch (policy) {
    case BiasPolicy::qkv_only: return "qkv_only";
    case BiasPolicy::none: return "none";
    case BiasPolicy::all: return "all";
  }
  return "qkv_only";
}

BiasPolicy parse_bias_policy(const std::string& text) {
  if (text == "qkv_only") return BiasPolicy::qkv_only;
  if (text == "none") return BiasPolicy::none;
  if (text == "all") return BiasPolicy::all;
  throw ContractError("unknown bias policy '" + text + "' (expected qkv_only, none or all)");
}

std::size_t ModelConfig::ffn_hidden() const {
  const double raw = ffn_ratio * static_cast<double>(d_model);
  const auto rounded = static_cast<std::size_t>(std::llround(raw / 8.0)) * 8;
  return std::max<std::size_t>(rounded, 8);
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& what) { throw ContractError("ModelConfig: " + what); };
  if (d_model == 0 || n_layers == 0 || n_heads == 0) fail("d_model, n_layers and n_heads must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) fail("head dimension must be even for RoPE");
  if (!(ffn_ratio > 0)) fail("ffn_ratio must be > 0");
  if (!(rmsnorm_eps > 0)) fail("rmsnorm_eps must be > 0");
  if (!(rope_base > 1)) fail("rope_base must be > 1");
  if (vocab_size == 0 || max_seq_len == 0) fail("vocab_size and max_seq_len must be positive");
}

ModelConfig ModelConfig::deep_gated_400m(std::size_t vocab_size, bool tie_embeddings) {
  ModelConfig c;
  c.d_model = 1024;
  c.n_layers = 22;
  c.n_heads = 16;
  c.ffn_ratio = 2.4;
  c.vocab_size = vocab_size;
  c.max_seq_len = 4096;
  c.tie_embeddings = tie_embeddings;
  return c;
}

void ModelConfig::write_to(KeyValues& kv) const {
  kv.set("model.d_model", std::to_string(d_model));
  kv.set("model.n_layers", std::to_string(n_layers));
  kv.set("model.n_heads", std::to_string(n_heads));
  kv.set("model.ffn_ratio", format_double(ffn_ratio));
  kv.set("model.vocab_size", std::to_string(vocab_size));
  kv.set("model.max_seq_len", std::to_string(max_seq_len));
  kv.set("model.rope_base", format_double(rope_base));
  kv.set("model.rmsnorm_eps", format_double(rmsnorm_eps));
  kv.set("model.bias_policy", to_string(bias_policy));
  kv.set("model.gated", gated ? "true" : "false");
  kv.set("model.tie_embeddings", tie_embeddings ? "true" : "false");
}

ModelConfig ModelConfig::from(const KeyValues& kv) { return from(kv, ModelConfig{}); }

ModelConfig ModelConfig::from(const KeyValues& kv, const ModelConfig& d) {
  ModelConfig c;
  c.d_model = kv.get_uint("model.d_model", d.d_model);
  c.n_layers = kv.get_uint("model.n_layers", d.n_layers);
  c.n_heads = kv.get_uint("model.n_heads", d.n_heads);
  c.ffn_ratio = kv.get_double("model.ffn_ratio", d.ffn_ratio);
  c.vocab_size = kv.get_uint("model.vocab_size", d.vocab_size);
  c.max_seq_len = kv.get_uint("model.max_seq_len", d.max_seq_len);
  c.rope_base = kv.get_double("model.rope_base", d.rope_base);
  c.rmsnorm_eps = kv.get_double("model.rmsnorm_eps", d.rmsnorm_eps);
  c.bias_policy = parse_bias_policy(kv.get_string("model.bias_policy", to_string(d.bias_policy)));
  c.gated = kv.get_bool("model.gated", d.gated);
  c.tie_embeddings = kv.get_bool("model.tie_embeddings", d.tie_embeddings);
  c.validate();
  return c;
}

std::uint64_t param_count(const ModelConfig& c) {
  const std::uint64_t d = c.d_model;
  const std::uint64_t h = c.ffn_hidden();
  const std::uint64_t v = c.vocab_size;
  std::uint64_t per_layer = 2 * d + 4 * d * d + (c.gated ? 3 : 2) * d * h;
  switch (c.bias_policy) {
    case BiasPolicy::qkv_only: per_layer += 3 * d; break;
    case BiasPolicy::all: per_layer += 4 * d + (c.gated ? 2 : 1) * h + d; break;
    case BiasPolicy::none: break;
  }
  std::uint64_t total = v * d + c.n_layers * per_layer + d;
  if (!c.tie_embeddings) total += d * v;
  return total;
}

// ---------------------------------------------------------------------------
// Weights

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> DecoderWeights<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  const auto add = [&out](std::string name, const Tensor<T>& t) {
    if (t.defined()) out.emplace_back(std::move(name), t);
  };
  add("tok_emb", tok_emb);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    add(p + "attn_norm", l.attn_norm);
    add(p + "wq", l.wq);
    add(p + "bq", l.bq);
    add(p + "wk", l.wk);
    add(p + "bk", l.bk);
    add(p + "wv", l.wv);
    add(p + "bv", l.bv);
    add(p + "wo", l.wo);
    add(p + "bo", l.bo);
    add(p + "ffn_norm", l.ffn_norm);
    add(p + "w_gate", l.w_gate);
    add(p + "b_gate", l.b_gate);
    add(p + "w_up", l.w_up);
    add(p + "b_up", l.b_up);
    add(p + "w_down", l.w_down);
    add(p + "b_down", l.b_down);
  }
  add("final_norm", final_norm);
  add("lm_head", lm_head);
  return out;
}

template <typename T>
void DecoderWeights<T>::set_requires_grad(bool value) const {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(value);
}

template <typename T>
void DecoderWeights<T>::zero_grad() const {
  for (auto& [name, t] : named_parameters()) t.zero_grad();
}

namespace {

// Applies `fn` to every tensor slot (defined or not) of src/dst in lockstep.
template <typename T, typename U, typename Fn>
void map_slots(const DecoderWeights<T>& src, DecoderWeights<U>& dst, Fn fn) {
  fn(src.tok_emb, dst.tok_emb);
  dst.layers.resize(src.layers.size());
  for (std::size_t i = 0; i < src.layers.size(); ++i) {
    const auto& s = src.layers[i];
    auto& t = dst.layers[i];
    fn(s.attn_norm, t.attn_norm);
    fn(s.wq, t.wq);
    fn(s.wk, t.wk);
    fn(s.wv, t.wv);
    fn(s.wo, t.wo);
    fn(s.bq, t.bq);
    fn(s.bk, t.bk);
    fn(s.bv, t.bv);
    fn(s.bo, t.bo);
    fn(s.ffn_norm, t.ffn_norm);
    fn(s.w_gate, t.w_gate);
    fn(s.w_up, t.w_up);
    fn(s.w_down, t.w_down);
    fn(s.b_gate, t.b_gate);
    fn(s.b_up, t.b_up);
    fn(s.b_down, t.b_down);
  }
  fn(src.final_norm, dst.final_norm);
  fn(src.lm_head, dst.lm_head);
}

}  // namespace

template <typename T>
DecoderWeights<T> DecoderWeights<T>::clone() const {
  DecoderWeights<T> out;
  map_slots(*this, out, [](const Tensor<T>& s, Tensor<T>& d) {
    if (s.defined()) d = s.detach().set_requires_grad(s.requires_grad());
  });
  return out;
}

template <typename T, typename U>
DecoderWeights<U> cast_weights(const DecoderWeights<T>& weights) {
  DecoderWeights<U> out;
  map_slots(weights, out, [](const Tensor<T>& s, Tensor<U>& d) {
    if (s.defined()) d = s.template cast<U>();
  });
  return out;
}

template <typename T>
DecoderWeights<T> init_weights(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = c.d_model;
  const std::size_t h = c.ffn_hidden();
  const T std_main = T(0.02);
  const T std_resid = static_cast<T>(0.02 / std::sqrt(2.0 * static_cast<double>(c.n_layers)));
  const bool all_bias = c.bias_policy == BiasPolicy::all;
  const bool qkv_bias = c.bias_policy != BiasPolicy::none;

  DecoderWeights<T> w;
  w.tok_emb = Tensor<T>::randn({c.vocab_size, d}, std_main, rng);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    LayerWeights<T> l;
    l.attn_norm = Tensor<T>::ones({d});
    l.wq = Tensor<T>::randn({d, d}, std_main, rng);
    l.wk = Tensor<T>::randn({d, d}, std_main, rng);
    l.wv = Tensor<T>::randn({d, d}, std_main, rng);
    l.wo = Tensor<T>::randn({d, d}, std_resid, rng);
    if (qkv_bias) {
      l.bq = Tensor<T>::zeros({d});
      l.bk = Tensor<T>::zeros({d});
      l.bv = Tensor<T>::zeros({d});
    }
    if (all_bias) l.bo = Tensor<T>::zeros({d});
    l.ffn_norm = Tensor<T>::ones({d});
    if (c.gated) l.w_gate = Tensor<T>::randn({d, h}, std_main, rng);
    l.w_up = Tensor<T>::randn({d, h}, std_main, rng);
    l.w_down = Tensor<T>::randn({h, d}, std_resid, rng);
    if (all_bias) {
      if (c.gated) l.b_gate = Tensor<T>::zeros({h});
      l.b_up = Tensor<T>::zeros({h});
      l.b_down = Tensor<T>::zeros({d});
    }
    w.layers.push_back(std::move(l));
  }
  w.final_norm = Tensor<T>::ones({d});
  if (!c.tie_embeddings) w.lm_head = Tensor<T>::randn({d, c.vocab_size}, std_main, rng);
  return w;
}

template <typename T>
DecoderWeights<T> weights_from_named(const ModelConfig& config,
                                     const std::vector<std::pair<std::string, Tensor<T>>>& named) {
  // The expected layout is whatever init_weights produces for this config.
  const auto expected = init_weights<T>(config, 0).named_parameters();
  std::map<std::string, Tensor<T>> given(named.begin(), named.end());
  if (given.size() != named.size()) throw IoError("weights: duplicate tensor names");
  for (const auto& [name, t] : expected) {
    const auto it = given.find(name);
    if (it == given.end()) throw IoError("weights: missing tensor '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw IoError("weights: tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                    ", expected " + shape_to_string(t.shape()));
    }
  }
  if (given.size() != expected.size()) {
    for (const auto& [name, t] : given) {
      const bool known = std::any_of(expected.begin(), expected.end(), [&](const auto& e) { return e.first == name; });
      if (!known) throw IoError("weights: unexpected tensor '" + name + "' for this config");
    }
  }
  DecoderWeights<T> w;
  const auto take = [&given](const std::string& name) {
    const auto it = given.find(name);
    return it == given.end() ? Tensor<T>{} : it->second;
  };
  w.tok_emb = take("tok_emb");
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    LayerWeights<T> l;
    l.attn_norm = take(p + "attn_norm");
    l.wq = take(p + "wq");
    l.wk = take(p + "wk");
    l.wv = take(p + "wv");
    l.wo = take(p + "wo");
    l.bq = take(p + "bq");
    l.bk = take(p + "bk");
    l.bv = take(p + "bv");
    l.bo = take(p + "bo");
    l.ffn_norm = take(p + "ffn_norm");
    l.w_gate = take(p + "w_gate");
    l.w_up = take(p + "w_up");
    l.w_down = take(p + "w_down");
    l.b_gate = take(p + "b_gate");
    l.b_up = take(p + "b_up");
    l.b_down = take(p + "b_down");
    w.layers.push_back(std::move(l));
  }
  w.final_norm = take("final_norm");
  w.lm_head = take("lm_head");
  return w;
}

// ---------------------------------------------------------------------------
// Building blocks

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, double eps) {
  if (x.rank() == 0 || gain.rank() != 1 || x.shape().back() != gain.dim(0)) {
    throw ShapeError("rms_norm: last dimension of " + shape_to_string(x.shape()) + " does not match gain " +
                     shape_to_string(gain.shape()));
  }
  const std::size_t d = gain.dim(0);
  const std::size_t rows = x.numel() / d;
  const auto xs = x.data();
  const auto gs = gain.data();
  auto inv_rms = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    T ms{0};
    for (std::size_t j = 0; j < d; ++j) ms += xs[r * d + j] * xs[r * d + j];
    const T inv = T{1} / std::sqrt(ms / static_cast<T>(d) + static_cast<T>(eps));
    (*inv_rms)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = gs[j] * xs[r * d + j] * inv;
  }
  return make_result<T>("rms_norm", x.shape(), std::move(out), {x, gain},
                        [inv_rms, rows, d](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto& xi = *in[0];
                          auto& gi = *in[1];
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T inv = (*inv_rms)[r];
                            const T* xr = xi.data.data() + r * d;
                            const T* gr = o.grad.data() + r * d;
                            if (xi.requires_grad) {
                              T dot{0};
                              for (std::size_t j = 0; j < d; ++j) dot += gr[j] * gi.data[j] * xr[j];
                              const T coef = inv * inv * inv * dot / static_cast<T>(d);
                              auto gx = xi.grad_slot();
                              for (std::size_t j = 0; j < d; ++j) {
                                gx[r * d + j] += inv * gi.data[j] * gr[j] - coef * xr[j];
                              }
                            }
                            if (gi.requires_grad) {
                              auto gg = gi.grad_slot();
                              for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xr[j] * inv;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::span<const std::int64_t> positions, double base) {
  if (x.rank() != 3 || x.dim(1) != positions.size()) {
    throw ShapeError("rope_apply: expected [heads x T x d_head] with T = " + std::to_string(positions.size()) +
                     ", got " + shape_to_string(x.shape()));
  }
  const std::size_t heads = x.dim(0);
  const std::size_t t = x.dim(1);
  const std::size_t dh = x.dim(2);
  if (dh % 2 != 0) throw ShapeError("rope_apply: d_head must be even, got " + std::to_string(dh));
  const std::size_t half = dh / 2;
  auto cs = std::make_shared<std::vector<T>>(t * half);
  auto sn = std::make_shared<std::vector<T>>(t * half);
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      const double angle = static_cast<double>(positions[p]) * theta;
      (*cs)[p * half + i] = static_cast<T>(std::cos(angle));
      (*sn)[p * half + i] = static_cast<T>(std::sin(angle));
    }
  }
  const auto xs = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < t; ++p) {
      const std::size_t row = (h * t + p) * dh;
      for (std::size_t i = 0; i < half; ++i) {
        const T c = (*cs)[p * half + i];
        const T s = (*sn)[p * half + i];
        const T x0 = xs[row + 2 * i];
        const T x1 = xs[row + 2 * i + 1];
        out[row + 2 * i] = x0 * c - x1 * s;
        out[row + 2 * i + 1] = x0 * s + x1 * c;
      }
    }
  }
  return make_result<T>("rope", x.shape(), std::move(out), {x},
                        [cs, sn, heads, t, dh, half](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t h = 0; h < heads; ++h) {
                            for (std::size_t p = 0; p < t; ++p) {
                              const std::size_t row = (h * t + p) * dh;
                              for (std::size_t i = 0; i < half; ++i) {
                                const T c = (*cs)[p * half + i];
                                const T s = (*sn)[p * half + i];
                                const T g0 = o.grad[row + 2 * i];
                                const T g1 = o.grad[row + 2 * i + 1];
                                gx[row + 2 * i] += g0 * c + g1 * s;
                                gx[row + 2 * i + 1] += g1 * c - g0 * s;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  return b.defined() ? add(y, b) : y;
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  if (x.rank() != 2 || heads == 0 || x.dim(1) % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_to_string(x.shape()) + " into " + std::to_string(heads) +
                     " heads");
  }
  const std::size_t t = x.dim(0);
  const std::size_t dh = x.dim(1) / heads;
  const auto xs = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < t; ++p) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < dh; ++j) out[(h * t + p) * dh + j] = xs[p * heads * dh + h * dh + j];
    }
  }
  return make_result<T>("split_heads", Shape{heads, t, dh}, std::move(out), {x},
                        [heads, t, dh](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t p = 0; p < t; ++p) {
                            for (std::size_t h = 0; h < heads; ++h) {
                              for (std::size_t j = 0; j < dh; ++j) {
                                gx[p * heads * dh + h * dh + j] += o.grad[(h * t + p) * dh + j];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("merge_heads: expected [heads x T x d_head], got " + shape_to_string(x.shape()));
  const std::size_t heads = x.dim(0);
  const std::size_t t = x.dim(1);
  const std::size_t dh = x.dim(2);
  const auto xs = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t j = 0; j < dh; ++j) out[p * heads * dh + h * dh + j] = xs[(h * t + p) * dh + j];
    }
  }
  return make_result<T>("merge_heads", Shape{t, heads * dh}, std::move(out), {x},
                        [heads, t, dh](const TensorImpl<T>& o, const InputList<T>& in) {
                          auto gx = in[0]->grad_slot();
                          for (std::size_t h = 0; h < heads; ++h) {
                            for (std::size_t p = 0; p < t; ++p) {
                              for (std::size_t j = 0; j < dh; ++j) {
                                gx[(h * t + p) * dh + j] += o.grad[p * heads * dh + h * dh + j];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: q/k/v must share one [heads x T x d_head] shape, got " +
                     shape_to_string(q.shape()) + ", " + shape_to_string(k.shape()) + ", " +
                     shape_to_string(v.shape()));
  }
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(q.dim(2)));
  const Tensor<T> scores = scale(matmul(q, transpose(k)), inv_sqrt);
  const Tensor<T> weights = causal ? causal_softmax(scores) : softmax(scores, 2);
  return matmul(weights, v);
}

template <typename T>
Tensor<T> gated_ffn(const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up, const Tensor<T>& w_down,
                    const Tensor<T>& b_gate, const Tensor<T>& b_up, const Tensor<T>& b_down) {
  if (w_up.rank() != 2 || w_down.rank() != 2 || w_up.dim(1) != w_down.dim(0) ||
      (w_gate.defined() && w_gate.shape() != w_up.shape())) {
    throw ShapeError("gated_ffn: inconsistent projection shapes up " + shape_to_string(w_up.shape()) + ", down " +
                     shape_to_string(w_down.shape()) +
                     (w_gate.defined() ? ", gate " + shape_to_string(w_gate.shape()) : std::string()));
  }
  const Tensor<T> up = linear(x, w_up, b_up);
  const Tensor<T> hidden = w_gate.defined() ? mul(silu(linear(x, w_gate, b_gate)), up) : silu(up);
  return linear(hidden, w_down, b_down);
}

template <typename T>
Tensor<T> decoder_forward(std::span<const std::int32_t> tokens, const ModelConfig& config,
                          const DecoderWeights<T>& weights, const ForwardOptions& options) {
  if (tokens.empty()) throw ContractError("decoder_forward: empty token sequence");
  if (tokens.size() > config.max_seq_len) {
    throw ContractError("decoder_forward: sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                        std::to_string(config.max_seq_len));
  }
  for (const auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw ContractError("decoder_forward: token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(config.vocab_size));
    }
  }
  if (weights.layers.size() != config.n_layers) throw ContractError("decoder_forward: weights/config layer mismatch");

  std::vector<std::int64_t> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), options.position_offset);
  const std::size_t heads = config.n_heads;

  Tensor<T> x = embedding(weights.tok_emb, tokens);
  for (const auto& l : weights.layers) {
    const Tensor<T> h = rms_norm(x, l.attn_norm, config.rmsnorm_eps);
    // Biases are added inside the projections, before RoPE rotates Q and K.
    const Tensor<T> q = rope_apply(split_heads(linear(h, l.wq, l.bq), heads), positions, config.rope_base);
    const Tensor<T> k = rope_apply(split_heads(linear(h, l.wk, l.bk), heads), positions, config.rope_base);
    const Tensor<T> v = split_heads(linear(h, l.wv, l.bv), heads);
    const Tensor<T> ctx = options.use_tiled ? flash::tiled_attention(q, k, v, true, options.tiles)
                                            : attention(q, k, v, true);
    x = add(x, linear(merge_heads(ctx), l.wo, l.bo));
    const Tensor<T> h2 = rms_norm(x, l.ffn_norm, config.rmsnorm_eps);
    x = add(x, gated_ffn(h2, l.w_gate, l.w_up, l.w_down, l.b_gate, l.b_up, l.b_down));
  }
  x = rms_norm(x, weights.final_norm, config.rmsnorm_eps);
  return weights.lm_head.defined() ? matmul(x, weights.lm_head) : matmul(x, transpose(weights.tok_emb));
}

// ---------------------------------------------------------------------------

#define JIANG_INSTANTIATE_MODEL(T)                                                                              \
  template struct LayerWeights<T>;                                                                              \
  template struct DecoderWeights<T>;                                                                            \
  template DecoderWeights<T> init_weights<T>(const ModelConfig&, std::uint64_t);                                \
  template DecoderWeights<T> weights_from_named<T>(const ModelConfig&,                                          \
                                                   const std::vector<std::pair<std::string, Tensor<T>>>&);      \
  template Tensor<T> rms_norm<T>(const Tensor<T>&, const Tensor<T>&, double);                                   \
  template Tensor<T> rope_apply<T>(const Tensor<T>&, std::span<const std::int64_t>, double);                    \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> split_heads<T>(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> merge_heads<T>(const Tensor<T>&);                                                          \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);                  \
  template Tensor<T> gated_ffn<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> decoder_forward<T>(std::span<const std::int32_t>, const ModelConfig&,                      \
                                        const DecoderWeights<T>&, const ForwardOptions&);

JIANG_INSTANTIATE_MODEL(float)
JIANG_INSTANTIATE_MODEL(double)

template DecoderWeights<double> cast_weights<float, double>(const DecoderWeights<float>&);
template DecoderWeights<float> cast_weights<double, float>(const DecoderWeights<double>&);
template DecoderWeights<float> cast_weights<float, float>(const DecoderWeights<float>&);
template DecoderWeights<double> cast_weights<double, double>(const DecoderWeights<double>&);

#undef JIANG_INSTANTIATE_MODEL

}  // namespace jiang
