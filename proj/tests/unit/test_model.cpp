#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "jiang/checkpoint.hpp"
#include "jiang/error.hpp"
#include "jiang/model.hpp"

using namespace jiang;

namespace {

using T64 = Tensor<double>;

T64 rand_tensor(Shape shape, std::mt19937_64& rng, bool grad = false, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = n(rng);
  return T64(std::move(shape), std::move(data), grad);
}

ModelConfig tiny(std::size_t d = 16, std::size_t layers = 2, std::size_t heads = 2, std::size_t vocab = 32) {
  ModelConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.vocab_size = vocab;
  c.max_seq_len = 32;
  c.ffn_ratio = 2.0;
  return c;
}

// softmax(qkᵀ/√d (+mask))·v by plain loops.
std::vector<double> naive_attention(const T64& q, const T64& k, const T64& v, bool causal) {
  const auto H = q.dim(0), T = q.dim(1), D = q.dim(2);
  std::vector<double> out(H * T * D, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> s(T, -INFINITY);
      double m = -INFINITY;
      for (std::size_t j = 0; j < T; ++j) {
        if (causal && j > i) continue;
        double dot = 0.0;
        for (std::size_t d = 0; d < D; ++d) dot += q.at((h * T + i) * D + d) * k.at((h * T + j) * D + d);
        s[j] = dot / std::sqrt(static_cast<double>(D));
        m = std::max(m, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < T; ++j) z += std::isinf(s[j]) ? 0.0 : std::exp(s[j] - m);
      for (std::size_t j = 0; j < T; ++j) {
        if (std::isinf(s[j])) continue;
        const double w = std::exp(s[j] - m) / z;
        for (std::size_t d = 0; d < D; ++d) out[(h * T + i) * D + d] += w * v.at((h * T + j) * D + d);
      }
    }
  }
  return out;
}

std::vector<std::int64_t> iota_positions(std::size_t n, std::int64_t start = 0) {
  std::vector<std::int64_t> p(n);
  std::iota(p.begin(), p.end(), start);
  return p;
}

}  // namespace

TEST(RmsNorm, Examples) {
  const auto ones = T64::ones({4});
  const auto y = rms_norm(ones, T64::ones({4}), 1e-12);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0, 1e-10);

  const auto z = rms_norm(T64::zeros({4}), T64::ones({4}), 1e-5);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);

  const auto h = rms_norm(T64({2}, {3, 4}), T64::ones({2}), 0.0);
  EXPECT_NEAR(h.at(0), 3.0 / std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(h.at(1), 4.0 / std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(h.at(0), 0.848528137423857, 1e-12);
}

TEST(RmsNorm, GainMismatchThrows) {
  EXPECT_THROW(rms_norm(T64::ones({2, 4}), T64::ones({3}), 1e-5), ShapeError);
}

TEST(RmsNorm, ScaleEquivariance) {
  std::mt19937_64 rng(7);
  const auto x = rand_tensor({3, 8}, rng);
  const auto g = rand_tensor({8}, rng);
  const auto base = rms_norm(x, g, 1e-10);
  for (double c : {0.5, 3.0, 100.0}) {
    const auto scaled = rms_norm(scale(x, c), g, 1e-10);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(scaled.at(i), base.at(i), 1e-6);
  }
}

TEST(Rope, PositionZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = rand_tensor({2, 1, 8}, rng);
  const std::vector<std::int64_t> pos{0};
  const auto y = rope_apply(x, pos, 10000.0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Rope, TwoDimensionalRotation) {
  const T64 x({1, 1, 2}, {1, 0});
  const std::vector<std::int64_t> pos{1};
  const auto y = rope_apply(x, pos, 10000.0);
  EXPECT_NEAR(y.at(0), std::cos(1.0), 1e-15);
  EXPECT_NEAR(y.at(1), std::sin(1.0), 1e-15);
}

TEST(Rope, OddHeadDimThrows) {
  const std::vector<std::int64_t> pos{0};
  EXPECT_THROW(rope_apply(T64::ones({1, 1, 3}), pos, 10000.0), ShapeError);
}

TEST(Rope, DotDependsOnlyOnOffset) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = rand_tensor({1, 1, 16}, rng);
    const auto k = rand_tensor({1, 1, 16}, rng);
    const std::int64_t m = trial, n = 3 * trial + 1;
    const auto dot_at = [&](std::int64_t a, std::int64_t b) {
      const std::vector<std::int64_t> pa{a}, pb{b};
      const auto rq = rope_apply(q, pa, 10000.0);
      const auto rk = rope_apply(k, pb, 10000.0);
      double s = 0.0;
      for (std::size_t i = 0; i < 16; ++i) s += rq.at(i) * rk.at(i);
      return s;
    };
    const double base = dot_at(m, n);
    for (std::int64_t s : {1, 5, 17}) EXPECT_NEAR(dot_at(m + s, n + s), base, 1e-10);
  }
}

TEST(Attention, SingleTokenReturnsV) {
  std::mt19937_64 rng(3);
  const auto q = rand_tensor({2, 1, 4}, rng), k = rand_tensor({2, 1, 4}, rng), v = rand_tensor({2, 1, 4}, rng);
  const auto out = attention(q, k, v, true);
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_DOUBLE_EQ(out.at(i), v.at(i));
}

TEST(Attention, IdenticalKeysGiveMeanOfValues) {
  std::mt19937_64 rng(4);
  const std::size_t T = 5, D = 4;
  const auto q = rand_tensor({1, T, D}, rng);
  const auto row = rand_tensor({D}, rng);
  std::vector<double> kd;
  for (std::size_t t = 0; t < T; ++t) kd.insert(kd.end(), row.data().begin(), row.data().end());
  const T64 k({1, T, D}, kd);
  const auto v = rand_tensor({1, T, D}, rng);
  const auto out = attention(q, k, v, false);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t d = 0; d < D; ++d) {
      double mean_v = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean_v += v.at(t * D + d) / static_cast<double>(T);
      EXPECT_NEAR(out.at(i * D + d), mean_v, 1e-10);
    }
  }
}

TEST(Attention, MatchesTripleLoop) {
  std::mt19937_64 rng(5);
  const auto q = rand_tensor({2, 6, 4}, rng), k = rand_tensor({2, 6, 4}, rng), v = rand_tensor({2, 6, 4}, rng);
  for (bool causal : {false, true}) {
    const auto out = attention(q, k, v, causal);
    const auto ref = naive_attention(q, k, v, causal);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.at(i), ref[i], 1e-10);
  }
}

TEST(Attention, ShapeMismatchThrows) {
  EXPECT_THROW(attention(T64::ones({1, 3, 4}), T64::ones({1, 2, 4}), T64::ones({1, 3, 4}), true), ShapeError);
}

TEST(Attention, ShiftingPositionsKeepsScores) {
  std::mt19937_64 rng(6);
  const auto q = rand_tensor({2, 5, 8}, rng), k = rand_tensor({2, 5, 8}, rng);
  const auto scores = [&](std::int64_t start) {
    const auto pos = iota_positions(5, start);
    return matmul(rope_apply(q, pos, 10000.0), transpose(rope_apply(k, pos, 10000.0)));
  };
  const auto base = scores(0);
  for (std::int64_t shift : {1, 13, 400}) {
    const auto moved = scores(shift);
    for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(moved.at(i), base.at(i), 1e-8);
  }
}

TEST(GatedFfn, ZeroGateSilencesOutput) {
  std::mt19937_64 rng(8);
  const auto x = rand_tensor({3, 4}, rng);
  const auto out = gated_ffn(x, T64::zeros({4, 10}), rand_tensor({4, 10}, rng), rand_tensor({10, 4}, rng));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(GatedFfn, HandComputedToy) {
  const T64 x({1, 2}, {1.0, -2.0});
  const T64 eye({2, 2}, {1, 0, 0, 1});
  const T64 up({2, 2}, {2, 0, 0, 3});
  const auto out = gated_ffn(x, eye, up, eye);
  const auto s = [](double z) { return z / (1.0 + std::exp(-z)); };
  EXPECT_NEAR(out.at(0), s(1.0) * 2.0, 1e-14);
  EXPECT_NEAR(out.at(1), s(-2.0) * -6.0, 1e-14);
}

TEST(GatedFfn, GradientCheck) {
  std::mt19937_64 rng(9);
  auto x = rand_tensor({3, 4}, rng, true);
  auto wg = rand_tensor({4, 10}, rng, true, 0.5);
  auto wu = rand_tensor({4, 10}, rng, true, 0.5);
  auto wd = rand_tensor({10, 4}, rng, true, 0.5);
  const auto w = rand_tensor({3, 4}, rng);
  const std::function<T64()> f = [&]() { return sum(mul(gated_ffn(x, wg, wu, wd), w)); };
  EXPECT_LT(grad_check<double>(f, {x, wg, wu, wd}).max_rel_error, 1e-5);
}

TEST(Config, Invariants) {
  auto c = tiny();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = tiny();
  c.rope_base = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = tiny();
  c.rmsnorm_eps = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = tiny();
  c.ffn_ratio = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_EQ(ModelConfig{}.bias_policy, BiasPolicy::qkv_only);
  EXPECT_TRUE(ModelConfig{}.gated);
}

TEST(Config, FfnHiddenRoundsToEight) {
  auto c = tiny(1024);
  c.ffn_ratio = 2.4;
  EXPECT_EQ(c.ffn_hidden(), 2456u);  // 2457.6 -> 307.2·8 -> 307·8
  c = tiny(100);
  c.ffn_ratio = 1.0;
  EXPECT_EQ(c.ffn_hidden(), 104u);  // 100/8 = 12.5 rounds away from zero
}

TEST(Config, KeyValueRoundTrip) {
  auto c = tiny();
  c.bias_policy = BiasPolicy::all;
  c.tie_embeddings = false;
  KeyValues kv;
  c.write_to(kv);
  EXPECT_EQ(ModelConfig::from(KeyValues::parse(kv.serialize())), c);
}

TEST(ParamCount, HandCount) {
  ModelConfig c;
  c.d_model = 2;
  c.n_layers = 1;
  c.n_heads = 1;
  c.vocab_size = 4;
  c.ffn_ratio = 1.0;
  c.tie_embeddings = false;
  // emb 8 + norms 2+2+2 + wq/wk/wv/wo 16 + q/k/v bias 6 + FFN (hidden 8) 3·16 + head 8
  EXPECT_EQ(param_count(c), 92u);
  std::uint64_t from_weights = 0;
  for (const auto& [name, t] : init_weights<double>(c, 1).named_parameters()) from_weights += t.numel();
  EXPECT_EQ(from_weights, 92u);
}

TEST(ParamCount, BiasAccounting) {
  auto c = tiny(24, 3, 3, 50);
  const auto with_bias = param_count(c);
  c.bias_policy = BiasPolicy::none;
  EXPECT_EQ(with_bias - param_count(c), 3u * 24u * 3u);
}

TEST(ParamCount, DeepNarrowPresetNearFourHundredMillion) {
  const auto preset = ModelConfig::deep_gated_400m();
  EXPECT_EQ(preset.d_model, 1024u);
  EXPECT_EQ(preset.n_layers, 22u);
  EXPECT_DOUBLE_EQ(preset.ffn_ratio, 2.4);
  const double untied = static_cast<double>(param_count(ModelConfig::deep_gated_400m(65600, false)));
  EXPECT_NEAR(untied / 4e8, 1.0, 0.15);
}

TEST(Weights, BiasPolicyStructure) {
  for (auto policy : {BiasPolicy::qkv_only, BiasPolicy::none, BiasPolicy::all}) {
    auto c = tiny();
    c.bias_policy = policy;
    const auto ckpt = Checkpoint::from_weights(c, init_weights<float>(c, 3));
    std::vector<std::string> biases;
    for (const auto& [name, t] : ckpt.tensors) {
      const auto leaf = name.substr(name.rfind('.') + 1);
      if (leaf[0] == 'b') biases.push_back(leaf);
    }
    std::vector<std::string> expected;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      if (policy == BiasPolicy::qkv_only) expected.insert(expected.end(), {"bq", "bk", "bv"});
      if (policy == BiasPolicy::all)
        expected.insert(expected.end(), {"bq", "bk", "bv", "bo", "b_gate", "b_up", "b_down"});
    }
    EXPECT_EQ(biases, expected) << to_string(policy);
  }
}

TEST(Weights, InitStatistics) {
  auto c = tiny(64, 4, 4, 256);
  const auto w = init_weights<double>(c, 11);
  const auto sd = [](const T64& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s / static_cast<double>(t.numel()));
  };
  EXPECT_NEAR(sd(w.tok_emb), 0.02, 0.002);
  EXPECT_NEAR(sd(w.layers[0].wo), 0.02 / std::sqrt(8.0), 0.002);
  for (double b : w.layers[0].bq.data()) EXPECT_EQ(b, 0.0);
  for (double g : w.final_norm.data()) EXPECT_EQ(g, 1.0);
}

TEST(Decoder, InitialLossNearLogVocab) {
  const auto c = tiny(16, 2, 2, 32);
  const auto w = init_weights<double>(c, 1);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int32_t> tok(0, 31);
  std::vector<std::int32_t> ids(33);
  for (auto& t : ids) t = tok(rng);
  const auto logits = decoder_forward<double>(std::span(ids).first(32), c, w);
  const auto loss = cross_entropy(logits, std::span<const std::int32_t>(ids).subspan(1));
  EXPECT_NEAR(loss.item() / std::log(32.0), 1.0, 0.05);
}

TEST(Decoder, TiledMatchesNaiveFp32) {
  auto c = tiny(32, 2, 4, 40);
  const auto w = init_weights<float>(c, 5);
  std::vector<std::int32_t> ids(29);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>((i * 7 + 3) % 40);
  const auto a = decoder_forward<float>(ids, c, w);
  ForwardOptions opt;
  opt.use_tiled = true;
  opt.tiles = {5, 7};
  const auto b = decoder_forward<float>(ids, c, w, opt);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-5);
}

TEST(Decoder, CausalityIsExact) {
  const auto c = tiny();
  const auto w = init_weights<double>(c, 6);
  std::vector<std::int32_t> ids{1, 5, 9, 2, 7, 3};
  const auto before = decoder_forward<double>(ids, c, w);
  ids[4] = 30;
  const auto after = decoder_forward<double>(ids, c, w);
  for (std::size_t i = 0; i < 4 * c.vocab_size; ++i) EXPECT_EQ(before.at(i), after.at(i));
  bool changed = false;
  for (std::size_t i = 4 * c.vocab_size; i < 5 * c.vocab_size; ++i) changed |= before.at(i) != after.at(i);
  EXPECT_TRUE(changed);
}

TEST(Decoder, VocabPermutationPermutesLogits) {
  auto c = tiny();
  c.tie_embeddings = false;
  const auto w = init_weights<double>(c, 7);
  std::vector<std::size_t> perm(c.vocab_size);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  auto p = w.clone();
  const std::size_t d = c.d_model, V = c.vocab_size;
  auto emb = p.tok_emb.mutable_data();
  auto head = p.lm_head.mutable_data();
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t j = 0; j < d; ++j) {
      emb[perm[v] * d + j] = w.tok_emb.at(v * d + j);
      head[j * V + perm[v]] = w.lm_head.at(j * V + v);
    }
  }
  const std::vector<std::int32_t> ids{3, 1, 4, 1, 5};
  std::vector<std::int32_t> mapped;
  for (auto t : ids) mapped.push_back(static_cast<std::int32_t>(perm[static_cast<std::size_t>(t)]));
  const auto a = decoder_forward<double>(ids, c, w);
  const auto b = decoder_forward<double>(mapped, c, p);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t v = 0; v < V; ++v) EXPECT_NEAR(b.at(t * V + perm[v]), a.at(t * V + v), 1e-12);
}

TEST(Decoder, RejectsBadInput) {
  const auto c = tiny();
  const auto w = init_weights<double>(c, 1);
  const std::vector<std::int32_t> oov{1, 32};
  EXPECT_THROW(decoder_forward<double>(oov, c, w), ContractError);
  const std::vector<std::int32_t> longer(33, 1);
  EXPECT_THROW(decoder_forward<double>(longer, c, w), ContractError);
}

TEST(Decoder, FullModelGradientCheck) {
  const auto c = tiny(16, 2, 2, 64);
  const auto w = init_weights<double>(c, 8);
  w.set_requires_grad(true);
  const std::vector<std::int32_t> ids{5, 17, 42, 3, 63, 0, 9};
  std::vector<T64> params;
  for (const auto& [name, t] : w.named_parameters()) params.push_back(t);
  const std::function<T64()> f = [&]() {
    const auto logits = decoder_forward<double>(std::span(ids).first(6), c, w);
    return cross_entropy(logits, std::span<const std::int32_t>(ids).subspan(1));
  };
  const auto r = grad_check<double>(f, params, {.step = 1e-5, .max_coords = 400, .seed = 3});
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto c = tiny();
  c.tie_embeddings = false;
  const auto w = init_weights<float>(c, 9);
  auto ckpt = Checkpoint::from_weights(c, w, 1234);
  ckpt.meta.set("train.step", "7");
  std::stringstream buf;
  write_checkpoint(buf, ckpt);
  const auto back = read_checkpoint(buf);
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.tokens_seen, 1234u);
  EXPECT_EQ(back.meta.get("train.step"), "7");
  const auto w2 = back.weights<float>();
  const std::vector<std::int32_t> ids{1, 2, 3, 4};
  const auto a = decoder_forward<float>(ids, c, w);
  const auto b = decoder_forward<float>(ids, c, w2);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Checkpoint, RejectsBadMagic) {
  std::stringstream buf("XXXX garbage");
  EXPECT_THROW(read_checkpoint(buf), IoError);
}
