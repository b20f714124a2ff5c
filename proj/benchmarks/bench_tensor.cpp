#include <benchmark/benchmark.h>

#include <random>

#include "jiang/model.hpp"
#include "jiang/tensor.hpp"

namespace {

using jiang::Tensor;

Tensor<float> randn(std::size_t rows, std::size_t cols, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  std::vector<float> data(rows * cols);
  for (auto& v : data) v = n(rng);
  return Tensor<float>({rows, cols}, std::move(data), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = randn(n, n, 1), b = randn(n, n, 2);
  jiang::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(jiang::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * state.range(0) * state.range(0) * state.range(0));
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = randn(n, n, 1, true), b = randn(n, n, 2, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    jiang::backward(jiang::sum(jiang::matmul(a, b)));
  }
}

void BM_DecoderStep(benchmark::State& state) {
  jiang::ModelConfig c;
  c.d_model = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.vocab_size = 512;
  c.max_seq_len = 128;
  const auto w = jiang::init_weights<float>(c, 1);
  w.set_requires_grad(true);
  std::vector<std::int32_t> ids(129);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>((i * 37) % 512);
  const std::span<const std::int32_t> all(ids);
  for (auto _ : state) {
    w.zero_grad();
    const auto logits = jiang::decoder_forward<float>(all.first(128), c, w);
    jiang::backward(jiang::cross_entropy(logits, all.subspan(1)));
  }
  state.SetItemsProcessed(state.iterations() * 128);
}

}  // namespace

BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_DecoderStep)->Unit(benchmark::kMillisecond);
