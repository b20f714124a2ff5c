#include <benchmark/benchmark.h>

#include <random>

#include "jiang/flash_attention.hpp"
#include "jiang/model.hpp"

namespace {

using jiang::Tensor;

Tensor<float> randn(std::size_t heads, std::size_t t, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  std::vector<float> data(heads * t * d);
  for (auto& v : data) v = n(rng);
  return Tensor<float>({heads, t, d}, std::move(data));
}

void BM_NaiveAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto q = randn(4, t, 64, 1), k = randn(4, t, 64, 2), v = randn(4, t, 64, 3);
  jiang::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(jiang::attention(q, k, v, true));
  state.SetComplexityN(state.range(0));
}

void BM_TiledAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto q = randn(4, t, 64, 1), k = randn(4, t, 64, 2), v = randn(4, t, 64, 3);
  const jiang::flash::TileConfig tiles{64, 64};
  for (auto _ : state) benchmark::DoNotOptimize(jiang::flash::tiled_attention(q, k, v, true, tiles));
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_NaiveAttention)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TiledAttention)->RangeMultiplier(2)->Range(128, 1024)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
