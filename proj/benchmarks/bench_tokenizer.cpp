#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "jiang/tokenizer.hpp"

namespace {

std::string corpus() {
  std::ifstream in(std::string(JIANG_DATA_DIR) + "/zh_desk_corpus.txt", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void BM_TrainBpe(benchmark::State& state) {
  const auto text = corpus();
  for (auto _ : state) benchmark::DoNotOptimize(jiang::train_bpe(text, state.range(0)));
}

void BM_Encode(benchmark::State& state) {
  const auto text = corpus();
  const auto vocab = jiang::train_bpe(text, 500);
  for (auto _ : state) benchmark::DoNotOptimize(vocab.encode(text));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}

}  // namespace

BENCHMARK(BM_TrainBpe)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Encode)->Unit(benchmark::kMillisecond);
