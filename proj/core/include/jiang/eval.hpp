#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jiang/model.hpp"
#include "jiang/tokenizer.hpp"

namespace jiang {

// exp(mean token cross-entropy). Each document is scored on its own,
// preceded by end-of-text, in windows of at most max_seq_len tokens.
// Throws ContractError on an empty set.
double evaluate_ppl(const ModelConfig& config, const DecoderWeights<float>& weights, const Vocabulary& vocab,
                    const std::vector<std::string>& texts);

// Same metric over one token sequence scored in max_seq_len windows.
double evaluate_ppl_tokens(const ModelConfig& config, const DecoderWeights<float>& weights,
                           std::span<const TokenId> tokens);

struct McItem {
  std::string context;
  std::vector<std::string> choices;
  std::size_t answer = 0;
};

// JSONL lines {"context","choices":[...],"answer":int}.
std::vector<McItem> load_mc_task(const std::filesystem::path& path);

enum class McNormalization { none, per_char };

struct McItemScore {
  std::vector<double> scores;
  std::size_t predicted = 0;
  bool tied = false;  // top score shared by several choices
  bool correct = false;
};

struct McResult {
  double accuracy = 0.0;
  std::size_t ties = 0;
  std::vector<McItemScore> items;
};

// Sum of choice-token log-probabilities given the context, optionally
// divided by the choice's character count. The lowest index wins ties.
McResult evaluate_multichoice(const ModelConfig& config, const DecoderWeights<float>& weights,
                              const Vocabulary& vocab, const std::vector<McItem>& items,
                              McNormalization normalization = McNormalization::none);

enum class SamplingStrategy { greedy, temperature, top_k };

struct GenerateOptions {
  std::size_t max_new = 32;
  SamplingStrategy strategy = SamplingStrategy::greedy;
  double temperature = 1.0;
  std::size_t top_k = 0;
  std::uint64_t seed = 0;
};

struct Generation {
  std::vector<TokenId> tokens;  // continuation only
  std::string text;
};

// Throws ContractError when the prompt does not fit in max_seq_len.
Generation generate(const ModelConfig& config, const DecoderWeights<float>& weights, const Vocabulary& vocab,
                    const std::string& prompt, const GenerateOptions& options);

}  // namespace jiang
