#include "jiang/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "jiang/error.hpp"
#include "jiang/utf8.hpp"
#include "json.hpp"

namespace jiang {

namespace {

// Log-probabilities of row `r` of a [T x V] logits tensor.
std::vector<double> log_softmax_row(const Tensor<float>& logits, std::size_t r) {
  const std::size_t v = logits.dim(1);
  const auto row = logits.data().subspan(r * v, v);
  double mx = -std::numeric_limits<double>::infinity();
  for (const float x : row) mx = std::max(mx, static_cast<double>(x));
  double z = 0.0;
  for (const float x : row) z += std::exp(static_cast<double>(x) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t i = 0; i < v; ++i) out[i] = static_cast<double>(row[i]) - lse;
  return out;
}

double logprob_at(const Tensor<float>& logits, std::size_t r, TokenId target) {
  const std::size_t v = logits.dim(1);
  const auto row = logits.data().subspan(r * v, v);
  double mx = -std::numeric_limits<double>::infinity();
  for (const float x : row) mx = std::max(mx, static_cast<double>(x));
  double z = 0.0;
  for (const float x : row) z += std::exp(static_cast<double>(x) - mx);
  return static_cast<double>(row[static_cast<std::size_t>(target)]) - mx - std::log(z);
}

// Negative log-likelihood of tokens[1..] given their prefixes; windows of
// max_seq_len overlap by one token so each target is scored exactly once.
std::pair<double, std::size_t> sequence_nll(const ModelConfig& config, const DecoderWeights<float>& weights,
                                            std::span<const TokenId> tokens) {
  NoGradGuard no_grad;
  const std::size_t w = config.max_seq_len;
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + 1 < tokens.size(); start += w - 1) {
    const std::size_t len = std::min(w, tokens.size() - start);
    const auto window = tokens.subspan(start, len);
    const auto logits = decoder_forward<float>(window.first(len - 1), config, weights);
    for (std::size_t i = 0; i + 1 < len; ++i) {
      nll -= logprob_at(logits, i, window[i + 1]);
      ++count;
    }
    if (w < 2) break;
  }
  return {nll, count};
}

}  // namespace

double evaluate_ppl_tokens(const ModelConfig& config, const DecoderWeights<float>& weights,
                           std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw ContractError("evaluate_ppl: need at least two tokens");
  if (config.max_seq_len < 2) throw ContractError("evaluate_ppl: max_seq_len must be >= 2");
  const auto [nll, count] = sequence_nll(config, weights, tokens);
  return std::exp(nll / static_cast<double>(count));
}

double evaluate_ppl(const ModelConfig& config, const DecoderWeights<float>& weights, const Vocabulary& vocab,
                    const std::vector<std::string>& texts) {
  if (texts.empty()) throw ContractError("evaluate_ppl: empty text set");
  if (config.max_seq_len < 2) throw ContractError("evaluate_ppl: max_seq_len must be >= 2");
  const TokenId eot = vocab.eot_id();
  std::vector<double> per_doc;
  std::size_t count = 0;
  for (const auto& text : texts) {
    std::vector<TokenId> ids{eot};
    const auto body = vocab.encode(text);
    if (body.empty()) continue;
    ids.insert(ids.end(), body.begin(), body.end());
    const auto [nll, n] = sequence_nll(config, weights, ids);
    per_doc.push_back(nll);
    count += n;
  }
  if (count == 0) throw ContractError("evaluate_ppl: every text is empty");
  // Summing in sorted order keeps the result independent of document order.
  std::sort(per_doc.begin(), per_doc.end());
  const double total = std::accumulate(per_doc.begin(), per_doc.end(), 0.0);
  return std::exp(total / static_cast<double>(count));
}

std::vector<McItem> load_mc_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open task file " + path.string());
  std::vector<McItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      McItem item;
      item.context = j.at("context").get<std::string>();
      item.choices = j.at("choices").get<std::vector<std::string>>();
      const auto answer = j.at("answer").get<std::int64_t>();
      if (answer < 0) throw IoError("negative answer index");
      item.answer = static_cast<std::size_t>(answer);
      items.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return items;
}

McResult evaluate_multichoice(const ModelConfig& config, const DecoderWeights<float>& weights,
                              const Vocabulary& vocab, const std::vector<McItem>& items,
                              McNormalization normalization) {
  if (items.empty()) throw ContractError("evaluate_multichoice: no items");
  NoGradGuard no_grad;
  const TokenId eot = vocab.eot_id();
  McResult result;
  std::size_t correct = 0;
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto& item = items[n];
    if (item.choices.size() < 2) throw ContractError("item " + std::to_string(n) + " has fewer than two choices");
    if (item.answer >= item.choices.size()) throw ContractError("item " + std::to_string(n) + " answer out of range");
    std::vector<TokenId> ctx{eot};
    const auto body = vocab.encode(item.context);
    ctx.insert(ctx.end(), body.begin(), body.end());

    McItemScore score;
    for (std::size_t c = 0; c < item.choices.size(); ++c) {
      const auto cont = vocab.encode(item.choices[c]);
      if (cont.empty()) throw ContractError("item " + std::to_string(n) + " choice " + std::to_string(c) + " is empty");
      if (cont.size() >= config.max_seq_len) throw ContractError("choice longer than max_seq_len");
      std::vector<TokenId> full = ctx;
      full.insert(full.end(), cont.begin(), cont.end());
      if (full.size() > config.max_seq_len) full.erase(full.begin(), full.end() - static_cast<std::ptrdiff_t>(config.max_seq_len));
      const auto logits =
          decoder_forward<float>(std::span<const TokenId>(full).first(full.size() - 1), config, weights);
      double lp = 0.0;
      const std::size_t first = full.size() - cont.size();
      for (std::size_t i = first; i < full.size(); ++i) lp += logprob_at(logits, i - 1, full[i]);
      if (normalization == McNormalization::per_char) lp /= static_cast<double>(utf8::length(item.choices[c]));
      score.scores.push_back(lp);
    }
    const auto best = std::max_element(score.scores.begin(), score.scores.end());
    score.predicted = static_cast<std::size_t>(best - score.scores.begin());
    score.tied = std::count(score.scores.begin(), score.scores.end(), *best) > 1;
    score.correct = score.predicted == item.answer;
    if (score.tied) ++result.ties;
    if (score.correct) ++correct;
    result.items.push_back(std::move(score));
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  return result;
}

Generation generate(const ModelConfig& config, const DecoderWeights<float>& weights, const Vocabulary& vocab,
                    const std::string& prompt, const GenerateOptions& options) {
  if (options.strategy != SamplingStrategy::greedy && !(options.temperature > 0.0)) {
    throw ContractError("generate: temperature must be positive");
  }
  NoGradGuard no_grad;
  const TokenId eot = vocab.eot_id();
  std::vector<TokenId> ids{eot};
  const auto body = vocab.encode(prompt);
  ids.insert(ids.end(), body.begin(), body.end());
  if (ids.size() > config.max_seq_len) {
    throw ContractError("generate: prompt is " + std::to_string(ids.size()) + " tokens, max_seq_len is " +
                        std::to_string(config.max_seq_len));
  }
  std::mt19937_64 rng(options.seed);
  Generation gen;
  for (std::size_t step = 0; step < options.max_new; ++step) {
    const std::size_t start = ids.size() > config.max_seq_len ? ids.size() - config.max_seq_len : 0;
    const auto logits = decoder_forward<float>(std::span<const TokenId>(ids).subspan(start), config, weights);
    const auto lp = log_softmax_row(logits, logits.dim(0) - 1);

    TokenId next = 0;
    if (options.strategy == SamplingStrategy::greedy) {
      next = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    } else {
      std::vector<std::size_t> order(lp.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::size_t keep = lp.size();
      if (options.strategy == SamplingStrategy::top_k && options.top_k > 0) keep = std::min(keep, options.top_k);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });
      order.resize(keep);
      std::vector<double> weights_k(keep);
      for (std::size_t i = 0; i < keep; ++i) weights_k[i] = std::exp((lp[order[i]] - lp[order[0]]) / options.temperature);
      const double total = std::accumulate(weights_k.begin(), weights_k.end(), 0.0);
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      next = static_cast<TokenId>(order[0]);
      for (std::size_t i = 0; i < keep; ++i) {
        if (u < weights_k[i]) {
          next = static_cast<TokenId>(order[i]);
          break;
        }
        u -= weights_k[i];
      }
    }
    if (next == eot) break;
    ids.push_back(next);
    gen.tokens.push_back(next);
  }
  gen.text = vocab.decode(gen.tokens);
  return gen;
}

}  // namespace jiang
