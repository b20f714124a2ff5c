#include "jiang/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "jiang/error.hpp"
#include "jiang/utf8.hpp"

namespace jiang {

TrigramEmbedder::TrigramEmbedder(std::size_t buckets) : buckets_(buckets) {
  if (buckets == 0) throw ContractError("TrigramEmbedder: bucket count must be positive");
}

Embedding TrigramEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw ContractError("embed: empty text");
  const auto chars = utf8::characters(text);
  Embedding v(buckets_, 0.0);
  if (chars.size() < 3) {
    v[fnv1a64(text) % buckets_] += 1.0;
  } else {
    for (std::size_t i = 0; i + 2 < chars.size(); ++i) {
      const std::size_t begin = static_cast<std::size_t>(chars[i].data() - text.data());
      const std::size_t end = static_cast<std::size_t>(chars[i + 2].data() - text.data()) + chars[i + 2].size();
      v[fnv1a64(text.substr(begin, end - begin)) % buckets_] += 1.0;
    }
  }
  double norm = 0.0;
  for (const double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: vectors differ in length");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void DiversityConfig::validate() const {
  if (!(candidate_quantile > 0.0 && candidate_quantile <= 1.0)) {
    throw ContractError("candidate_quantile must be in (0, 1]");
  }
  if (target_count == 0) throw ContractError("target_count must be >= 1");
}

void DiversityConfig::write_to(KeyValues& kv) const {
  kv.set("select.candidate_quantile", format_double(candidate_quantile));
  kv.set("select.target_count", std::to_string(target_count));
  kv.set("select.quantile_over_remaining", quantile_over_remaining ? "true" : "false");
}

DiversityConfig DiversityConfig::from(const KeyValues& kv) {
  DiversityConfig c;
  c.candidate_quantile = kv.get_double("select.candidate_quantile", c.candidate_quantile);
  c.target_count = kv.get_uint("select.target_count", c.target_count);
  c.quantile_over_remaining = kv.get_bool("select.quantile_over_remaining", c.quantile_over_remaining);
  c.validate();
  return c;
}

std::vector<std::string> diversity_select(const std::vector<std::string>& ids,
                                          const std::vector<Embedding>& embeddings, const DiversityConfig& cfg) {
  cfg.validate();
  if (ids.size() != embeddings.size()) throw ShapeError("diversity_select: ids and embeddings differ in count");
  if (ids.empty()) throw ContractError("diversity_select: no documents");
  if (cfg.target_count > ids.size()) {
    throw ContractError("diversity_select: target_count " + std::to_string(cfg.target_count) + " exceeds " +
                        std::to_string(ids.size()) + " documents");
  }
  const std::size_t n = ids.size();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::string> picked;
  std::vector<bool> in_pool(n, false);
  std::vector<double> sim(n, -std::numeric_limits<double>::infinity());

  const auto add = [&](std::size_t idx) {
    in_pool[idx] = true;
    picked.push_back(ids[idx]);
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_pool[i]) sim[i] = std::max(sim[i], cosine(embeddings[i], embeddings[idx]));
    }
  };

  add(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<std::size_t> remaining;
  while (picked.size() < cfg.target_count) {
    remaining.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_pool[i]) remaining.push_back(i);
    }
    const double base = static_cast<double>(cfg.quantile_over_remaining ? remaining.size() : n);
    const auto k = std::min(remaining.size(),
                            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.candidate_quantile * base))));
    std::partial_sort(remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(k), remaining.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sim[a] != sim[b]) return sim[a] < sim[b];
                        return ids[a] < ids[b];
                      });
    add(remaining[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)]);
  }
  return picked;
}

double mean_pairwise_cosine(const std::vector<const Embedding*>& vectors) {
  if (vectors.size() < 2) throw ContractError("mean_pairwise_cosine: need at least two vectors");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      total += cosine(*vectors[i], *vectors[j]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace jiang
