#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jiang/config.hpp"

namespace jiang {

using Embedding = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  // Unit-norm vector of length dim(). Throws ContractError on empty text.
  virtual Embedding embed(std::string_view text) const = 0;
};

// Counts of character trigrams hashed (FNV-1a) into fixed buckets, then
// L2-normalised. Texts shorter than three characters hash as one gram.
class TrigramEmbedder final : public Embedder {
 public:
  explicit TrigramEmbedder(std::size_t buckets = 256);
  std::size_t dim() const override { return buckets_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t buckets_;
};

double cosine(std::span<const double> a, std::span<const double> b);

struct DiversityConfig {
  double candidate_quantile = 0.10;
  std::size_t target_count = 1;
  std::uint64_t seed = 0;
  // Bottom quantile taken over the remaining documents; when false, its
  // size is computed from the full document count.
  bool quantile_over_remaining = true;

  void validate() const;
  void write_to(KeyValues& kv) const;  // "select." keys
  static DiversityConfig from(const KeyValues& kv);
};

// Grows a candidate pool: one uniform pick, then repeatedly a uniform pick
// among the ceil(q·n) remaining documents least similar to the pool (max
// cosine against pool members, ties by id). Returns ids in pick order.
std::vector<std::string> diversity_select(const std::vector<std::string>& ids,
                                          const std::vector<Embedding>& embeddings, const DiversityConfig& cfg);

double mean_pairwise_cosine(const std::vector<const Embedding*>& vectors);

}  // namespace jiang
