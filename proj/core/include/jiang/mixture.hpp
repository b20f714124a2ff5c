#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/tokenizer.hpp"

namespace jiang {

// Per-source sampling proportions. Construction normalises them so that
// they sum to exactly 1.0.
class MixtureSpec {
 public:
  explicit MixtureSpec(std::vector<std::pair<std::string, double>> proportions);

  // Chinese Internet 43.68%, Wikipedia 5.15%, ThePile 17.73%, GitHub 18.76%,
  // CLCF 9.63%, business research reports 3.54%, ULCF 1.38%, LCCC 0.11%.
  static MixtureSpec table1();
  static const std::vector<std::pair<std::string, double>>& table1_raw();

  const std::vector<std::pair<std::string, double>>& proportions() const { return proportions_; }
  // Throws ContractError for a source the spec does not name.
  double proportion(const std::string& source) const;

  // "mix.<source>=<weight>" lines.
  void write_to(KeyValues& kv) const;
  static MixtureSpec from(const KeyValues& kv);

 private:
  std::vector<std::pair<std::string, double>> proportions_;
  std::vector<double> cumulative_;
  friend class MixtureSampler;
};

class MixtureSampler {
 public:
  MixtureSampler(const MixtureSpec& spec, std::uint64_t seed);
  // Index into spec.proportions().
  std::size_t next();
  const std::string& next_source() { return spec_.proportions()[next()].first; }

 private:
  MixtureSpec spec_;
  std::mt19937_64 rng_;
};

// Source index counts for `draws` draws.
std::vector<std::uint64_t> mixture_counts(const MixtureSpec& spec, std::uint64_t draws, std::uint64_t seed);

struct MixtureStream {
  std::vector<TokenId> tokens;
  std::vector<std::string> sequence_sources;  // one entry per emitted sequence
};

// Interleaves fixed-length sequences, each cut from the packed stream of a
// source drawn by proportion. Every source's documents are joined with the
// separator token and recycled when exhausted. Throws ContractError when the
// spec names a source that is missing or empty.
MixtureStream mixture_sample(const std::map<std::string, std::vector<std::vector<TokenId>>>& sources,
                             const MixtureSpec& spec, std::uint64_t total_tokens, std::size_t seq_len,
                             TokenId separator, std::uint64_t seed);

}  // namespace jiang
