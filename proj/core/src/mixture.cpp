#include "jiang/mixture.hpp"

#include <algorithm>
#include <cmath>

#include "jiang/error.hpp"

namespace jiang {

namespace {

double ordered_sum(const std::vector<std::pair<std::string, double>>& p) {
  double s = 0.0;
  for (const auto& [name, w] : p) s += w;
  return s;
}

}  // namespace

MixtureSpec::MixtureSpec(std::vector<std::pair<std::string, double>> proportions)
    : proportions_(std::move(proportions)) {
  if (proportions_.empty()) throw ContractError("mixture spec has no sources");
  for (std::size_t i = 0; i < proportions_.size(); ++i) {
    const auto& [name, w] = proportions_[i];
    if (name.empty()) throw ContractError("mixture spec has an empty source tag");
    if (!(w > 0.0) || !std::isfinite(w)) throw ContractError("mixture proportion for '" + name + "' must be positive");
    for (std::size_t j = 0; j < i; ++j) {
      if (proportions_[j].first == name) throw ContractError("mixture source '" + name + "' listed twice");
    }
  }
  const double total = ordered_sum(proportions_);
  for (auto& [name, w] : proportions_) w /= total;
  // Push the rounding residue onto the largest share until the sum is exact.
  auto largest = std::max_element(proportions_.begin(), proportions_.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
  for (int i = 0; i < 8 && ordered_sum(proportions_) != 1.0; ++i) largest->second += 1.0 - ordered_sum(proportions_);

  double acc = 0.0;
  for (const auto& [name, w] : proportions_) cumulative_.push_back(acc += w);
  cumulative_.back() = 1.0;
}

const std::vector<std::pair<std::string, double>>& MixtureSpec::table1_raw() {
  static const std::vector<std::pair<std::string, double>> raw = {
      {"chinese_internet", 0.4368}, {"wikipedia", 0.0515}, {"the_pile", 0.1773},
      {"github", 0.1876},           {"clcf", 0.0963},      {"business_reports", 0.0354},
      {"ulcf", 0.0138},             {"lccc", 0.0011},
  };
  return raw;
}

MixtureSpec MixtureSpec::table1() { return MixtureSpec(table1_raw()); }

double MixtureSpec::proportion(const std::string& source) const {
  for (const auto& [name, w] : proportions_) {
    if (name == source) return w;
  }
  throw ContractError("mixture: unknown source '" + source + "'");
}

void MixtureSpec::write_to(KeyValues& kv) const {
  for (const auto& [name, w] : proportions_) kv.set("mix." + name, format_double(w));
}

MixtureSpec MixtureSpec::from(const KeyValues& kv) {
  std::vector<std::pair<std::string, double>> p;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("mix.", 0) == 0) p.emplace_back(key.substr(4), kv.get_double(key, 0.0));
  }
  if (p.empty()) return table1();
  return MixtureSpec(std::move(p));
}

MixtureSampler::MixtureSampler(const MixtureSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

std::size_t MixtureSampler::next() {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const auto& c = spec_.cumulative_;
  const auto it = std::upper_bound(c.begin(), c.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - c.begin()), c.size() - 1);
}

std::vector<std::uint64_t> mixture_counts(const MixtureSpec& spec, std::uint64_t draws, std::uint64_t seed) {
  MixtureSampler sampler(spec, seed);
  std::vector<std::uint64_t> counts(spec.proportions().size(), 0);
  for (std::uint64_t i = 0; i < draws; ++i) ++counts[sampler.next()];
  return counts;
}

MixtureStream mixture_sample(const std::map<std::string, std::vector<std::vector<TokenId>>>& sources,
                             const MixtureSpec& spec, std::uint64_t total_tokens, std::size_t seq_len,
                             TokenId separator, std::uint64_t seed) {
  if (seq_len == 0) throw ContractError("mixture_sample: seq_len must be positive");
  struct Cursor {
    std::vector<TokenId> packed;
    std::size_t pos = 0;
  };
  std::vector<Cursor> cursors;
  for (const auto& [name, w] : spec.proportions()) {
    const auto it = sources.find(name);
    if (it == sources.end()) throw ContractError("mixture_sample: unknown source tag '" + name + "'");
    Cursor c;
    for (const auto& doc : it->second) {
      c.packed.insert(c.packed.end(), doc.begin(), doc.end());
      c.packed.push_back(separator);
    }
    if (it->second.empty()) throw ContractError("mixture_sample: source '" + name + "' is empty");
    cursors.push_back(std::move(c));
  }

  MixtureSampler sampler(spec, seed);
  MixtureStream out;
  out.tokens.reserve(total_tokens);
  while (out.tokens.size() < total_tokens) {
    const std::size_t s = sampler.next();
    auto& c = cursors[s];
    const std::size_t len = std::min<std::uint64_t>(seq_len, total_tokens - out.tokens.size());
    for (std::size_t i = 0; i < len; ++i) {
      out.tokens.push_back(c.packed[c.pos]);
      c.pos = (c.pos + 1) % c.packed.size();
    }
    out.sequence_sources.push_back(spec.proportions()[s].first);
  }
  return out;
}

}  // namespace jiang
