#include "jiang/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "jiang/error.hpp"
#include "jiang/utf8.hpp"

namespace jiang {

namespace {

constexpr std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

std::string to_hex(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (const char c : bytes) {
    const auto b = static_cast<unsigned char>(c);
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::string from_hex(std::string_view hex, std::size_t line_no) {
  const auto nibble = [line_no](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw IoError("vocabulary: bad hex digit on line " + std::to_string(line_no));
  };
  if (hex.empty() || hex.size() % 2 != 0) throw IoError("vocabulary: bad hex length on line " + std::to_string(line_no));
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  }
  return out;
}

void check_single_char(const std::string& ch) {
  if (ch.empty() || !utf8::is_valid(ch) || utf8::length(ch) != 1) {
    throw ContractError("extension entry '" + ch + "' is not a single UTF-8 character");
  }
  if (ch == "\n" || ch == "\r") throw ContractError("extension entry may not be a line break");
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> specials) {
  tokens_.reserve(256 + specials.size());
  for (int b = 0; b < 256; ++b) {
    tokens_.emplace_back(1, static_cast<char>(b));
    byte_token_ids_.emplace(tokens_.back(), static_cast<TokenId>(b));
  }
  for (const auto& s : specials) append_special(s);
}

Vocabulary Vocabulary::build(const std::vector<std::pair<std::string, std::string>>& merges,
                             std::vector<std::string> specials, const std::vector<std::string>& extension) {
  Vocabulary v(std::vector<std::string>{});
  for (const auto& [l, r] : merges) v.append_merge(l, r);
  for (const auto& s : specials) v.append_special(s);
  for (const auto& e : extension) v.append_extension(e);
  return v;
}

void Vocabulary::append_merge(const std::string& left, const std::string& right) {
  if (!specials_.empty() || !extension_.empty()) throw ContractError("merges must precede special/extension tokens");
  const auto l = byte_token_ids_.find(left);
  const auto r = byte_token_ids_.find(right);
  if (l == byte_token_ids_.end() || r == byte_token_ids_.end()) {
    throw IoError("vocabulary: merge references unknown token " + to_hex(left) + " " + to_hex(right));
  }
  const std::string merged = left + right;
  TokenId result = 0;
  if (const auto it = byte_token_ids_.find(merged); it != byte_token_ids_.end()) {
    result = it->second;
  } else {
    result = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(merged);
    byte_token_ids_.emplace(merged, result);
  }
  merge_table_.emplace(pair_key(l->second, r->second),
                       std::make_pair(static_cast<std::int32_t>(merges_.size()), result));
  merges_.emplace_back(left, right);
}

void Vocabulary::append_special(const std::string& name) {
  if (!extension_.empty()) throw ContractError("special tokens must precede extension tokens");
  if (name.empty() || name.find('\n') != std::string::npos) throw ContractError("invalid special token name");
  if (special_ids_.count(name)) return;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(name);
  specials_.push_back(name);
  special_ids_.emplace(name, id);
}

void Vocabulary::append_extension(const std::string& ch) {
  check_single_char(ch);
  if (extension_ids_.count(ch)) return;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(ch);
  extension_.push_back(ch);
  extension_ids_.emplace(ch, id);
}

const std::string& Vocabulary::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::special_id(std::string_view name) const {
  const auto it = special_ids_.find(std::string(name));
  if (it == special_ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::eot_id() const {
  const auto id = special_id(kEndOfText);
  if (!id) throw ContractError("vocabulary has no end-of-text token");
  return *id;
}

std::optional<TokenId> Vocabulary::extension_id(std::string_view ch) const {
  const auto it = extension_ids_.find(std::string(ch));
  if (it == extension_ids_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_prefix_of(const Vocabulary& other) const {
  if (other.tokens_.size() < tokens_.size()) return false;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] != other.tokens_[i]) return false;
  }
  // Same bytes could still mean a different kind of token.
  return std::equal(merges_.begin(), merges_.end(), other.merges_.begin(),
                    other.merges_.begin() + static_cast<std::ptrdiff_t>(std::min(merges_.size(), other.merges_.size()))) &&
         merges_.size() == other.merges_.size() &&
         std::equal(specials_.begin(), specials_.end(), other.specials_.begin(),
                    other.specials_.begin() +
                        static_cast<std::ptrdiff_t>(std::min(specials_.size(), other.specials_.size())));
}

void Vocabulary::encode_segment(std::string_view bytes, std::size_t offset, std::vector<TokenSpan>& out) const {
  if (bytes.empty()) return;
  std::vector<TokenId> ids(bytes.size());
  std::vector<std::size_t> starts(bytes.size() + 1);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    ids[i] = static_cast<TokenId>(static_cast<unsigned char>(bytes[i]));
    starts[i] = i;
  }
  starts[bytes.size()] = bytes.size();
  starts.resize(ids.size());

  while (ids.size() > 1) {
    std::int32_t best_rank = std::numeric_limits<std::int32_t>::max();
    TokenId best_left = 0;
    TokenId best_right = 0;
    TokenId best_result = 0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      const auto it = merge_table_.find(pair_key(ids[i], ids[i + 1]));
      if (it != merge_table_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_left = ids[i];
        best_right = ids[i + 1];
        best_result = it->second.second;
      }
    }
    if (best_rank == std::numeric_limits<std::int32_t>::max()) break;
    std::size_t w = 0;
    for (std::size_t i = 0; i < ids.size(); ++w) {
      if (i + 1 < ids.size() && ids[i] == best_left && ids[i + 1] == best_right) {
        ids[w] = best_result;
        starts[w] = starts[i];
        i += 2;
      } else {
        ids[w] = ids[i];
        starts[w] = starts[i];
        i += 1;
      }
    }
    ids.resize(w);
    starts.resize(w);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t end = i + 1 < ids.size() ? starts[i + 1] : bytes.size();
    out.push_back({ids[i], offset + starts[i], offset + end});
  }
}

std::vector<TokenSpan> Vocabulary::encode_with_offsets(std::string_view text) const {
  std::vector<TokenSpan> out;
  for (const std::string_view piece : pretokenize(text)) {
    const std::size_t base = static_cast<std::size_t>(piece.data() - text.data());
    std::size_t seg_start = 0;
    std::size_t pos = 0;
    while (pos < piece.size()) {
      const auto dec = utf8::decode_at(piece, pos);
      if (dec.valid && !extension_ids_.empty()) {
        const auto it = extension_ids_.find(std::string(piece.substr(pos, dec.length)));
        if (it != extension_ids_.end()) {
          encode_segment(piece.substr(seg_start, pos - seg_start), base + seg_start, out);
          out.push_back({it->second, base + pos, base + pos + dec.length});
          seg_start = pos + dec.length;
        }
      }
      pos += dec.length;
    }
    encode_segment(piece.substr(seg_start), base + seg_start, out);
  }
  return out;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  const auto spans = encode_with_offsets(text);
  std::vector<TokenId> ids;
  ids.reserve(spans.size());
  for (const auto& s : spans) ids.push_back(s.id);
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) out += token_bytes(id);
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out = "JVOC 1\n";
  for (const auto& [l, r] : merges_) out += to_hex(l) + " " + to_hex(r) + "\n";
  out += "EXT\n";
  for (const auto& e : extension_) out += e + "\n";
  out += "SPECIAL\n";
  for (const auto& s : specials_) out += s + "\n";
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  enum class Section { header, merges, ext, special } section = Section::header;
  std::vector<std::pair<std::string, std::string>> merges;
  std::vector<std::string> ext;
  std::vector<std::string> specials;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    switch (section) {
      case Section::header:
        if (line != "JVOC 1") throw IoError("vocabulary: missing 'JVOC 1' header");
        section = Section::merges;
        break;
      case Section::merges: {
        if (line == "EXT") {
          section = Section::ext;
          break;
        }
        const auto sp = line.find(' ');
        if (sp == std::string_view::npos) throw IoError("vocabulary: malformed merge on line " + std::to_string(line_no));
        merges.emplace_back(from_hex(line.substr(0, sp), line_no), from_hex(line.substr(sp + 1), line_no));
        break;
      }
      case Section::ext:
        if (line == "SPECIAL") {
          section = Section::special;
        } else if (!line.empty()) {
          ext.emplace_back(line);
        }
        break;
      case Section::special:
        if (!line.empty()) specials.emplace_back(line);
        break;
    }
  }
  if (section != Section::special) throw IoError("vocabulary: missing EXT/SPECIAL sections");
  try {
    return build(merges, std::move(specials), ext);
  } catch (const ContractError& e) {
    throw IoError(std::string("vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary to " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

// ---------------------------------------------------------------------------
// Free functions

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> pieces;
  std::size_t start = 0;
  std::size_t pos = 0;
  bool prev_space = true;
  while (pos < text.size()) {
    const auto dec = utf8::decode_at(text, pos);
    if (dec.valid && utf8::is_cjk_ideograph(dec.code_point)) {
      if (pos > start) pieces.push_back(text.substr(start, pos - start));
      pieces.push_back(text.substr(pos, dec.length));
      pos += dec.length;
      start = pos;
      prev_space = false;
      continue;
    }
    const bool space = dec.valid && utf8::is_whitespace(dec.code_point);
    if (space && !prev_space && pos > start) {
      pieces.push_back(text.substr(start, pos - start));
      start = pos;
    }
    prev_space = space;
    pos += dec.length;
  }
  if (start < text.size()) pieces.push_back(text.substr(start));
  return pieces;
}

bool is_char_aligned(std::string_view bytes) {
  if (utf8::is_valid(bytes)) return true;
  for (std::size_t i = 1; i < bytes.size(); ++i) {
    if ((static_cast<unsigned char>(bytes[i]) & 0xC0U) != 0x80U) return false;
  }
  return true;
}

Vocabulary train_bpe(std::string_view corpus, std::int64_t target_merges, std::vector<std::string> specials) {
  if (target_merges < 0) throw ContractError("train_bpe: target_merges must be >= 0");
  if (corpus.empty()) throw ContractError("train_bpe: corpus is empty");

  std::map<std::string, std::uint64_t> piece_counts;
  for (const auto piece : pretokenize(corpus)) ++piece_counts[std::string(piece)];

  struct Word {
    std::vector<TokenId> ids;
    std::int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(piece_counts.size());
  for (const auto& [piece, count] : piece_counts) {
    Word w{{}, static_cast<std::int64_t>(count)};
    for (const char c : piece) w.ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
    words.push_back(std::move(w));
  }

  Vocabulary vocab(std::vector<std::string>{});
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> where;
  std::unordered_map<std::uint64_t, bool> aligned;

  const auto add_pairs = [&](std::size_t wi, std::int64_t sign) {
    const auto& ids = words[wi].ids;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      const auto key = pair_key(ids[i], ids[i + 1]);
      counts[key] += sign * words[wi].freq;
      if (sign > 0) where[key].push_back(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

  for (std::int64_t m = 0; m < target_merges; ++m) {
    std::uint64_t best = 0;
    std::int64_t best_count = 0;
    for (const auto& [key, count] : counts) {
      if (count <= 0 || count < best_count) continue;
      const auto left = static_cast<TokenId>(key >> 32);
      const auto right = static_cast<TokenId>(key & 0xFFFFFFFFULL);
      auto [it, inserted] = aligned.try_emplace(key, false);
      if (inserted) it->second = is_char_aligned(vocab.tokens_[left] + vocab.tokens_[right]);
      if (!it->second) continue;
      if (count > best_count) {
        best = key;
        best_count = count;
        continue;
      }
      const auto bl = static_cast<TokenId>(best >> 32);
      const auto br = static_cast<TokenId>(best & 0xFFFFFFFFULL);
      const auto& l = vocab.tokens_[left];
      const auto& bls = vocab.tokens_[bl];
      if (l < bls || (l == bls && vocab.tokens_[right] < vocab.tokens_[br])) best = key;
    }
    if (best_count == 0) break;

    const auto left = static_cast<TokenId>(best >> 32);
    const auto right = static_cast<TokenId>(best & 0xFFFFFFFFULL);
    vocab.append_merge(vocab.tokens_[left], vocab.tokens_[right]);
    const TokenId result = vocab.merge_table_.at(best).second;

    auto affected = std::move(where[best]);
    where.erase(best);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (const std::size_t wi : affected) {
      auto& ids = words[wi].ids;
      bool present = false;
      for (std::size_t i = 0; i + 1 < ids.size() && !present; ++i) present = ids[i] == left && ids[i + 1] == right;
      if (!present) continue;
      add_pairs(wi, -1);
      std::size_t w = 0;
      for (std::size_t i = 0; i < ids.size(); ++w) {
        if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
          ids[w] = result;
          i += 2;
        } else {
          ids[w] = ids[i];
          i += 1;
        }
      }
      ids.resize(w);
      add_pairs(wi, +1);
    }
  }
  for (const auto& s : specials) vocab.append_special(s);
  return vocab;
}

Vocabulary extend_vocab(const Vocabulary& vocab, std::span<const std::string> chars) {
  Vocabulary out = vocab;
  for (const auto& ch : chars) {
    check_single_char(ch);
    if (out.encode(ch).size() == 1) continue;
    out.append_extension(ch);
  }
  return out;
}

double coverage(const Vocabulary& vocab, std::string_view corpus) {
  const auto spans = vocab.encode_with_offsets(corpus);
  std::vector<std::size_t> end_at(corpus.size() + 1, std::numeric_limits<std::size_t>::max());
  for (const auto& s : spans) end_at[s.begin] = s.end;
  std::uint64_t total = 0;
  std::uint64_t single = 0;
  for (std::size_t pos = 0; pos < corpus.size();) {
    const auto dec = utf8::decode_at(corpus, pos);
    if (dec.valid && utf8::is_cjk_ideograph(dec.code_point)) {
      ++total;
      if (end_at[pos] == pos + dec.length) ++single;
    }
    pos += dec.length;
  }
  if (total == 0) throw ContractError("coverage: corpus contains no CJK ideographs");
  return static_cast<double>(single) / static_cast<double>(total);
}

std::vector<std::string> load_char_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open character list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

template <typename T>
DecoderWeights<T> resize_embeddings(const DecoderWeights<T>& weights, const Vocabulary& old_vocab,
                                    const Vocabulary& new_vocab, std::uint64_t seed) {
  if (!old_vocab.is_prefix_of(new_vocab)) {
    throw ContractError("resize_embeddings: new vocabulary does not extend the old one");
  }
  if (weights.tok_emb.dim(0) != old_vocab.size()) {
    throw ContractError("resize_embeddings: embedding has " + std::to_string(weights.tok_emb.dim(0)) +
                        " rows but the old vocabulary has " + std::to_string(old_vocab.size()));
  }
  DecoderWeights<T> out = weights.clone();
  const std::size_t old_v = old_vocab.size();
  const std::size_t new_v = new_vocab.size();
  if (new_v == old_v) return out;

  std::mt19937_64 rng(seed);
  const auto moments = [](std::span<const T> values) {
    double sum = 0.0;
    double sq = 0.0;
    for (const T v : values) {
      sum += static_cast<double>(v);
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double n = static_cast<double>(values.size());
    const double mean = sum / n;
    return std::make_pair(mean, std::sqrt(std::max(0.0, sq / n - mean * mean)));
  };

  const std::size_t d = weights.tok_emb.dim(1);
  {
    const auto [mu, sigma] = moments(weights.tok_emb.data());
    std::normal_distribution<double> dist(mu, sigma);
    std::vector<T> data(weights.tok_emb.data().begin(), weights.tok_emb.data().end());
    data.reserve(new_v * d);
    for (std::size_t i = old_v * d; i < new_v * d; ++i) data.push_back(static_cast<T>(dist(rng)));
    out.tok_emb = Tensor<T>({new_v, d}, std::move(data), weights.tok_emb.requires_grad());
  }
  if (weights.lm_head.defined()) {
    const auto [mu, sigma] = moments(weights.lm_head.data());
    std::normal_distribution<double> dist(mu, sigma);
    const auto src = weights.lm_head.data();
    std::vector<T> data(d * new_v);
    for (std::size_t r = 0; r < d; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * old_v), old_v,
                  data.begin() + static_cast<std::ptrdiff_t>(r * new_v));
      for (std::size_t c = old_v; c < new_v; ++c) data[r * new_v + c] = static_cast<T>(dist(rng));
    }
    out.lm_head = Tensor<T>({d, new_v}, std::move(data), weights.lm_head.requires_grad());
  }
  return out;
}

template DecoderWeights<float> resize_embeddings<float>(const DecoderWeights<float>&, const Vocabulary&,
                                                        const Vocabulary&, std::uint64_t);
template DecoderWeights<double> resize_embeddings<double>(const DecoderWeights<double>&, const Vocabulary&,
                                                          const Vocabulary&, std::uint64_t);

}  // namespace jiang
