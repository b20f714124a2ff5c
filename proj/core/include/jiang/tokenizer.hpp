#pragma once

// Byte-level BPE with an atomic single-character extension table.
//
// Token ids are laid out as
//   [0, 256)                       raw bytes
//   [256, 256 + merged)            tokens created by merges, in merge order
//   next S ids                     special tokens (end-of-text first)
//   remaining ids                  extension characters, in insertion order
// Extending a vocabulary only appends ids, so an extended vocabulary is
// prefix-compatible with the one it came from.
//
// Merges never join bytes across a UTF-8 character boundary unless the
// result is a run of whole characters. This keeps every token either inside
// one character or made of whole characters, which is what lets extension
// tokens split text without ever increasing a token count.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jiang/model.hpp"

namespace jiang {

using TokenId = std::int32_t;

inline constexpr std::string_view kEndOfText = "<|endoftext|>";

struct TokenSpan {
  TokenId id;
  std::size_t begin;  // byte offsets into the encoded text
  std::size_t end;
};

class Vocabulary {
 public:
  // 256 byte tokens plus the given special tokens and no merges.
  explicit Vocabulary(std::vector<std::string> specials = {std::string(kEndOfText)});

  std::size_t size() const { return tokens_.size(); }
  std::size_t merge_count() const { return merges_.size(); }
  // Merge rules as (left bytes, right bytes) in priority order.
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& extension_chars() const { return extension_; }
  const std::vector<std::string>& special_tokens() const { return specials_; }

  const std::string& token_bytes(TokenId id) const;
  std::optional<TokenId> special_id(std::string_view name) const;
  TokenId eot_id() const;
  std::optional<TokenId> extension_id(std::string_view ch) const;

  // True when every id of *this means the same bytes in `other`.
  bool is_prefix_of(const Vocabulary& other) const;

  // Special-token names in the text are not interpreted; they encode as
  // ordinary bytes.
  std::vector<TokenId> encode(std::string_view text) const;
  std::vector<TokenSpan> encode_with_offsets(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  // JVOC text: "JVOC 1", one merge per line as two space-separated hex byte
  // strings, an "EXT" line followed by one character per line, then a
  // "SPECIAL" line followed by one special token per line.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return serialize() == other.serialize(); }

 private:
  friend Vocabulary train_bpe(std::string_view, std::int64_t, std::vector<std::string>);
  friend Vocabulary extend_vocab(const Vocabulary&, std::span<const std::string>);

  static Vocabulary build(const std::vector<std::pair<std::string, std::string>>& merges,
                          std::vector<std::string> specials, const std::vector<std::string>& extension);
  void append_merge(const std::string& left, const std::string& right);
  void append_special(const std::string& name);
  void append_extension(const std::string& ch);
  void encode_segment(std::string_view bytes, std::size_t offset, std::vector<TokenSpan>& out) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> byte_token_ids_;  // bytes + merged tokens
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::uint64_t, std::pair<std::int32_t, TokenId>> merge_table_;  // pair -> (rank, result)
  std::vector<std::string> specials_;
  std::unordered_map<std::string, TokenId> special_ids_;
  std::vector<std::string> extension_;
  std::unordered_map<std::string, TokenId> extension_ids_;
};

// Splits text before every whitespace run that follows non-whitespace, so
// pieces look like "hello", " world", "  x". Each CJK ideograph is a piece of
// its own, so merges never build multi-character Chinese tokens.
std::vector<std::string_view> pretokenize(std::string_view text);

// Whether a byte string may be produced by a merge: a run of whole UTF-8
// characters, or bytes that all lie inside a single character.
bool is_char_aligned(std::string_view bytes);

// Greedy BPE over whitespace pre-tokenized pieces: repeatedly merges the
// most frequent adjacent pair, breaking ties by the lexicographically
// smaller (left bytes, right bytes). Stops early if no mergeable pair
// remains.
Vocabulary train_bpe(std::string_view corpus, std::int64_t target_merges,
                     std::vector<std::string> specials = {std::string(kEndOfText)});

// Adds an atomic token for each character that does not already encode to
// a single token. Throws ContractError for entries that are not exactly one
// valid UTF-8 character or that are line breaks.
Vocabulary extend_vocab(const Vocabulary& vocab, std::span<const std::string> chars);

// Fraction of CJK ideograph occurrences in `corpus` that encode as exactly
// one token. Throws ContractError when the corpus has none.
double coverage(const Vocabulary& vocab, std::string_view corpus);

// One character per line; blank lines and lines starting with '#' skipped.
std::vector<std::string> load_char_list(const std::filesystem::path& path);

// Grows the embedding (and untied output head) from `old_vocab` to
// `new_vocab`. Existing rows are copied bit-for-bit; new rows are drawn from
// a normal distribution matching the mean and standard deviation of the
// existing entries.
template <typename T>
DecoderWeights<T> resize_embeddings(const DecoderWeights<T>& weights, const Vocabulary& old_vocab,
                                    const Vocabulary& new_vocab, std::uint64_t seed);

}  // namespace jiang
