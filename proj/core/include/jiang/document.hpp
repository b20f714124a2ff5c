#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jiang/config.hpp"

namespace jiang {

struct DocumentStats {
  std::size_t english_word_count = 0;  // maximal runs of ASCII letters
  std::size_t chinese_char_count = 0;  // CJK unified ideographs
  std::size_t char_length = 0;         // code points
  std::size_t max_punctuationless_run = 0;

  bool operator==(const DocumentStats&) const = default;
};

// ASCII punctuation, General Punctuation, CJK Symbols and Punctuation,
// fullwidth ASCII punctuation and the halfwidth CJK marks.
bool is_default_punctuation(char32_t cp);

using PunctuationFn = std::function<bool(char32_t)>;

// Throws ContractError on invalid UTF-8.
DocumentStats compute_stats(std::string_view text, const PunctuationFn& is_punct = is_default_punctuation);

struct Document {
  std::string id;
  std::string source;
  std::string text;
  DocumentStats stats;
  std::optional<std::string> verdict;  // reject reason, set by filtering

  static Document make(std::string id, std::string source, std::string text);
};

// Reject reasons, in evaluation order.
inline constexpr std::string_view kRejectTooShort = "too_short";
inline constexpr std::string_view kRejectPunctuationRun = "punctuation_run";
inline constexpr std::string_view kRejectLangCount = "lang_count";
inline constexpr std::string_view kRejectNsfw = "nsfw";
inline constexpr std::string_view kRejectInvalidUtf8 = "invalid_utf8";

struct FilterRules {
  std::size_t min_chars = 50;
  std::size_t max_punctuationless_run = 2048;
  std::size_t max_nsfw_terms = 3;  // rejected when the count exceeds this
  std::size_t min_lang_tokens = 20;
  std::vector<std::string> nsfw_terms;
  std::string nsfw_list_path;  // informational; recorded in manifests

  void validate() const;

  // Term file: one term per line, '#' comments and blank lines skipped.
  // Throws IoError when the file cannot be read.
  static std::vector<std::string> load_terms(const std::filesystem::path& path);

  // Keys are prefixed with "filter."; "filter.nsfw_list" names a term file
  // that is loaded by from().
  void write_to(KeyValues& kv) const;
  static FilterRules from(const KeyValues& kv);
};

// Case-insensitive occurrences of any term, counted without overlap. An
// occurrence only counts when it is not glued to a neighbouring ASCII
// letter or digit on a side where the term itself ends in one.
std::size_t count_nsfw(std::string_view text, const std::vector<std::string>& terms);

// First rule that fires, or nullopt when the document is kept.
std::optional<std::string> filter_document(const Document& doc, const FilterRules& rules);

}  // namespace jiang
