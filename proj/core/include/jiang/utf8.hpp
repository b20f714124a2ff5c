#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace jiang::utf8 {

// Length in bytes of the well-formed UTF-8 sequence starting at text[pos],
// or 0 when the bytes there are not a valid encoding (overlongs and
// surrogates count as invalid).
std::size_t sequence_length(std::string_view text, std::size_t pos);

// Decodes the code point at text[pos]. Invalid bytes decode to themselves
// with length 1 so that every byte string can be walked.
struct Decoded {
  char32_t code_point;
  std::size_t length;
  bool valid;
};
Decoded decode_at(std::string_view text, std::size_t pos);

bool is_valid(std::string_view text);

// Number of code points (invalid bytes count one each).
std::size_t length(std::string_view text);

std::string encode(char32_t cp);

// Splits into per-character substrings; invalid bytes become 1-byte pieces.
std::vector<std::string_view> characters(std::string_view text);

// CJK Unified Ideographs, including extensions A through H. Compatibility
// ideographs are excluded.
bool is_cjk_ideograph(char32_t cp);

bool is_whitespace(char32_t cp);

}  // namespace jiang::utf8
