#include "jiang/utf8.hpp"

namespace jiang::utf8 {

namespace {

bool is_continuation(unsigned char b) { return (b & 0xC0U) == 0x80U; }

}  // namespace

std::size_t sequence_length(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return 0;
  const auto b0 = static_cast<unsigned char>(text[pos]);
  std::size_t len = 0;
  char32_t min_cp = 0;
  if (b0 < 0x80U) return 1;
  if ((b0 & 0xE0U) == 0xC0U) {
    len = 2;
    min_cp = 0x80;
  } else if ((b0 & 0xF0U) == 0xE0U) {
    len = 3;
    min_cp = 0x800;
  } else if ((b0 & 0xF8U) == 0xF0U) {
    len = 4;
    min_cp = 0x10000;
  } else {
    return 0;
  }
  if (pos + len > text.size()) return 0;
  char32_t cp = b0 & (0x7FU >> len);
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[pos + i]);
    if (!is_continuation(b)) return 0;
    cp = (cp << 6) | (b & 0x3FU);
  }
  if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

Decoded decode_at(std::string_view text, std::size_t pos) {
  const std::size_t len = sequence_length(text, pos);
  const auto b0 = static_cast<unsigned char>(text[pos]);
  if (len == 0) return {static_cast<char32_t>(b0), 1, false};
  if (len == 1) return {static_cast<char32_t>(b0), 1, true};
  char32_t cp = b0 & (0x7FU >> len);
  for (std::size_t i = 1; i < len; ++i) {
    cp = (cp << 6) | (static_cast<unsigned char>(text[pos + i]) & 0x3FU);
  }
  return {cp, len, true};
}

bool is_valid(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t len = sequence_length(text, pos);
    if (len == 0) return false;
    pos += len;
  }
  return true;
}

std::size_t length(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size(); ++n) pos += decode_at(text, pos).length;
  return n;
}

std::string encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::vector<std::string_view> characters(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t len = decode_at(text, pos).length;
    out.push_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

bool is_cjk_ideograph(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||    // URO
         (cp >= 0x3400 && cp <= 0x4DBF) ||    // Ext A
         (cp >= 0x20000 && cp <= 0x2A6DF) ||  // Ext B
         (cp >= 0x2A700 && cp <= 0x2EBEF) ||  // Ext C-F
         (cp >= 0x2EBF0 && cp <= 0x2EE5F) ||  // Ext I
         (cp >= 0x30000 && cp <= 0x323AF);    // Ext G-H
}

bool is_whitespace(char32_t cp) {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case U'\v':
    case U'\f':
    case 0x00A0:
    case 0x3000:
      return true;
    default:
      return false;
  }
}

}  // namespace jiang::utf8
