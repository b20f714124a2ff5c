#include "jiang/document.hpp"

#include <algorithm>
#include <fstream>

#include "jiang/error.hpp"
#include "jiang/utf8.hpp"

namespace jiang {

namespace {

bool is_ascii_alnum(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

bool is_default_punctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
           (cp >= 0x7B && cp <= 0x7E);
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) || (cp >= 0x3001 && cp <= 0x3003) ||
         (cp >= 0x3008 && cp <= 0x3011) || (cp >= 0x3014 && cp <= 0x301F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
         (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65) ||
         cp == 0x00A1 || cp == 0x00A7 || cp == 0x00AB || cp == 0x00B6 || cp == 0x00B7 || cp == 0x00BB ||
         cp == 0x00BF || cp == 0x30FB || cp == 0xFE50 || cp == 0xFE51 || cp == 0xFE52 || cp == 0xFE54 ||
         cp == 0xFE55 || cp == 0xFE56 || cp == 0xFE57;
}

DocumentStats compute_stats(std::string_view text, const PunctuationFn& is_punct) {
  if (!utf8::is_valid(text)) throw ContractError("compute_stats: text is not valid UTF-8");
  DocumentStats s;
  std::size_t run = 0;
  bool in_word = false;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto d = utf8::decode_at(text, pos);
    pos += d.length;
    ++s.char_length;
    const bool letter = (d.code_point >= 'a' && d.code_point <= 'z') || (d.code_point >= 'A' && d.code_point <= 'Z');
    if (letter && !in_word) ++s.english_word_count;
    in_word = letter;
    if (utf8::is_cjk_ideograph(d.code_point)) ++s.chinese_char_count;
    if (is_punct(d.code_point)) {
      run = 0;
    } else {
      s.max_punctuationless_run = std::max(s.max_punctuationless_run, ++run);
    }
  }
  return s;
}

Document Document::make(std::string id, std::string source, std::string text) {
  Document doc{std::move(id), std::move(source), std::move(text), {}, std::nullopt};
  doc.stats = compute_stats(doc.text);
  return doc;
}

void FilterRules::validate() const {
  if (min_chars == 0 || max_punctuationless_run == 0 || max_nsfw_terms == 0 || min_lang_tokens == 0) {
    throw ContractError("filter thresholds must be positive");
  }
  for (const auto& t : nsfw_terms) {
    if (t.empty()) throw ContractError("nsfw term list contains an empty term");
  }
}

std::vector<std::string> FilterRules::load_terms(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read nsfw term list " + path.string());
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    terms.push_back(line);
  }
  return terms;
}

void FilterRules::write_to(KeyValues& kv) const {
  kv.set("filter.min_chars", std::to_string(min_chars));
  kv.set("filter.max_punctuationless_run", std::to_string(max_punctuationless_run));
  kv.set("filter.max_nsfw_terms", std::to_string(max_nsfw_terms));
  kv.set("filter.min_lang_tokens", std::to_string(min_lang_tokens));
  kv.set("filter.nsfw_list", nsfw_list_path);
  std::string joined;
  for (const auto& t : nsfw_terms) joined += t + "\x1f";
  kv.set("filter.nsfw_terms_hash", to_hex64(fnv1a64(joined)));
}

FilterRules FilterRules::from(const KeyValues& kv) {
  FilterRules r;
  r.min_chars = kv.get_uint("filter.min_chars", r.min_chars);
  r.max_punctuationless_run = kv.get_uint("filter.max_punctuationless_run", r.max_punctuationless_run);
  r.max_nsfw_terms = kv.get_uint("filter.max_nsfw_terms", r.max_nsfw_terms);
  r.min_lang_tokens = kv.get_uint("filter.min_lang_tokens", r.min_lang_tokens);
  r.nsfw_list_path = kv.get_string("filter.nsfw_list", "");
  if (!r.nsfw_list_path.empty()) r.nsfw_terms = load_terms(r.nsfw_list_path);
  r.validate();
  return r;
}

std::size_t count_nsfw(std::string_view text, const std::vector<std::string>& terms) {
  if (terms.empty()) return 0;
  const std::string lower = ascii_lower(text);
  std::vector<std::string> lowered;
  lowered.reserve(terms.size());
  for (const auto& t : terms) lowered.push_back(ascii_lower(t));
  // Longer terms first so "foobar" wins over "foo" at the same position.
  std::stable_sort(lowered.begin(), lowered.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

  std::size_t count = 0;
  for (std::size_t pos = 0; pos < lower.size();) {
    bool matched = false;
    for (const auto& t : lowered) {
      if (t.empty() || lower.compare(pos, t.size(), t) != 0) continue;
      const auto first = static_cast<unsigned char>(t.front());
      const auto last = static_cast<unsigned char>(t.back());
      const bool left_ok = !is_ascii_alnum(first) || pos == 0 ||
                           !is_ascii_alnum(static_cast<unsigned char>(lower[pos - 1]));
      const std::size_t end = pos + t.size();
      const bool right_ok = !is_ascii_alnum(last) || end == lower.size() ||
                            !is_ascii_alnum(static_cast<unsigned char>(lower[end]));
      if (left_ok && right_ok) {
        ++count;
        pos = end;
        matched = true;
        break;
      }
    }
    if (!matched) ++pos;
  }
  return count;
}

std::optional<std::string> filter_document(const Document& doc, const FilterRules& rules) {
  const auto& s = doc.stats;
  if (s.char_length < rules.min_chars) return std::string(kRejectTooShort);
  if (s.max_punctuationless_run > rules.max_punctuationless_run) return std::string(kRejectPunctuationRun);
  if (s.english_word_count + s.chinese_char_count < rules.min_lang_tokens) return std::string(kRejectLangCount);
  if (count_nsfw(doc.text, rules.nsfw_terms) > rules.max_nsfw_terms) return std::string(kRejectNsfw);
  return std::nullopt;
}

}  // namespace jiang
