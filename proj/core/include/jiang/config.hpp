#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace jiang {

// Flat `key=value` configuration text. Blank lines and lines starting with
// '#' are ignored; whitespace around keys and values is trimmed.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  // Sorted `key=value` lines; stable input for hashing.
  std::string serialize() const;

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void merge(const KeyValues& other);
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex64(std::uint64_t v);

// Shortest round-trip decimal form, so serialized configs hash stably.
std::string format_double(double v);

}  // namespace jiang
