#pragma once

// Small text helpers shared by the file readers and writers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace charprobe {

// Invalid byte sequences decode to U+FFFD.
std::u32string utf8_decode(std::string_view bytes);
std::string utf8_encode(std::u32string_view text);
std::string utf8_encode(char32_t c);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Shortest formatting that parses back to the same double.
std::string format_double(double v);
// Fixed, human-oriented formatting.
std::string format_fixed(double v, int decimals);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Ordered `key = value` records. Blank lines and lines starting with '#'
/// are ignored; keys may repeat.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  void append(const std::string& key, std::string value);
  bool has(const std::string& key) const;
  // Last value for the key; throws ConfigError when absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::vector<std::string> get_all(const std::string& key) const;

  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

int parse_int(const std::string& text, const std::string& what);
double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
// "a..b" or "a" -> inclusive range.
std::pair<int, int> parse_range(const std::string& text, const std::string& what);

}  // namespace charprobe
