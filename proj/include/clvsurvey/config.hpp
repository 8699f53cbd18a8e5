#pragma once

// Run configuration: a line-oriented text file of [section] headers and
// `key = value` lines. '#' starts a comment anywhere on a line. Keys are
// unique within a section; a repeated key is an error. Flag overrides are
// applied with set() after loading.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clvsurvey {

class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in, std::string_view source = "<config>");
  static Config load(const std::string& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Comma-separated list.
  std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

  /// Sorted `[section]` / `key = value` rendering; equal configs render equally.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace clvsurvey
