#pragma once

// Small helpers for the CSV-style text files the toolkit reads and writes.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clvsurvey {

/// Shortest decimal text that parses back to exactly `value`.
/// Infinities are written as "inf"/"-inf".
std::string format_double(double value);
/// Fixed number of decimals, for human-facing report tables.
std::string format_fixed(double value, int decimals);

/// Strict numeric parsing; throws ValidationError naming `what`.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

std::vector<std::string> split_csv_line(std::string_view line);
std::string_view trim(std::string_view text) noexcept;

/// Reads the next non-empty line that is not a '#' comment.
bool next_data_line(std::istream& in, std::string& line, std::size_t* line_number = nullptr);

/// Header written at the top of every output file.
struct Provenance {
  std::string config_hash;  // 16 hex digits
  std::uint64_t seed = 0;
  std::string version;

  std::string header_line() const;
};

std::string fnv1a_hex(std::string_view bytes);

/// Locates columns by name in a CSV header row.
class ColumnIndex {
 public:
  explicit ColumnIndex(const std::vector<std::string>& header);
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t require(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

}  // namespace clvsurvey
