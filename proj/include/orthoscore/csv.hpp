#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace orthoscore::csv {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws ParseError if absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Comma separated, header first. Surrounding double quotes are stripped from
/// a field, but a quoted field that contains a comma is rejected.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

/// Empty, NA, NaN and "." count as missing.
bool is_missing(std::string_view field);
std::optional<double> parse_number(std::string_view field);

/// Shortest representation that round-trips.
std::string format_number(double v);
/// Six significant digits, for console tables.
std::string format_short(double v);

void write(std::ostream& out, const Table& table);
void write_file(const std::filesystem::path& path, const Table& table);

}  // namespace orthoscore::csv
