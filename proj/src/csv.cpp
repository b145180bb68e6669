#include "orthoscore/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace orthoscore::csv {

std::size_t Table::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("unknown column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool Table::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

namespace {

std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    std::string_view rest = line.substr(pos);
    if (!rest.empty() && rest.front() == '"') {
      const auto close = rest.find('"', 1);
      if (close == std::string_view::npos)
        throw ParseError("unterminated quote on line " + std::to_string(line_no));
      const std::string_view inner = rest.substr(1, close - 1);
      if (inner.find(',') != std::string_view::npos)
        throw ParseError("quoted field containing a separator on line " + std::to_string(line_no));
      const std::string_view after = rest.substr(close + 1);
      if (!after.empty() && after.front() != ',')
        throw ParseError("text after closing quote on line " + std::to_string(line_no));
      fields.emplace_back(inner);
      if (after.empty()) break;
      pos += close + 2;
      continue;
    }
    const auto comma = rest.find(',');
    const std::string_view field = rest.substr(0, comma);
    if (field.find('"') != std::string_view::npos)
      throw ParseError("stray quote on line " + std::to_string(line_no));
    fields.emplace_back(field);
    if (comma == std::string_view::npos) break;
    pos += comma + 1;
  }
  return fields;
}

}  // namespace

Table read(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line, line_no);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw ParseError("empty input");
  return t;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read(in);
}

bool is_missing(std::string_view field) {
  return field.empty() || field == "NA" || field == "NaN" || field == "nan" || field == ".";
}

std::optional<double> parse_number(std::string_view field) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write(std::ostream& out, const Table& table) {
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].find_first_of(",\"\n") != std::string::npos)
        throw std::invalid_argument("field cannot be written without quoting: " + row[i]);
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
}

void write_file(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out, table);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace orthoscore::csv
