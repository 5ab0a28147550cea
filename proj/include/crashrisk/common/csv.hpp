#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crashrisk::csv {

// Comma-separated table with a header row. Fields may be double-quoted
// ("" escapes a quote); no embedded newlines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number in the source file for each row.
  std::vector<std::size_t> line_numbers;

  // Column index by name, nullopt if absent.
  std::optional<std::size_t> column(std::string_view name) const;
};

Table read_file(const std::filesystem::path& path);
Table parse(std::string_view text);

std::vector<std::string> split_line(std::string_view line);

// Shortest round-trip decimal form; "" for NaN (missing).
std::string format_number(double value);
std::string format_fixed(double value, int decimals);
std::optional<double> parse_number(std::string_view field);
std::optional<long long> parse_integer(std::string_view field);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);
  Writer& row(std::vector<std::string> fields);
  std::string str() const;

 private:
  std::string buffer_;
  std::size_t width_;
};

// Writes to "<path>.tmp" then renames, so readers never see partial files.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace crashrisk::csv
