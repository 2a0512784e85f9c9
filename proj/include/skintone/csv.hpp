#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace skintone::csv {

struct Row {
  std::size_t line = 0;  // 1-based, header is line 1
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column position by name, or throws InputError(schema).
  std::size_t column(std::string_view name) const;
};

/// Reads a CSV whose header must start with `required` (extra trailing
/// columns are allowed). Blank lines are skipped. Every row must have as many
/// fields as the header.
Table read(std::istream& in, const std::vector<std::string>& required);
Table read_file(const std::filesystem::path& path, const std::vector<std::string>& required);

double to_double(const Row& row, std::size_t col, std::string_view what);
int to_int(const Row& row, std::size_t col, std::string_view what);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace skintone::csv
