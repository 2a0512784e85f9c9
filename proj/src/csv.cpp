#include "skintone/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <boost/tokenizer.hpp>
#include <fmt/format.h>

#include "skintone/errors.hpp"

namespace skintone::csv {

namespace {

std::vector<std::string> split(const std::string& line, std::size_t lineno) {
  using Sep = boost::escaped_list_separator<char>;
  std::vector<std::string> out;
  try {
    boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
    for (const auto& field : tok) out.push_back(field);
  } catch (const boost::escaped_list_error& e) {
    throw InputError(InputError::Kind::malformed, lineno, e.what());
  }
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InputError(InputError::Kind::schema, 1, fmt::format("missing column '{}'", name));
}

Table read(std::istream& in, const std::vector<std::string>& required) {
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, lineno);
    for (auto& f : fields) f = trim(std::move(f));
    if (!have_header) {
      if (fields.size() < required.size() ||
          !std::equal(required.begin(), required.end(), fields.begin())) {
        std::string expected;
        for (const auto& r : required) expected += (expected.empty() ? "" : ",") + r;
        throw InputError(InputError::Kind::schema, lineno, "expected header starting with " + expected);
      }
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError(InputError::Kind::malformed, lineno,
                       fmt::format("expected {} fields, found {}", table.header.size(), fields.size()));
    }
    table.rows.push_back({lineno, std::move(fields)});
  }
  if (!have_header) throw InputError(InputError::Kind::schema, 0, "empty file: header missing");
  return table;
}

Table read_file(const std::filesystem::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::missing, 0, "cannot open " + path.string());
  return read(in, required);
}

double to_double(const Row& row, std::size_t col, std::string_view what) {
  const std::string& s = row.fields.at(col);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw InputError(InputError::Kind::malformed, row.line, fmt::format("{} '{}' is not a number", what, s));
  }
  return v;
}

int to_int(const Row& row, std::size_t col, std::string_view what) {
  const std::string& s = row.fields.at(col);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw InputError(InputError::Kind::malformed, row.line, fmt::format("{} '{}' is not an integer", what, s));
  }
  return v;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\\") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace skintone::csv
