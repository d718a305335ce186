#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rmtbvqa::csv {

/// Splits one RFC 4180 line (no embedded newlines). Throws FormatError on an
/// unterminated quote.
std::vector<std::string> split(const std::string& line);
std::string escape(const std::string& field);
std::string join(const std::vector<std::string>& fields);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double v);
double parse_real(const std::string& s, const std::string& context);
std::optional<double> parse_optional_real(const std::string& s, const std::string& context);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row
  std::vector<std::string> comments;      // leading '#' lines, without '#'

  std::size_t column(const std::string& name) const;  // throws FormatError if absent
};

/// Reads a CSV with a header row. Every row must have exactly the header's
/// column count; errors name the file and line.
Table read(const std::filesystem::path& path, const std::vector<std::string>& required = {});

/// Writes atomically (temp file + rename).
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows,
           const std::vector<std::string>& comments = {});

}  // namespace rmtbvqa::csv
