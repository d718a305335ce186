#include "rmtbvqa/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa::csv {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw FormatError("unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw FormatError(context + ": '" + s + "' is not a finite number");
  }
  return v;
}

std::optional<double> parse_optional_real(const std::string& s, const std::string& context) {
  if (s.empty()) return std::nullopt;
  return parse_real(s, context);
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("missing column '" + name + "'");
}

Table read(const std::filesystem::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (!line.empty() && line[0] == '#') {
        t.comments.push_back(line.substr(1));
        continue;
      }
      try {
        t.header = split(line);
      } catch (const FormatError& e) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split(line);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (fields.size() != t.header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns, found " +
                        std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw FormatError(path.string() + ": missing header row");
  for (const auto& name : required) {
    try {
      t.column(name);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return t;
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows,
           const std::vector<std::string>& comments) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    for (const auto& c : comments) out << '#' << c << '\n';
    out << join(header) << '\n';
    for (const auto& r : rows) out << join(r) << '\n';
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rmtbvqa::csv
