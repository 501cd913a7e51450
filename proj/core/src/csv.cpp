#include "flame/csv.hpp"

#include <charconv>
#include <cmath>

#include "flame/error.hpp"

namespace flame::csv {

std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    Row row;
    row.byte_offset = i;
    std::string field;
    bool row_done = false;
    while (!row_done) {
      field.clear();
      if (i < n && text[i] == '"') {
        std::size_t quote_start = i;
        ++i;
        bool closed = false;
        while (i < n) {
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
            } else {
              ++i;
              closed = true;
              break;
            }
          } else {
            field.push_back(text[i++]);
          }
        }
        if (!closed) throw ParseError("unterminated quoted field", quote_start);
      } else {
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          field.push_back(text[i++]);
        }
      }
      row.fields.push_back(field);
      if (i >= n) {
        row_done = true;
      } else if (text[i] == ',') {
        ++i;
      } else if (text[i] == '\r' || text[i] == '\n') {
        if (text[i] == '\r') ++i;
        if (i < n && text[i] == '\n') ++i;
        row_done = true;
      } else {
        throw ParseError("unexpected character after quoted field", i);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string quote(std::string_view field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  out.push_back('\n');
  return out;
}

double to_double(const std::string& field, const Row& row, std::string_view column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError("column " + std::string(column) + ": not a number: \"" + field + "\"",
                     row.byte_offset);
  }
  return v;
}

long long to_int(const std::string& field, const Row& row, std::string_view column) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError("column " + std::string(column) + ": not an integer: \"" + field + "\"",
                     row.byte_offset);
  }
  return v;
}

}  // namespace flame::csv
