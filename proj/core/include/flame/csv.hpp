#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Minimal RFC-4180 style CSV: comma separated, fields optionally quoted with
// doubled quotes inside.
namespace flame::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t byte_offset = 0;  // offset of the row's first byte
};

// Throws ParseError (with byte offset) on an unterminated quote.
std::vector<Row> parse(std::string_view text);

std::string quote(std::string_view field);

// Joins fields with commas, quoting where needed, and appends '\n'.
std::string join(const std::vector<std::string>& fields);

// Strict numeric conversions; throw ParseError at the row offset.
double to_double(const std::string& field, const Row& row, std::string_view column);
long long to_int(const std::string& field, const Row& row, std::string_view column);

}  // namespace flame::csv
