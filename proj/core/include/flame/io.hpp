#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace flame::io {

// Whole-file read; throws IoError naming the path.
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Shortest text that parses back to the identical double.
std::string format_double(double value);

}  // namespace flame::io
