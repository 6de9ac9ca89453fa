#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace optdisc::io {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

/// Splits one delimited record on commas and/or whitespace, dropping empty fields.
std::vector<std::string_view> split_fields(std::string_view line);

/// Parses a whole field as a finite double; throws ParseError otherwise.
double parse_number(std::string_view field);

void ensure_directory(const std::filesystem::path& dir);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text(const std::filesystem::path& path, std::string_view text);

std::string read_text(const std::filesystem::path& path);

/// Binary PGM (P5) with 8-bit samples, row-major.
std::string encode_pgm(int width, int height, std::span<const unsigned char> pixels);

}  // namespace optdisc::io
