#pragma once

#include <filesystem>
#include <string>

namespace moelens {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double value);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace moelens
