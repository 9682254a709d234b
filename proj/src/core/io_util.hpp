#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace typoprobe {

std::string read_text_file(const std::filesystem::path& path);
std::string read_binary_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

}  // namespace typoprobe
