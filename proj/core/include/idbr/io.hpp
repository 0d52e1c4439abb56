#pragma once

#include <filesystem>
#include <string>

namespace idbr {

/// Shortest round-trip decimal form of a double ("%.17g" semantics).
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

}  // namespace idbr
