#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace voicectl {

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace voicectl
