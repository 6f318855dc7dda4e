#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace flowcam {

/// Writes `content` to a sibling temp file and renames it over `path`, so a
/// failed write never leaves a partial file behind. Throws IoFailure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Reads a whole file. Throws IoFailure.
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for schema and model checksums.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t value);

}  // namespace flowcam
