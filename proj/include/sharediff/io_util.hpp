#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace sharediff {

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Throws DataError if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xCBF29CE484222325ull);

/// Appends `[v0,v1,...]` using the shortest decimal form that round-trips
/// through f32.
void append_f32_array(std::string& out, std::span<const double> values);

/// printf-style "%.<digits>f".
std::string format_fixed(double value, int digits);

}  // namespace sharediff
