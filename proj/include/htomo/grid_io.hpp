#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "htomo/core.hpp"

namespace htomo {

/// HTGD layout, little endian throughout:
///   "HTGD" | u8 version (1) | u8 ndim | u32 dims[ndim] | f64 origin[ndim] |
///   f64 spacing | f64 values[prod(dims)] (row-major, last axis fastest)
inline constexpr std::uint8_t htgd_version = 1;

std::vector<std::uint8_t> encode_grid(const ScalarGrid& grid);
ScalarGrid decode_grid(const std::vector<std::uint8_t>& bytes);

void write_grid(const std::filesystem::path& path, const ScalarGrid& grid);
ScalarGrid read_grid(const std::filesystem::path& path);

/// 8-bit binary portable graymap, min..max mapped to 0..255.
void write_pgm(const std::filesystem::path& path, const ScalarGrid& image);

}  // namespace htomo
