#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "htr/image.hpp"

namespace htr::png {

/// Loads any PNG (palette, RGB, alpha, 1..16 bit) as 8-bit grayscale.
GrayImage read_gray(const std::filesystem::path& path);

/// Writes a 1-bit grayscale PNG; ink is black.
void write_binary(const std::filesystem::path& path, const BinaryImage& img);
std::vector<std::uint8_t> encode_binary(const BinaryImage& img);

void write_gray(const std::filesystem::path& path, const GrayImage& img);

/// Loads a PNG and maps dark pixels (< 128) to ink; intended for already-bitonal files.
BinaryImage read_binary(const std::filesystem::path& path);

}  // namespace htr::png
