#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dvd/image.hpp"

namespace dvd {

// 8-bit PNG I/O. Three-channel images are RGB in memory.
void write_png(const std::filesystem::path& path, const DocumentImage& img);
DocumentImage read_png(const std::filesystem::path& path, int channels = 0);

std::vector<std::uint8_t> encode_png(const DocumentImage& img);

/// Rounds every pixel to the nearest multiple of 1/255, as a PNG round trip would.
DocumentImage quantize_8bit(const DocumentImage& img);

}  // namespace dvd
