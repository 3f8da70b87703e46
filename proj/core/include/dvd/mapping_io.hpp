#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvd/mapping.hpp"

namespace dvd {

// DVDM layout (all integers little-endian):
//   "DVDM" | version u8 = 1 | dtype u8 = 1 (f32 LE) | reserved u16 = 0
//   | height u32 | width u32 | channels u32 = 2 | height*width*2 f32, x then y
inline constexpr std::uint8_t kDvdmVersion = 1;
inline constexpr std::uint8_t kDvdmDtypeF32 = 1;
inline constexpr std::size_t kDvdmHeaderSize = 20;

std::vector<std::uint8_t> encode_dvdm(const GridMapping& map);
GridMapping decode_dvdm(const std::vector<std::uint8_t>& bytes,
                        const std::string& origin = "<memory>");

void write_dvdm(const std::filesystem::path& path, const GridMapping& map);
GridMapping read_dvdm(const std::filesystem::path& path);

}  // namespace dvd
