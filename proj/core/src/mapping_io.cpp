#include "dvd/mapping_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dvd/errors.hpp"

namespace dvd {

namespace {

static_assert(std::endian::native == std::endian::little,
              "DVDM encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_dvdm(const GridMapping& map) {
  if (map.empty()) throw InvalidArgument("encode_dvdm: empty mapping");
  std::vector<std::uint8_t> out{'D', 'V', 'D', 'M', kDvdmVersion, kDvdmDtypeF32, 0, 0};
  put_u32(out, static_cast<std::uint32_t>(map.height()));
  put_u32(out, static_cast<std::uint32_t>(map.width()));
  put_u32(out, 2);
  const auto& c = map.coords();
  const std::size_t at = out.size();
  out.resize(at + c.size() * sizeof(float));
  std::memcpy(out.data() + at, c.data(), c.size() * sizeof(float));
  return out;
}

GridMapping decode_dvdm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < kDvdmHeaderSize) {
    throw FormatError(origin + ": truncated DVDM header");
  }
  if (std::memcmp(bytes.data(), "DVDM", 4) != 0) {
    throw FormatError(origin + ": bad DVDM magic");
  }
  if (bytes[4] != kDvdmVersion) {
    throw FormatError(origin + ": unsupported DVDM version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != kDvdmDtypeF32) {
    throw FormatError(origin + ": unsupported DVDM dtype " + std::to_string(bytes[5]));
  }
  if (bytes[6] != 0 || bytes[7] != 0) {
    throw FormatError(origin + ": nonzero DVDM reserved field");
  }
  const std::uint32_t h = get_u32(bytes, 8), w = get_u32(bytes, 12), ch = get_u32(bytes, 16);
  if (ch != 2) throw FormatError(origin + ": DVDM channels must be 2");
  if (h == 0 || w == 0) throw FormatError(origin + ": DVDM has zero size");
  const std::size_t n = static_cast<std::size_t>(h) * w * 2;
  if (bytes.size() != kDvdmHeaderSize + n * sizeof(float)) {
    throw FormatError(origin + ": DVDM payload size mismatch");
  }
  std::vector<float> coords(n);
  std::memcpy(coords.data(), bytes.data() + kDvdmHeaderSize, n * sizeof(float));
  return GridMapping(static_cast<int>(h), static_cast<int>(w), std::move(coords));
}

void write_dvdm(const std::filesystem::path& path, const GridMapping& map) {
  const auto bytes = encode_dvdm(map);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path.string() + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(path.string() + ": write failed");
}

GridMapping read_dvdm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path.string() + ": cannot open DVDM file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_dvdm(bytes, path.string());
}

}  // namespace dvd
