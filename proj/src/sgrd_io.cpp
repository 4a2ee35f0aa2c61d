#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>

#include "texsyn/error.hpp"
#include "texsyn/grid.hpp"

namespace texsyn {

// Layout: "SGRD" | u8 version (1) | u8 ndim | ndim x u32 LE dims | prod(dims) x u8.

namespace {

constexpr std::array<char, 4> kMagic{'S', 'G', 'R', 'D'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

TextureGrid read_sgrd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 6) throw FormatError(where + "truncated header");
  for (int i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<unsigned char>(kMagic[i])) throw FormatError(where + "bad magic");
  if (bytes[4] != kVersion)
    throw FormatError(where + "unsupported version " + std::to_string(bytes[4]));
  const int ndim = bytes[5];
  if (ndim != 2 && ndim != 3) throw FormatError(where + "ndim must be 2 or 3, got " + std::to_string(ndim));
  const std::size_t header = 6 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) throw FormatError(where + "truncated dims");

  std::vector<int> dims(ndim);
  for (int a = 0; a < ndim; ++a) {
    const std::size_t o = 6 + 4 * static_cast<std::size_t>(a);
    const std::uint32_t d = std::uint32_t(bytes[o]) | (std::uint32_t(bytes[o + 1]) << 8) |
                            (std::uint32_t(bytes[o + 2]) << 16) | (std::uint32_t(bytes[o + 3]) << 24);
    if (d == 0 || d > 0x7fffffffu)
      throw FormatError(where + "dims[" + std::to_string(a) + "] out of range");
    dims[a] = static_cast<int>(d);
  }
  const std::size_t expected = product(dims);
  const std::size_t payload = bytes.size() - header;
  if (payload != expected)
    throw FormatError(where + "payload length " + std::to_string(payload) +
                      " does not match dims product " + std::to_string(expected));

  std::vector<float> data(expected);
  for (std::size_t i = 0; i < expected; ++i) data[i] = bytes[header + i] != 0 ? 1.0f : 0.0f;
  return TextureGrid(std::move(dims), std::move(data), ValueDomain::Binary01);
}

void write_sgrd(const TextureGrid& grid, const std::filesystem::path& path) {
  if (grid.domain() != ValueDomain::Binary01)
    throw DomainError("SGRD stores Binary01 grids only");
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.push_back(kVersion);
  bytes.push_back(static_cast<unsigned char>(grid.ndim()));
  for (int d : grid.dims()) {
    const auto u = static_cast<std::uint32_t>(d);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xffu));
  }
  for (float v : grid.data()) bytes.push_back(v != 0.0f ? 1 : 0);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace texsyn
