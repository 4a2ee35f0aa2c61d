#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "texsyn/error.hpp"
#include "texsyn/grid.hpp"

namespace texsyn {

void write_npy(const TextureGrid& grid, const std::filesystem::path& path) {
  std::string shape = "(";
  for (std::size_t a = 0; a < grid.dims().size(); ++a)
    shape += (a ? ", " : "") + std::to_string(grid.dims()[a]);
  shape += ")";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape + ", }";
  // Magic (6) + version (2) + length (2) + header must be a multiple of 64.
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  const char magic[] = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.write(magic, sizeof magic);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(lb, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (float v : grid.data()) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                       static_cast<char>((u >> 16) & 0xff), static_cast<char>(u >> 24)};
    out.write(b, 4);
  }
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace texsyn
