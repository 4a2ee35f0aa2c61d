#include "texsyn/procedural.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "texsyn/error.hpp"

namespace texsyn {

TextureGrid channel_ti(const std::vector<int>& dims, std::uint64_t seed, const ChannelParams& p) {
  if (dims.size() != 2) throw DomainError("channel_ti builds 2D grids only");
  if (!(p.porosity > 0 && p.porosity < 1)) throw DomainError("channel porosity must lie in (0, 1)");
  const int h = dims[0], w = dims[1];
  std::vector<float> data(static_cast<std::size_t>(h) * w, 0.0f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t filled = 0;
  const auto target = static_cast<std::size_t>(p.porosity * static_cast<double>(data.size()));
  for (int guard = 0; filled < target && guard < 1000; ++guard) {
    const double y0 = u(rng) * h;
    const double amp = p.amplitude * (0.5 + u(rng));
    const double lambda = p.wavelength * (0.75 + 0.5 * u(rng));
    const double phase = 2 * std::numbers::pi * u(rng);
    const double half = 0.5 * p.width * (0.75 + 0.5 * u(rng));
    for (int x = 0; x < w; ++x) {
      const double c = y0 + amp * std::sin(2 * std::numbers::pi * x / lambda + phase);
      for (int y = 0; y < h; ++y) {
        if (std::abs(y - c) >= half) continue;
        float& v = data[static_cast<std::size_t>(y) * w + x];
        if (v == 0.0f) {
          v = 1.0f;
          ++filled;
        }
      }
    }
  }
  return TextureGrid(dims, std::move(data), ValueDomain::Binary01);
}

TextureGrid bernoulli_grid(const std::vector<int>& dims, double phi, std::uint64_t seed) {
  if (!(phi >= 0 && phi <= 1)) throw DomainError("phi must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> data(product(dims));
  for (auto& v : data) v = u(rng) < phi ? 1.0f : 0.0f;
  return TextureGrid(dims, std::move(data), ValueDomain::Binary01);
}

}  // namespace texsyn
