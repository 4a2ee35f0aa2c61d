#pragma once

#include <cstdint>
#include <vector>

#include "texsyn/grid.hpp"

namespace texsyn {

/// Sinuous horizontal channels in a 2D grid.
struct ChannelParams {
  double porosity = 0.28;  // channels are added until this fraction is reached
  double width = 6.0;
  double amplitude = 4.0;
  double wavelength = 32.0;
};

TextureGrid channel_ti(const std::vector<int>& dims, std::uint64_t seed, const ChannelParams& p = {});

/// Independent Bernoulli(phi) cells.
TextureGrid bernoulli_grid(const std::vector<int>& dims, double phi, std::uint64_t seed);

}  // namespace texsyn
