#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "texsyn/grid.hpp"
#include "texsyn/nets.hpp"
#include "texsyn/segmentation.hpp"

namespace texsyn {

struct SynthesisRequest {
  std::filesystem::path checkpoint;
  std::vector<int> output_dims;  // empty means the training output size
  int count = 1;
  std::uint64_t rng_seed = 0;
  double binarize_threshold = 0.0;
  bool raw = false;  // keep ModelRange values
};

/// Lattice that the generator body maps onto `output_dims`. Throws LayoutError
/// listing the nearest representable sizes when some axis does not divide.
std::vector<int> lattice_for(const nn::GeneratorSpec& spec, const std::vector<int>& output_dims);

/// `count` realizations; realization i draws its latent input from
/// derive_seed(rng_seed, i), so results do not depend on count.
std::vector<TextureGrid> generate(nn::Generator<float>& g, const std::vector<int>& output_dims, int count,
                                  std::uint64_t rng_seed, double threshold = 0.0, bool raw = false);

std::vector<TextureGrid> generate(const SynthesisRequest& request);

/// Loads the generator stored in a training checkpoint.
nn::Generator<float> load_generator(const std::filesystem::path& checkpoint);

struct SeamLine {
  int axis = 0;
  int position = 0;  // index of the first cell past the line
  double discrepancy = 0;
  double z = 0;
  int grid = 0;  // index into the scanned ensemble
};

struct SeamReport {
  std::vector<SeamLine> boundaries;
  // Reference distribution per axis (boundaries are scored against their own axis).
  std::vector<double> interior_mean;
  std::vector<double> interior_std;
  std::vector<int> interior_count;
};

/// For a line q on an axis and lag r, compare the foreground pair fraction of
/// pairs straddling q with the mean of the two equal-count windows just
/// before and after it; the discrepancy is the mean over r = 1..max_lag of
/// (side - across), so hard joins score positive. Segment boundaries sit at
/// the middle of each overlap band and are scored against lines at least
/// 2*max_lag away from every boundary. The ensemble form pools those lines
/// over all grids. z is the Student t score (about one independent line per
/// 2*max_lag) mapped to the normal scale.
SeamReport seam_scan(std::span<const TextureGrid> grids, const SegmentLayout& layout, int max_lag = 8);
SeamReport seam_scan(const TextureGrid& grid, const SegmentLayout& layout, int max_lag = 8);

}  // namespace texsyn
