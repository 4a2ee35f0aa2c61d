#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "texsyn/grid.hpp"

namespace texsyn {

/// Overlapping segments that tile an output grid exactly:
/// counts[a] * segment[a] - (counts[a] - 1) * overlap[a] == output[a] on every axis.
struct SegmentLayout {
  std::vector<int> output_dims;
  std::vector<int> segment_dims;
  std::vector<int> overlap;
  std::vector<int> counts;
  int n = 0;

  int ndim() const noexcept { return static_cast<int>(output_dims.size()); }
  int stride(int axis) const noexcept { return segment_dims[axis] - overlap[axis]; }

  /// Origins of all n segments, row-major over the segment grid.
  std::vector<std::vector<int>> origins() const;

  friend bool operator==(const SegmentLayout&, const SegmentLayout&) = default;
};

enum class SegmentSource { FromGenerator, FromTrainingImage };

struct SegmentBatch {
  std::vector<TextureGrid> segments;
  std::vector<std::vector<int>> origins;
  /// Index into the TI list for FromTrainingImage batches; zeros otherwise.
  std::vector<int> source_index;
  SegmentSource source = SegmentSource::FromGenerator;
};

enum class TiSampling { Random, Grid };

SegmentLayout plan_layout(std::span<const int> output_dims, std::span<const int> segment_dims,
                          std::span<const int> overlap);

/// Copies the box [origin, origin + box_dims) out of `grid`.
TextureGrid crop(const TextureGrid& grid, std::span<const int> origin, std::span<const int> box_dims);

SegmentBatch extract_segments(const TextureGrid& grid, const SegmentLayout& layout);

/// n crops of segment_dims, each from a uniformly chosen TI at a uniformly
/// chosen origin. With TiSampling::Grid the origins are restricted to the
/// exact tiling of each TI by (segment_dims, grid_overlap).
SegmentBatch sample_ti_segments(std::span<const TextureGrid> tis, std::span<const int> segment_dims,
                                int n, std::uint64_t rng_seed,
                                TiSampling sampling = TiSampling::Random,
                                std::span<const int> grid_overlap = {});

/// Inverse of extract_segments; throws ConsistencyError when overlapping
/// segments disagree.
TextureGrid assemble(const SegmentBatch& batch, const SegmentLayout& layout);

}  // namespace texsyn
