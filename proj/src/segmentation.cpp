#include "texsyn/segmentation.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "texsyn/error.hpp"

namespace texsyn {

namespace {

std::string join(std::span<const int> v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

// Visits every row (run along the last axis) of a box; f(src_offset, dst_offset, run_length).
template <typename F>
void for_each_box_row(std::span<const int> grid_dims, std::span<const int> origin,
                      std::span<const int> box, F&& f) {
  const auto gs = strides_of(grid_dims);
  const auto bs = strides_of(box);
  const int nd = static_cast<int>(box.size());
  const int run = box[nd - 1];
  const std::size_t rows = product(box) / static_cast<std::size_t>(run);
  std::vector<int> idx(nd, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t src = static_cast<std::size_t>(origin[nd - 1]);
    std::size_t dst = 0;
    for (int a = 0; a < nd - 1; ++a) {
      src += static_cast<std::size_t>(origin[a] + idx[a]) * gs[a];
      dst += static_cast<std::size_t>(idx[a]) * bs[a];
    }
    f(src, dst, run);
    for (int a = nd - 2; a >= 0; --a) {
      if (++idx[a] < box[a]) break;
      idx[a] = 0;
    }
  }
}

}  // namespace

std::vector<std::vector<int>> SegmentLayout::origins() const {
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(n));
  const int nd = ndim();
  std::vector<int> cell(nd, 0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> o(nd);
    for (int a = 0; a < nd; ++a) o[a] = cell[a] * stride(a);
    out.push_back(std::move(o));
    for (int a = nd - 1; a >= 0; --a) {
      if (++cell[a] < counts[a]) break;
      cell[a] = 0;
    }
  }
  return out;
}

SegmentLayout plan_layout(std::span<const int> output_dims, std::span<const int> segment_dims,
                          std::span<const int> overlap) {
  const std::size_t nd = output_dims.size();
  if (segment_dims.size() != nd || overlap.size() != nd)
    throw LayoutError("output " + join(output_dims) + ", segment " + join(segment_dims) +
                      " and overlap " + join(overlap) + " must have the same rank");
  SegmentLayout layout;
  layout.output_dims.assign(output_dims.begin(), output_dims.end());
  layout.segment_dims.assign(segment_dims.begin(), segment_dims.end());
  layout.overlap.assign(overlap.begin(), overlap.end());
  layout.counts.resize(nd);
  layout.n = 1;
  for (std::size_t a = 0; a < nd; ++a) {
    const int out = output_dims[a], seg = segment_dims[a], ov = overlap[a];
    if (out <= 0 || seg <= 0) throw LayoutError("dims must be positive on axis " + std::to_string(a));
    if (ov < 0) throw LayoutError("overlap must be non-negative on axis " + std::to_string(a));
    if (ov >= seg)
      throw LayoutError("axis " + std::to_string(a) + ": overlap " + std::to_string(ov) +
                        " must be smaller than segment " + std::to_string(seg));
    if (seg > out)
      throw LayoutError("axis " + std::to_string(a) + ": segment " + std::to_string(seg) +
                        " exceeds output " + std::to_string(out));
    const int step = seg - ov;
    if ((out - seg) % step != 0) {
      const int below = seg + ((out - seg) / step) * step;
      const int above = below + step;
      throw LayoutError("axis " + std::to_string(a) + ": no integer count satisfies count*" +
                        std::to_string(seg) + " - (count-1)*" + std::to_string(ov) + " = " +
                        std::to_string(out) + "; nearest feasible outputs: " +
                        std::to_string(below) + ", " + std::to_string(above));
    }
    layout.counts[a] = (out - seg) / step + 1;
    layout.n *= layout.counts[a];
  }
  return layout;
}

TextureGrid crop(const TextureGrid& grid, std::span<const int> origin, std::span<const int> box_dims) {
  if (origin.size() != grid.dims().size() || box_dims.size() != grid.dims().size())
    throw ShapeError("crop rank mismatch");
  for (std::size_t a = 0; a < origin.size(); ++a)
    if (origin[a] < 0 || box_dims[a] <= 0 || origin[a] + box_dims[a] > grid.dims()[a])
      throw ShapeError("crop box " + join(origin) + "+" + join(box_dims) +
                       " outside grid " + join(grid.dims()));
  std::vector<float> out(product(box_dims));
  const auto src = grid.data();
  for_each_box_row(grid.dims(), origin, box_dims, [&](std::size_t s, std::size_t d, int run) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s), run, out.begin() + static_cast<std::ptrdiff_t>(d));
  });
  return TextureGrid(std::vector<int>(box_dims.begin(), box_dims.end()), std::move(out),
                     grid.domain(), grid.foreground());
}

SegmentBatch extract_segments(const TextureGrid& grid, const SegmentLayout& layout) {
  if (grid.dims() != layout.output_dims)
    throw ShapeError("grid dims " + join(grid.dims()) + " do not match layout output " +
                     join(layout.output_dims));
  SegmentBatch batch;
  batch.source = SegmentSource::FromGenerator;
  batch.origins = layout.origins();
  batch.source_index.assign(batch.origins.size(), 0);
  batch.segments.reserve(batch.origins.size());
  for (const auto& o : batch.origins) batch.segments.push_back(crop(grid, o, layout.segment_dims));
  return batch;
}

SegmentBatch sample_ti_segments(std::span<const TextureGrid> tis, std::span<const int> segment_dims,
                                int n, std::uint64_t rng_seed, TiSampling sampling,
                                std::span<const int> grid_overlap) {
  if (tis.empty()) throw ShapeError("sample_ti_segments needs at least one TI");
  if (n < 1) throw ShapeError("sample_ti_segments needs n >= 1");
  std::vector<SegmentLayout> grids;
  for (std::size_t t = 0; t < tis.size(); ++t) {
    const auto& dims = tis[t].dims();
    if (dims.size() != segment_dims.size())
      throw ShapeError("TI " + std::to_string(t) + " rank does not match segment rank");
    for (std::size_t a = 0; a < dims.size(); ++a)
      if (segment_dims[a] > dims[a])
        throw ShapeError("segment " + join(segment_dims) + " larger than TI " + std::to_string(t) +
                         " dims " + join(dims));
    if (sampling == TiSampling::Grid) {
      std::vector<int> ov(grid_overlap.begin(), grid_overlap.end());
      if (ov.empty()) ov.assign(dims.size(), 0);
      grids.push_back(plan_layout(dims, segment_dims, ov));
    }
  }

  std::mt19937_64 rng(rng_seed);
  SegmentBatch batch;
  batch.source = SegmentSource::FromTrainingImage;
  batch.segments.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int t = std::uniform_int_distribution<int>(0, static_cast<int>(tis.size()) - 1)(rng);
    const auto& dims = tis[t].dims();
    std::vector<int> origin(dims.size());
    if (sampling == TiSampling::Random) {
      for (std::size_t a = 0; a < dims.size(); ++a)
        origin[a] = std::uniform_int_distribution<int>(0, dims[a] - segment_dims[a])(rng);
    } else {
      const auto& g = grids[static_cast<std::size_t>(t)];
      const int cell = std::uniform_int_distribution<int>(0, g.n - 1)(rng);
      origin = g.origins()[static_cast<std::size_t>(cell)];
    }
    batch.segments.push_back(crop(tis[t], origin, segment_dims));
    batch.origins.push_back(std::move(origin));
    batch.source_index.push_back(t);
  }
  return batch;
}

TextureGrid assemble(const SegmentBatch& batch, const SegmentLayout& layout) {
  if (batch.segments.size() != static_cast<std::size_t>(layout.n))
    throw ShapeError("batch has " + std::to_string(batch.segments.size()) + " segments, layout expects " +
                     std::to_string(layout.n));
  const auto origins = layout.origins();
  const std::size_t total = product(layout.output_dims);
  std::vector<float> out(total, 0.0f);
  std::vector<unsigned char> written(total, 0);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto& seg = batch.segments[i];
    if (seg.dims() != layout.segment_dims) throw ShapeError("segment dims do not match layout");
    const auto src = seg.data();
    for_each_box_row(layout.output_dims, origins[i], layout.segment_dims,
                     [&](std::size_t o, std::size_t s, int run) {
                       for (int k = 0; k < run; ++k) {
                         const float v = src[s + k];
                         if (written[o + k] && out[o + k] != v)
                           throw ConsistencyError("segment " + std::to_string(i) +
                                                  " disagrees with an overlapping segment");
                         out[o + k] = v;
                         written[o + k] = 1;
                       }
                     });
  }
  const auto& first = batch.segments.front();
  return TextureGrid(layout.output_dims, std::move(out), first.domain(), first.foreground());
}

}  // namespace texsyn
