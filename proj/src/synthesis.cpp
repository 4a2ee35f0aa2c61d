#include "texsyn/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "texsyn/checkpoint.hpp"
#include "texsyn/error.hpp"
#include "texsyn/metrics.hpp"
#include "texsyn/rng.hpp"

namespace texsyn {

std::vector<int> lattice_for(const nn::GeneratorSpec& spec, const std::vector<int>& output_dims) {
  if (output_dims.size() != static_cast<std::size_t>(spec.ndim()))
    throw LayoutError("requested " + std::to_string(output_dims.size()) + "D output from a " +
                      std::to_string(spec.ndim()) + "D generator");
  const auto scale = spec.scale();
  std::vector<int> lattice(output_dims.size());
  for (std::size_t a = 0; a < output_dims.size(); ++a) {
    const int n = output_dims[a], s = scale[a];
    if (n <= 0) throw LayoutError("output dims must be positive");
    if (n % s == 0) {
      lattice[a] = n / s;
      continue;
    }
    std::ostringstream os;
    os << "axis " << a << ": output " << n << " is not a multiple of stride^depth = " << s
       << "; nearest valid sizes: ";
    const int below = n / s * s;
    if (below > 0) os << below << ", ";
    os << below + s;
    throw LayoutError(os.str());
  }
  return lattice;
}

namespace {

nn::Tensor<float> latent_for(nn::Generator<float>& g, const std::vector<int>& lattice, std::mt19937_64& rng,
                             const nn::Context& ctx) {
  const auto& spec = g.spec();
  if (spec.latent_mode == nn::LatentMode::Direct) return g.sample_lattice(1, lattice, rng);
  // Fc mode: tile independent head outputs when the lattice is a multiple of the trained one.
  const auto& base = spec.lattice_dims;
  std::vector<int> tiles(lattice.size());
  for (std::size_t a = 0; a < lattice.size(); ++a) {
    if (lattice[a] % base[a] != 0)
      throw LayoutError("fc latent mode can only enlarge the lattice by integer multiples of the trained lattice");
    tiles[a] = lattice[a] / base[a];
  }
  const auto ext = nn::to_extent(lattice);
  const auto bext = nn::to_extent(base);
  const auto text = nn::to_extent(tiles);
  nn::Tensor<float> z(1, spec.channels(), ext);
  for (int tz = 0; tz < text.d; ++tz)
    for (int ty = 0; ty < text.h; ++ty)
      for (int tx = 0; tx < text.w; ++tx) {
        const auto head = g.head(g.sample_input(1, rng), ctx);
        for (int c = 0; c < spec.channels(); ++c)
          for (int d = 0; d < bext.d; ++d)
            for (int h = 0; h < bext.h; ++h)
              for (int w = 0; w < bext.w; ++w) {
                const std::size_t src = ((static_cast<std::size_t>(c) * bext.d + d) * bext.h + h) * bext.w + w;
                const std::size_t dst =
                    ((static_cast<std::size_t>(c) * ext.d + tz * bext.d + d) * ext.h + ty * bext.h + h) * ext.w +
                    tx * bext.w + w;
                z.v[dst] = head.v[src];
              }
      }
  return z;
}

}  // namespace

std::vector<TextureGrid> generate(nn::Generator<float>& g, const std::vector<int>& output_dims, int count,
                                  std::uint64_t rng_seed, double threshold, bool raw) {
  if (count < 1) throw DomainError("count must be positive");
  if (!std::isfinite(threshold)) throw DomainError("binarize threshold must be finite");
  const auto dims = output_dims.empty() ? g.spec().output_dims() : output_dims;
  const auto lattice = lattice_for(g.spec(), dims);
  std::vector<TextureGrid> out;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(rng_seed, static_cast<std::uint64_t>(i)));
    const nn::Context ctx{nn::Mode::Infer, &rng, false, false};
    const auto y = g.body(latent_for(g, lattice, rng, ctx), ctx);
    std::vector<float> data(y.v.begin(), y.v.end());
    for (auto& v : data) v = std::clamp(v, -1.0f, 1.0f);
    TextureGrid grid(dims, std::move(data), ValueDomain::ModelRange);
    out.push_back(raw ? std::move(grid) : binarize(grid, threshold));
  }
  return out;
}

nn::Generator<float> load_generator(const std::filesystem::path& checkpoint) {
  const auto ckpt = nn::read_checkpoint(checkpoint);
  if (!ckpt.meta.contains("generator")) throw FormatError(checkpoint.string() + ": no generator spec in checkpoint");
  const auto spec = ckpt.meta.at("generator").get<nn::GeneratorSpec>();
  return nn::Generator<float>(spec, ckpt.group("generator/"));
}

std::vector<TextureGrid> generate(const SynthesisRequest& r) {
  auto g = load_generator(r.checkpoint);
  return generate(g, r.output_dims, r.count, r.rng_seed, r.binarize_threshold, r.raw);
}

// ---------------------------------------------------------------------------

namespace {

struct Box {
  int n[3] = {1, 1, 1};
  std::size_t at(int z, int y, int x) const { return (static_cast<std::size_t>(z) * n[1] + y) * n[2] + x; }
};

// Fraction of foreground pairs (x, x + r e_axis) with lower cell index in [lo, hi).
double pair_fraction(const std::vector<std::uint8_t>& f, const Box& b, int axis, int r, int lo, int hi) {
  std::size_t hits = 0, pairs = 0;
  int range[3][2] = {{0, b.n[0]}, {0, b.n[1]}, {0, b.n[2]}};
  range[axis][0] = std::max(lo, 0);
  range[axis][1] = std::min(hi, b.n[axis] - r);
  for (int z = range[0][0]; z < range[0][1]; ++z)
    for (int y = range[1][0]; y < range[1][1]; ++y)
      for (int x = range[2][0]; x < range[2][1]; ++x) {
        int q[3] = {z, y, x};
        q[axis] += r;
        ++pairs;
        hits += f[b.at(z, y, x)] & f[b.at(q[0], q[1], q[2])];
      }
  return pairs ? static_cast<double>(hits) / static_cast<double>(pairs) : 0.0;
}

// Deficit at line q: pairs straddling q against equal-count windows on each side.
double line_deficit(const std::vector<std::uint8_t>& f, const Box& b, int ax, int q, int max_lag) {
  double s = 0;
  for (int r = 1; r <= max_lag; ++r) {
    const double across = pair_fraction(f, b, ax, r, q - r, q);
    const double side = 0.5 * (pair_fraction(f, b, ax, r, q - 2 * r, q - r) + pair_fraction(f, b, ax, r, q, q + r));
    s += side - across;
  }
  return s / max_lag;
}

// Two-sided Student t tail mapped to the normal scale.
double t_to_z(double t, double dof) {
  if (std::isinf(t)) return t;
  const boost::math::students_t dist(dof);
  const double upper = std::max(boost::math::cdf(boost::math::complement(dist, std::abs(t))), 1e-300);
  return std::copysign(boost::math::quantile(boost::math::complement(boost::math::normal(), upper)), t);
}

}  // namespace

SeamReport seam_scan(std::span<const TextureGrid> grids, const SegmentLayout& layout, int max_lag) {
  if (grids.empty()) throw DomainError("seam_scan: no grids");
  if (max_lag < 1) throw DomainError("seam_scan: max_lag must be at least 1");
  for (const auto& g : grids)
    if (g.dims() != layout.output_dims) throw LayoutError("seam_scan: layout does not tile the grid");
  const int nd = static_cast<int>(layout.output_dims.size());
  Box b;
  for (int a = 0; a < nd; ++a) b.n[3 - nd + a] = layout.output_dims[a];
  std::vector<std::vector<std::uint8_t>> fg;
  for (const auto& g : grids) {
    const TextureGrid bin = g.domain() == ValueDomain::ModelRange ? binarize(g) : g;
    std::vector<std::uint8_t> f(bin.size());
    for (std::size_t i = 0; i < bin.size(); ++i) f[i] = bin.is_foreground(i) ? 1 : 0;
    fg.push_back(std::move(f));
  }

  SeamReport rep;
  rep.interior_mean.assign(nd, 0.0);
  rep.interior_std.assign(nd, 0.0);
  rep.interior_count.assign(nd, 0);
  for (int a = 0; a < nd; ++a) {
    if (layout.counts[a] < 2) continue;
    if (max_lag >= layout.segment_dims[a])
      throw DomainError("seam_scan: window of " + std::to_string(max_lag) + " is larger than the segment");
    const int ax = 3 - nd + a;
    const int len = b.n[ax];
    std::vector<int> seams;
    for (int k = 1; k < layout.counts[a]; ++k) seams.push_back(k * layout.stride(a) + layout.overlap[a] / 2);
    for (int p : seams)
      if (p < 2 * max_lag || p > len - 2 * max_lag)
        throw DomainError("seam_scan: window of " + std::to_string(max_lag) + " does not fit around the boundary at " +
                          std::to_string(p));
    // Lines whose windows do not reach any boundary window.
    std::vector<int> lines;
    for (int q = 2 * max_lag; q <= len - 2 * max_lag; ++q) {
      bool far = true;
      for (int p : seams) far = far && std::abs(q - p) >= 2 * max_lag;
      if (far) lines.push_back(q);
    }
    std::vector<double> interior;
    for (const auto& f : fg)
      for (int q : lines) interior.push_back(line_deficit(f, b, ax, q, max_lag));
    // Neighbouring lines share cells; roughly one independent line per 2*max_lag.
    const double per_grid = std::max(1.0, static_cast<double>(lines.size()) / (2.0 * max_lag));
    const double neff = per_grid * static_cast<double>(fg.size());
    if (lines.empty() || neff < 3)
      throw DomainError("seam_scan: too few interior lines along axis " + std::to_string(a) +
                        "; use a smaller window or more grids");
    double m = 0, ss = 0;
    for (double v : interior) m += v;
    m /= static_cast<double>(interior.size());
    for (double v : interior) ss += (v - m) * (v - m);
    const double sd = interior.size() > 1 ? std::sqrt(ss / static_cast<double>(interior.size() - 1)) : 0.0;
    rep.interior_mean[a] = m;
    rep.interior_std[a] = sd;
    rep.interior_count[a] = static_cast<int>(interior.size());
    for (std::size_t gi = 0; gi < fg.size(); ++gi)
      for (int p : seams) {
        SeamLine s{a, p, line_deficit(fg[gi], b, ax, p, max_lag), 0.0, static_cast<int>(gi)};
        const double diff = s.discrepancy - m;
        if (sd > 0)
          s.z = t_to_z(diff / (sd * std::sqrt(1.0 + 1.0 / neff)), neff - 1.0);
        else
          s.z = diff == 0 ? 0.0 : std::copysign(INFINITY, diff);
        rep.boundaries.push_back(s);
      }
  }
  return rep;
}

SeamReport seam_scan(const TextureGrid& grid, const SegmentLayout& layout, int max_lag) {
  return seam_scan(std::span<const TextureGrid>(&grid, 1), layout, max_lag);
}

}  // namespace texsyn
