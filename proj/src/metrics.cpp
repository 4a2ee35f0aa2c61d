#include "texsyn/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>

#include "texsyn/error.hpp"

namespace texsyn {

namespace {

// Grid dims promoted to (depth, row, col).
struct Dims3 {
  std::array<int, 3> n{1, 1, 1};
  int ndim = 2;

  explicit Dims3(const std::vector<int>& d) : ndim(static_cast<int>(d.size())) {
    if (ndim == 2) {
      n = {1, d[0], d[1]};
    } else {
      n = {d[0], d[1], d[2]};
    }
  }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * n[1] + y) * n[2] + x;
  }
  std::size_t volume() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
};

void require_binary(const TextureGrid& g, const char* what) {
  if (g.domain() != ValueDomain::Binary01) throw DomainError(std::string(what) + " needs a Binary01 grid");
}

std::vector<std::uint8_t> indicator(const TextureGrid& g) {
  std::vector<std::uint8_t> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = g.is_foreground(i) ? 1 : 0;
  return f;
}

int axis_index(Averaging a, int ndim) {
  switch (a) {
    case Averaging::DirectionalX: return 2;
    case Averaging::DirectionalY: return 1;
    case Averaging::DirectionalZ:
      if (ndim != 3) throw DomainError("axis Z requires a 3D grid");
      return 0;
    default: throw DomainError("directional statistic needs an X, Y or Z axis");
  }
}

void check_lag(int max_lag, int extent, const char* axis) {
  if (max_lag < 0) throw DomainError("max_lag must be non-negative");
  if (max_lag >= extent)
    throw DomainError("max_lag " + std::to_string(max_lag) + " must be smaller than the grid extent " +
                      std::to_string(extent) + " along " + axis);
}

// Pair statistic along one axis: same(x, y) decides whether a pair counts.
template <typename Same>
std::vector<double> directional(const Dims3& d, int axis, int max_lag, Boundary b, Same&& same) {
  std::vector<double> out(max_lag + 1, 0.0);
  const int len = d.n[axis];
  for (int r = 0; r <= max_lag; ++r) {
    std::size_t hits = 0, pairs = 0;
    for (int z = 0; z < d.n[0]; ++z)
      for (int y = 0; y < d.n[1]; ++y)
        for (int x = 0; x < d.n[2]; ++x) {
          std::array<int, 3> q{z, y, x};
          int c = q[axis] + r;
          if (c >= len) {
            if (b == Boundary::Truncated) continue;
            c -= len;
          }
          q[axis] = c;
          ++pairs;
          if (same(d.index(z, y, x), d.index(q[0], q[1], q[2]))) ++hits;
        }
    out[r] = pairs ? static_cast<double>(hits) / static_cast<double>(pairs) : 0.0;
  }
  return out;
}

std::vector<double> integer_lags(int max_lag) {
  std::vector<double> l(max_lag + 1);
  std::iota(l.begin(), l.end(), 0.0);
  return l;
}

// Calls f(dz, dy, dx, bin) for every lag vector whose rounded length is <= max_lag.
template <typename F>
void for_each_lag_vector(const Dims3& d, int max_lag, F&& f) {
  const int lz = d.ndim == 3 ? max_lag : 0;
  for (int dz = -lz; dz <= lz; ++dz)
    for (int dy = -max_lag; dy <= max_lag; ++dy)
      for (int dx = -max_lag; dx <= max_lag; ++dx) {
        const long bin = std::lround(std::sqrt(static_cast<double>(dz * dz + dy * dy + dx * dx)));
        if (bin <= max_lag) f(dz, dy, dx, static_cast<int>(bin));
      }
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Linear (or circular) autocorrelation counts of f on an (m0, m1, m2) canvas.
std::vector<double> autocorrelation(const Dims3& d, const std::vector<std::uint8_t>& f,
                                    const std::array<int, 3>& m) {
  const std::size_t real_n = static_cast<std::size_t>(m[0]) * m[1] * m[2];
  const std::size_t cplx_n = static_cast<std::size_t>(m[0]) * m[1] * (m[2] / 2 + 1);
  double* buf = fftw_alloc_real(real_n);
  fftw_complex* spec = fftw_alloc_complex(cplx_n);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_3d(m[0], m[1], m[2], buf, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_3d(m[0], m[1], m[2], spec, buf, FFTW_ESTIMATE);
  }
  std::fill(buf, buf + real_n, 0.0);
  for (int z = 0; z < d.n[0]; ++z)
    for (int y = 0; y < d.n[1]; ++y)
      for (int x = 0; x < d.n[2]; ++x)
        buf[(static_cast<std::size_t>(z) * m[1] + y) * m[2] + x] = f[d.index(z, y, x)];
  fftw_execute(fwd);
  for (std::size_t i = 0; i < cplx_n; ++i) {
    spec[i][0] = spec[i][0] * spec[i][0] + spec[i][1] * spec[i][1];
    spec[i][1] = 0.0;
  }
  fftw_execute(inv);
  std::vector<double> out(real_n);
  // Pair counts are integers; rounding removes transform noise.
  for (std::size_t i = 0; i < real_n; ++i) out[i] = std::nearbyint(buf[i] / static_cast<double>(real_n));
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spec);
  return out;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

double porosity(const TextureGrid& grid) {
  require_binary(grid, "porosity");
  if (grid.size() == 0) return 0.0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) c += grid.is_foreground(i) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(grid.size());
}

MetricCurve s2_directional(const TextureGrid& grid, Averaging axis, int max_lag, Boundary boundary) {
  require_binary(grid, "s2_directional");
  const Dims3 d(grid.dims());
  const int a = axis_index(axis, d.ndim);
  check_lag(max_lag, d.n[a], "the chosen axis");
  const auto f = indicator(grid);
  MetricCurve c;
  c.kind = CurveKind::S2;
  c.averaging = axis;
  c.lags = integer_lags(max_lag);
  c.values = directional(d, a, max_lag, boundary, [&](std::size_t i, std::size_t j) { return f[i] && f[j]; });
  c.porosity = porosity(grid);
  return c;
}

MetricCurve s2_radial(const TextureGrid& grid, int max_lag, Boundary boundary, bool normalized) {
  require_binary(grid, "s2_radial");
  const Dims3 d(grid.dims());
  for (int a = 3 - d.ndim; a < 3; ++a) check_lag(max_lag, d.n[a], "some axis");
  const auto f = indicator(grid);
  std::array<int, 3> m = d.n;
  if (boundary == Boundary::Truncated)
    for (int a = 3 - d.ndim; a < 3; ++a) m[a] += max_lag;
  const auto counts = autocorrelation(d, f, m);

  std::vector<double> sum(max_lag + 1, 0.0);
  std::vector<long> num(max_lag + 1, 0);
  for_each_lag_vector(d, max_lag, [&](int dz, int dy, int dx, int bin) {
    const double hits = counts[(static_cast<std::size_t>(wrap(dz, m[0])) * m[1] + wrap(dy, m[1])) * m[2] +
                               wrap(dx, m[2])];
    double pairs = static_cast<double>(d.volume());
    if (boundary == Boundary::Truncated)
      pairs = static_cast<double>(d.n[0] - std::abs(dz)) * (d.n[1] - std::abs(dy)) * (d.n[2] - std::abs(dx));
    sum[bin] += hits / pairs;
    ++num[bin];
  });

  MetricCurve c;
  c.kind = CurveKind::S2;
  c.averaging = Averaging::RadialIsotropic;
  c.lags = integer_lags(max_lag);
  c.porosity = porosity(grid);
  c.values.resize(max_lag + 1);
  for (int b = 0; b <= max_lag; ++b) c.values[b] = num[b] ? sum[b] / static_cast<double>(num[b]) : 0.0;
  if (normalized) {
    const double phi = c.porosity, den = phi - phi * phi;
    if (den <= 0) throw DomainError("normalized S2 is undefined for porosity 0 or 1");
    for (double& v : c.values) v = (v - phi * phi) / den;
  }
  return c;
}

LabelGrid label_clusters(const TextureGrid& grid, Connectivity connectivity, bool periodic) {
  require_binary(grid, "label_clusters");
  const Dims3 d(grid.dims());
  const auto f = indicator(grid);
  std::vector<std::array<int, 3>> offsets;
  const int zr = d.ndim == 3 ? 1 : 0;
  for (int dz = -zr; dz <= 0; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        // Keep the half of the neighborhood that precedes the cell in scan order.
        if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (connectivity == Connectivity::Face && manhattan != 1) continue;
        offsets.push_back({dz, dy, dx});
      }

  UnionFind uf(d.volume());
  for (int z = 0; z < d.n[0]; ++z)
    for (int y = 0; y < d.n[1]; ++y)
      for (int x = 0; x < d.n[2]; ++x) {
        const std::size_t i = d.index(z, y, x);
        if (!f[i]) continue;
        for (const auto& o : offsets) {
          int q[3] = {z + o[0], y + o[1], x + o[2]};
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            if (q[a] >= 0 && q[a] < d.n[a]) continue;
            if (!periodic) {
              inside = false;
              break;
            }
            q[a] = wrap(q[a], d.n[a]);
          }
          if (!inside) continue;
          const std::size_t j = d.index(q[0], q[1], q[2]);
          if (f[j]) uf.unite(i, j);
        }
      }

  LabelGrid out;
  out.dims = grid.dims();
  out.labels.assign(d.volume(), 0);
  std::vector<int> id(d.volume(), 0);
  for (std::size_t i = 0; i < d.volume(); ++i) {
    if (!f[i]) continue;
    const std::size_t r = uf.find(i);
    if (id[r] == 0) id[r] = ++out.cluster_count;
    out.labels[i] = id[r];
  }
  return out;
}

MetricCurve c2(const TextureGrid& grid, Connectivity connectivity, int max_lag, Averaging averaging,
               Boundary boundary) {
  require_binary(grid, "c2");
  const Dims3 d(grid.dims());
  const auto lab = label_clusters(grid, connectivity, boundary == Boundary::Periodic).labels;
  auto same = [&](std::size_t i, std::size_t j) { return lab[i] != 0 && lab[i] == lab[j]; };
  MetricCurve c;
  c.kind = CurveKind::C2;
  c.averaging = averaging;
  c.lags = integer_lags(max_lag);
  c.porosity = porosity(grid);
  if (averaging != Averaging::RadialIsotropic) {
    const int a = axis_index(averaging, d.ndim);
    check_lag(max_lag, d.n[a], "the chosen axis");
    c.values = directional(d, a, max_lag, boundary, same);
    return c;
  }
  for (int a = 3 - d.ndim; a < 3; ++a) check_lag(max_lag, d.n[a], "some axis");
  std::vector<double> sum(max_lag + 1, 0.0);
  std::vector<long> num(max_lag + 1, 0);
  for_each_lag_vector(d, max_lag, [&](int dz, int dy, int dx, int bin) {
    std::size_t hits = 0, pairs = 0;
    for (int z = 0; z < d.n[0]; ++z)
      for (int y = 0; y < d.n[1]; ++y)
        for (int x = 0; x < d.n[2]; ++x) {
          int q[3] = {z + dz, y + dy, x + dx};
          bool inside = true;
          for (int a = 0; a < 3; ++a) {
            if (q[a] >= 0 && q[a] < d.n[a]) continue;
            if (boundary == Boundary::Truncated) {
              inside = false;
              break;
            }
            q[a] = wrap(q[a], d.n[a]);
          }
          if (!inside) continue;
          ++pairs;
          if (same(d.index(z, y, x), d.index(q[0], q[1], q[2]))) ++hits;
        }
    sum[bin] += pairs ? static_cast<double>(hits) / static_cast<double>(pairs) : 0.0;
    ++num[bin];
  });
  c.values.resize(max_lag + 1);
  for (int b = 0; b <= max_lag; ++b) c.values[b] = num[b] ? sum[b] / static_cast<double>(num[b]) : 0.0;
  return c;
}

EnsembleStats ensemble_stats(std::span<const MetricCurve> curves) {
  if (curves.empty()) throw DomainError("ensemble_stats needs at least one curve");
  EnsembleStats s;
  s.kind = curves[0].kind;
  s.averaging = curves[0].averaging;
  s.lags = curves[0].lags;
  s.count = static_cast<int>(curves.size());
  const std::size_t n = s.lags.size();
  s.mean.assign(n, 0.0);
  s.min = curves[0].values;
  s.max = curves[0].values;
  double psum = 0;
  for (const auto& c : curves) {
    if (c.lags != s.lags || c.values.size() != n) throw DomainError("ensemble_stats: curves have mismatched lag grids");
    if (c.kind != s.kind || c.averaging != s.averaging)
      throw DomainError("ensemble_stats: curves differ in kind or averaging");
    for (std::size_t i = 0; i < n; ++i) {
      s.mean[i] += c.values[i];
      s.min[i] = std::min(s.min[i], c.values[i]);
      s.max[i] = std::max(s.max[i], c.values[i]);
    }
    psum += c.porosity;
  }
  for (double& v : s.mean) v /= static_cast<double>(curves.size());
  s.porosity_mean = psum / static_cast<double>(curves.size());
  if (curves.size() > 1) {
    double ss = 0;
    for (const auto& c : curves) ss += (c.porosity - s.porosity_mean) * (c.porosity - s.porosity_mean);
    s.porosity_std = std::sqrt(ss / static_cast<double>(curves.size() - 1));
  }
  return s;
}

void write_metric_csv(const std::filesystem::path& path, const EnsembleStats& s) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  char buf[256];
  out << "# kind=" << to_string(s.kind) << "\n";
  out << "# averaging=" << to_string(s.averaging) << "\n";
  std::snprintf(buf, sizeof buf, "# porosity_mean=%.10g\n# porosity_std=%.10g\n", s.porosity_mean, s.porosity_std);
  out << buf;
  out << "r,value_mean,value_min,value_max\n";
  for (std::size_t i = 0; i < s.lags.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g\n", s.lags[i], s.mean[i], s.min[i], s.max[i]);
    out << buf;
  }
}

std::string to_string(CurveKind k) { return k == CurveKind::S2 ? "S2" : "C2"; }

std::string to_string(Averaging a) {
  switch (a) {
    case Averaging::DirectionalX: return "x";
    case Averaging::DirectionalY: return "y";
    case Averaging::DirectionalZ: return "z";
    default: return "radial";
  }
}

Averaging parse_averaging(const std::string& s) {
  if (s == "x") return Averaging::DirectionalX;
  if (s == "y") return Averaging::DirectionalY;
  if (s == "z") return Averaging::DirectionalZ;
  if (s == "radial") return Averaging::RadialIsotropic;
  throw DomainError("averaging must be x, y, z or radial, got '" + s + "'");
}

Boundary parse_boundary(const std::string& s) {
  if (s == "truncated") return Boundary::Truncated;
  if (s == "periodic") return Boundary::Periodic;
  throw DomainError("boundary must be truncated or periodic, got '" + s + "'");
}

Connectivity parse_connectivity(const std::string& s) {
  if (s == "face") return Connectivity::Face;
  if (s == "full") return Connectivity::Full;
  throw DomainError("connectivity must be face or full, got '" + s + "'");
}

}  // namespace texsyn
