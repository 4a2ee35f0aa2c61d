#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "texsyn/grid.hpp"

namespace texsyn {

enum class Boundary { Truncated, Periodic };
enum class Connectivity { Face, Full };
/// DirectionalX follows the last (column) axis, Y the row axis, Z the depth axis (3D only).
enum class Averaging { DirectionalX, DirectionalY, DirectionalZ, RadialIsotropic };
enum class CurveKind { S2, C2 };

struct MetricCurve {
  CurveKind kind = CurveKind::S2;
  Averaging averaging = Averaging::DirectionalX;
  std::vector<double> lags;
  std::vector<double> values;
  double porosity = 0;
};

struct LabelGrid {
  std::vector<int> dims;
  std::vector<int> labels;  // 0 background, 1..cluster_count
  int cluster_count = 0;
};

/// Foreground fraction of a Binary01 grid.
double porosity(const TextureGrid& grid);

MetricCurve s2_directional(const TextureGrid& grid, Averaging axis, int max_lag,
                           Boundary boundary = Boundary::Truncated);

/// S2 over every lag vector with |r| rounding to 0..max_lag, averaged per
/// unit-width bin. `normalized` maps values to (S2 - phi^2) / (phi - phi^2).
MetricCurve s2_radial(const TextureGrid& grid, int max_lag, Boundary boundary = Boundary::Truncated,
                      bool normalized = false);

/// Connected components of the foreground; labels follow first visit in a
/// row-major scan. `periodic` wraps adjacency across grid faces.
LabelGrid label_clusters(const TextureGrid& grid, Connectivity connectivity = Connectivity::Face,
                         bool periodic = false);

/// Probability that both points of a pair at lag r lie in the same foreground cluster.
MetricCurve c2(const TextureGrid& grid, Connectivity connectivity, int max_lag, Averaging averaging,
               Boundary boundary = Boundary::Truncated);

struct EnsembleStats {
  CurveKind kind = CurveKind::S2;
  Averaging averaging = Averaging::DirectionalX;
  std::vector<double> lags;
  std::vector<double> mean, min, max;
  double porosity_mean = 0;
  double porosity_std = 0;  // sample standard deviation; 0 for a single curve
  int count = 0;
};

EnsembleStats ensemble_stats(std::span<const MetricCurve> curves);

/// `# kind=..`, `# porosity_mean=..`, `# porosity_std=..`, then `r,value_mean,value_min,value_max`.
void write_metric_csv(const std::filesystem::path& path, const EnsembleStats& stats);

std::string to_string(CurveKind k);
std::string to_string(Averaging a);
Averaging parse_averaging(const std::string& s);
Boundary parse_boundary(const std::string& s);
Connectivity parse_connectivity(const std::string& s);

}  // namespace texsyn
