#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "texsyn/config.hpp"

namespace texsyn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct EvaluationSummary {
  int realizations = 0;
  int tis = 0;
  int max_lag = 0;
  double porosity_realizations_mean = 0, porosity_realizations_std = 0;
  double porosity_tis_mean = 0, porosity_tis_std = 0;
  /// Mean absolute difference of ensemble-mean curves, keyed "S2_x", "C2_radial", ...
  std::map<std::string, double> mae;
};

/// Metric CSVs for realizations and TIs plus summary.json, written to out_dir.
/// Throws Error when realizations_dir holds no real_* grids.
EvaluationSummary evaluate_run(const std::filesystem::path& realizations_dir,
                               const std::vector<std::filesystem::path>& ti_paths, const MetricOptions& options,
                               const std::filesystem::path& out_dir, int threads = 1);

struct BenchRow {
  std::string mode;
  std::vector<int> output_dims;
  std::vector<int> d_input_dims;
  int segments = 1;
  int timed_steps = 0;
  double median_step_seconds = 0;
  double mean_step_seconds = 0;
};

/// Times train steps for DCGAN (whole-image discriminator) and SAGAN (the
/// configured segment layout) with the same generator.
std::vector<BenchRow> run_bench(const RunConfig& config, const std::vector<TextureGrid>& tis);
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

/// Realization files (real_NNNN.png|sgrd) in a directory, sorted by name.
std::vector<std::filesystem::path> list_realizations(const std::filesystem::path& dir);

/// Thread count for metric fan-out: TEXSYN_THREADS if set, else hardware concurrency.
int metric_threads();

/// Command-line entry point; args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace texsyn
