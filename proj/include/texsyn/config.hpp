#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "texsyn/metrics.hpp"
#include "texsyn/nets.hpp"
#include "texsyn/training.hpp"

namespace texsyn {

struct SynthesisOptions {
  std::vector<int> output_dims;  // empty: the training output size
  int count = 20;
  double threshold = 0.0;
  std::string format;                  // "png" or "sgrd"; empty picks png for 2D, sgrd for 3D
  std::filesystem::path checkpoint;    // empty: <out_dir>/checkpoints/final.txck
};

struct MetricOptions {
  int max_lag = 0;  // 0: min(dims) / 2, capped below every extent
  Boundary boundary = Boundary::Truncated;
  Connectivity connectivity = Connectivity::Face;
  std::vector<Averaging> averaging{Averaging::DirectionalX, Averaging::DirectionalY};
  bool c2 = true;
};

struct BenchOptions {
  int steps = 150;  // total steps per mode
  int warmup = 50;  // steps before the timed window
};

/// Everything one CLI invocation needs, resolved from a JSON file.
struct RunConfig {
  std::filesystem::path source;
  std::vector<std::filesystem::path> ti_paths;
  std::filesystem::path out_dir = "out";
  nn::GeneratorSpec generator;
  nn::DiscriminatorSpec discriminator;
  TrainConfig train;
  SynthesisOptions synthesis;
  MetricOptions metrics;
  BenchOptions bench;
  /// Non-fatal diagnostics (e.g. segments holding fewer than two projective fields).
  std::vector<std::string> warnings;

  std::filesystem::path checkpoint_path() const;
  std::filesystem::path realizations_dir() const { return out_dir / "realizations"; }
};

/// Parses and cross-validates a config. Relative TI paths resolve against
/// base_dir. Throws ConfigError naming the JSON path of the offending key.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// The resolved config as JSON (written next to training outputs).
nlohmann::json to_json(const RunConfig& c);

}  // namespace texsyn
