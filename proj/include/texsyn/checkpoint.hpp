#pragma once

#include <filesystem>

#include <json.hpp>

#include "texsyn/tensor.hpp"

namespace texsyn::nn {

/// Versioned container: JSON metadata plus named float32 tensors.
///
/// On-disk layout (all integers little-endian u32):
///   "TXCK" | version | json length | json bytes | tensor count |
///   per tensor: name length | name | ndim | dims... | float32 data
struct Checkpoint {
  nlohmann::json meta;
  NetParams tensors;

  /// Tensors whose name starts with `prefix`, with the prefix stripped.
  NetParams group(const std::string& prefix) const;
  void add_group(const std::string& prefix, const NetParams& params);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace texsyn::nn
