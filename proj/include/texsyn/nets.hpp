#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "texsyn/layers.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn::nn {

/// How the latent lattice z' is produced.
///  - Fc: z (latent_dim) -> fully connected head -> z' on the training lattice.
///  - Direct: z' is sampled i.i.d. standard normal per lattice column; no head.
enum class LatentMode { Fc, Direct };

struct GeneratorSpec {
  int latent_dim = 100;
  LatentMode latent_mode = LatentMode::Direct;
  std::vector<int> lattice_dims;
  int lattice_channels = 0;  // 0 means filters.front()
  std::vector<int> filters;
  std::vector<int> kernel;  // per spatial axis
  std::vector<int> stride;  // per spatial axis
  bool use_batchnorm = true;
  double batchnorm_momentum = 0.8;
  double init_std = 0.02;

  int ndim() const noexcept { return static_cast<int>(lattice_dims.size()); }
  int depth() const noexcept { return static_cast<int>(filters.size()); }
  int channels() const noexcept { return lattice_channels > 0 ? lattice_channels : filters.front(); }
  /// Per-axis upscale factor stride^depth.
  std::vector<int> scale() const;
  std::vector<int> output_dims() const;
  std::vector<int> output_dims_for(const std::vector<int>& lattice) const;

  /// Throws SpecError on an inconsistent spec.
  void validate() const;
};

struct DiscriminatorSpec {
  std::vector<int> input_dims;
  std::vector<int> filters;
  std::vector<int> kernel;
  std::vector<int> stride;
  double dropout_rate = 0.25;
  bool use_batchnorm = true;
  double batchnorm_momentum = 0.8;
  double init_std = 0.02;

  int ndim() const noexcept { return static_cast<int>(input_dims.size()); }
  /// Feature-map dims after each strided conv (ceil division).
  std::vector<std::vector<int>> feature_dims() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);

/// Per-axis extent of the output region driven by one z' column:
/// PF = 1; PF = (PF - 1) * stride + kernel per transposed conv, then the
/// final stride-1 conv adds kernel - 1.
std::vector<int> projective_field(const GeneratorSpec& spec);

/// Non-empty when a segment holds fewer than two projective fields on some axis.
std::string projective_field_warning(const GeneratorSpec& spec, const std::vector<int>& segment_dims);

template <typename T>
class Generator {
 public:
  Generator(GeneratorSpec spec, std::uint64_t seed);
  Generator(GeneratorSpec spec, const NetParams& params);

  const GeneratorSpec& spec() const noexcept { return spec_; }

  /// Network input for n samples: z' lattices (Direct) or z vectors (Fc).
  Tensor<T> sample_input(int n, std::mt19937_64& rng) const;
  /// Direct-mode z' on an arbitrary lattice.
  Tensor<T> sample_lattice(int n, const std::vector<int>& lattice, std::mt19937_64& rng) const;

  /// Full forward from sample_input(); output [n][1][output extent] in [-1, 1].
  Tensor<T> forward(const Tensor<T>& input, const Context& ctx);
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx);

  /// Fc head only: z -> z' on the training lattice.
  Tensor<T> head(const Tensor<T>& z, const Context& ctx);
  /// Convolutional body only: z' lattice of any size -> image.
  Tensor<T> body(const Tensor<T>& lattice, const Context& ctx);

  std::vector<Param<T>*> params();
  NetParams export_params();
  void zero_grad();

 private:
  void build();

  GeneratorSpec spec_;
  Sequential<T> head_;
  Sequential<T> body_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorSpec spec, std::uint64_t seed);
  Discriminator(DiscriminatorSpec spec, const NetParams& params);

  const DiscriminatorSpec& spec() const noexcept { return spec_; }

  /// Input [n][1][input extent]; output [n][1][1] probabilities.
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx);
  Tensor<T> backward(const Tensor<T>& dy, const Context& ctx);

  std::vector<Param<T>*> params();
  NetParams export_params();
  void zero_grad();

 private:
  void build();

  DiscriminatorSpec spec_;
  Sequential<T> net_;
};

NetParams build_generator(const GeneratorSpec& spec, std::uint64_t seed);
NetParams build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

/// Writes `params` into `dst` (matched by name and shape).
template <typename T>
void import_params(const std::vector<Param<T>*>& dst, const NetParams& params);

template <typename T>
NetParams export_params(const std::vector<Param<T>*>& src);

}  // namespace texsyn::nn
