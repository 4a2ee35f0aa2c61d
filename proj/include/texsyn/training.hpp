#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "texsyn/checkpoint.hpp"
#include "texsyn/grid.hpp"
#include "texsyn/nets.hpp"
#include "texsyn/segmentation.hpp"

namespace texsyn {

enum class LossMode { DCGAN, SAGAN };

/// One "epoch" is one paired discriminator + generator update on one minibatch.
struct TrainConfig {
  LossMode mode = LossMode::SAGAN;
  int batch_size = 8;
  long epochs = 1000;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;
  long checkpoint_every = 1000;
  /// SAGAN only: segment_dims + overlap tiling the generator output.
  std::vector<int> segment_dims;
  std::vector<int> overlap;
  TiSampling ti_sampling = TiSampling::Random;

  /// Segment layout the losses are evaluated on. DCGAN uses one whole-image segment.
  SegmentLayout layout(const nn::GeneratorSpec& g) const;
  /// Throws SpecError when the specs and the loss mode disagree.
  void validate(const nn::GeneratorSpec& g, const nn::DiscriminatorSpec& d) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossReport {
  long step = 0;
  double j_d = 0;
  double j_g = 0;
  double d_real_mean = 0;
  double d_fake_mean = 0;
};

inline constexpr double kScoreClamp = 1e-7;

/// -(1/2n) * sum(log real_i + log(1 - fake_i)) with scores clamped to [1e-7, 1 - 1e-7].
double d_loss(std::span<const double> real_scores, std::span<const double> fake_scores);
/// -(1/2n) * sum(log fake_i), the log of the product of local probabilities scaled by 1/2n.
double g_loss(std::span<const double> fake_scores);

/// d(d_loss)/d(score); zero where a score is clamped.
void d_loss_grad(std::span<const double> real_scores, std::span<const double> fake_scores,
                 std::vector<double>& d_real, std::vector<double>& d_fake);
void g_loss_grad(std::span<const double> fake_scores, std::vector<double>& d_fake);

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<nn::Param<T>*>& params);
  long t() const noexcept { return t_; }

  nn::NetParams export_state(const std::vector<nn::Param<T>*>& params) const;
  void import_state(const std::vector<nn::Param<T>*>& params, const nn::NetParams& state, long t);

 private:
  void ensure(const std::vector<nn::Param<T>*>& params);

  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

/// Networks, optimizers and step counter of one adversarial training run.
template <typename T>
struct GanState {
  GanState(const nn::GeneratorSpec& gs, const nn::DiscriminatorSpec& ds, const TrainConfig& cfg);

  nn::Generator<T> g;
  nn::Discriminator<T> d;
  Adam<T> g_opt;
  Adam<T> d_opt;
  long step = 0;
};

/// Stacks generated images [b][1][out] into segments [b*n][1][segment] in
/// row-major origin order per image.
template <typename T>
nn::Tensor<T> segment_images(const nn::Tensor<T>& images, const SegmentLayout& layout);
/// Adjoint of segment_images: overlapping gradients are summed.
template <typename T>
nn::Tensor<T> unsegment_gradients(const nn::Tensor<T>& seg_grads, const SegmentLayout& layout, int batch);

/// Zeroes and fills discriminator gradients of d_loss for one real and one
/// fake batch (two forward passes, so batch statistics stay separate).
/// Returns the losses and mean scores; j_g is left at zero.
template <typename T>
LossReport discriminator_gradients(nn::Discriminator<T>& d, const nn::Tensor<T>& real, const nn::Tensor<T>& fake,
                                   const nn::Context& ctx);

/// Zeroes and fills generator gradients of g_loss on the segments of G(input);
/// the discriminator runs with `d_ctx` and should neither update statistics
/// nor accumulate parameter gradients. Returns j_g.
template <typename T>
double generator_gradients(nn::Generator<T>& g, nn::Discriminator<T>& d, const nn::Tensor<T>& input,
                           const SegmentLayout& layout, const nn::Context& g_ctx, const nn::Context& d_ctx);

/// One discriminator update followed by one generator update on fresh fakes.
/// `tis` must be ModelRange. Throws TrainingError on a non-finite loss.
template <typename T>
LossReport train_step(GanState<T>& state, std::span<const TextureGrid> tis, const TrainConfig& config,
                      std::uint64_t step_seed);

struct TrainResult {
  nn::NetParams generator;
  nn::NetParams discriminator;
  std::vector<LossReport> history;
  std::vector<std::filesystem::path> checkpoints;
};

struct TrainOptions {
  /// Checkpoints and the loss CSV go here; nothing is written when empty.
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const LossReport&)> on_step;
};

/// Runs config.epochs steps. Step k uses seed derive_seed(config.rng_seed, k),
/// so a resumed run continues bit-identically.
TrainResult train(std::span<const TextureGrid> tis, const nn::GeneratorSpec& g_spec,
                  const nn::DiscriminatorSpec& d_spec, const TrainConfig& config,
                  const TrainOptions& options = {});

nn::Checkpoint make_checkpoint(GanState<float>& state, const TrainConfig& config);
void restore_checkpoint(GanState<float>& state, const nn::Checkpoint& ckpt);

void write_loss_csv(const std::filesystem::path& path, std::span<const LossReport> history);
std::vector<LossReport> read_loss_csv(const std::filesystem::path& path);

}  // namespace texsyn
