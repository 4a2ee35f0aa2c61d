#include "texsyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "texsyn/error.hpp"
#include "texsyn/rng.hpp"

namespace texsyn {

namespace {

constexpr std::uint64_t kGeneratorInitStream = 0x67656e;
constexpr std::uint64_t kDiscriminatorInitStream = 0x646973;
constexpr std::uint64_t kStepStream = 0x73746570;

double clamp_score(double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); }

bool in_clamp(double s) { return s > kScoreClamp && s < 1.0 - kScoreClamp; }

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

template <typename T>
std::vector<double> scores_of(const nn::Tensor<T>& t) {
  return std::vector<double>(t.v.begin(), t.v.end());
}

template <typename T>
nn::Tensor<T> tensor_of(const std::vector<double>& g) {
  nn::Tensor<T> t(static_cast<int>(g.size()), 1, nn::Extent{});
  for (std::size_t i = 0; i < g.size(); ++i) t.v[i] = static_cast<T>(g[i]);
  return t;
}

template <typename T>
nn::Tensor<T> stack_segments(const std::vector<TextureGrid>& segs) {
  const auto e = nn::to_extent(segs.front().dims());
  nn::Tensor<T> t(static_cast<int>(segs.size()), 1, e);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto d = segs[i].data();
    std::copy(d.begin(), d.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Calls f(image_offset, segment_offset, run) for every row of a segment box.
template <typename F>
void for_each_segment_row(const nn::Extent& img, const nn::Extent& seg, const std::vector<int>& origin,
                          F&& f) {
  const int oz = origin.size() == 3 ? origin[0] : 0;
  const int oy = origin[origin.size() - 2];
  const int ox = origin.back();
  for (int z = 0; z < seg.d; ++z)
    for (int y = 0; y < seg.h; ++y)
      f((static_cast<std::size_t>(oz + z) * img.h + (oy + y)) * img.w + ox,
        (static_cast<std::size_t>(z) * seg.h + y) * seg.w, seg.w);
}

}  // namespace

// ---------------------------------------------------------------------------

SegmentLayout TrainConfig::layout(const nn::GeneratorSpec& g) const {
  const auto out = g.output_dims();
  if (mode == LossMode::DCGAN) return plan_layout(out, out, std::vector<int>(out.size(), 0));
  std::vector<int> ov = overlap.empty() ? std::vector<int>(out.size(), 0) : overlap;
  return plan_layout(out, segment_dims, ov);
}

void TrainConfig::validate(const nn::GeneratorSpec& g, const nn::DiscriminatorSpec& d) const {
  g.validate();
  d.validate();
  if (batch_size < 4 || batch_size > 64) throw SpecError("batch_size must lie in [4, 64]");
  if (epochs < 0 || epochs > 100000) throw SpecError("epochs must lie in [0, 100000]");
  if (checkpoint_every < 1) throw SpecError("checkpoint_every must be positive");
  if (!(learning_rate > 0)) throw SpecError("learning_rate must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw SpecError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw SpecError("adam_eps must be positive");
  const auto out = g.output_dims();
  if (d.input_dims.size() != out.size()) throw SpecError("generator and discriminator ranks differ");
  if (mode == LossMode::DCGAN) {
    if (d.input_dims != out)
      throw SpecError("DCGAN requires generator output " + join(out) + " == discriminator input " +
                      join(d.input_dims));
  } else {
    const auto l = layout(g);
    if (l.segment_dims != d.input_dims)
      throw SpecError("SAGAN requires segment dims " + join(l.segment_dims) + " == discriminator input " +
                      join(d.input_dims));
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"mode", c.mode == LossMode::DCGAN ? "DCGAN" : "SAGAN"},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"seed", c.rng_seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"segment", c.segment_dims},
                     {"overlap", c.overlap},
                     {"ti_sampling", c.ti_sampling == TiSampling::Grid ? "grid" : "random"}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  const std::string mode = j.value("mode", std::string("SAGAN"));
  if (mode == "DCGAN") {
    c.mode = LossMode::DCGAN;
  } else if (mode == "SAGAN") {
    c.mode = LossMode::SAGAN;
  } else {
    throw SpecError("mode must be DCGAN or SAGAN, got '" + mode + "'");
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.rng_seed = j.value("seed", c.rng_seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.segment_dims = j.value("segment", std::vector<int>{});
  c.overlap = j.value("overlap", std::vector<int>{});
  const std::string s = j.value("ti_sampling", std::string("random"));
  if (s == "random") {
    c.ti_sampling = TiSampling::Random;
  } else if (s == "grid") {
    c.ti_sampling = TiSampling::Grid;
  } else {
    throw SpecError("ti_sampling must be 'random' or 'grid', got '" + s + "'");
  }
}

// ---------------------------------------------------------------------------

double d_loss(std::span<const double> real, std::span<const double> fake) {
  if (real.empty() || fake.empty()) throw Error("d_loss needs non-empty score lists");
  if (real.size() != fake.size()) throw Error("d_loss needs equally many real and fake scores");
  double s = 0;
  for (std::size_t i = 0; i < real.size(); ++i)
    s += std::log(clamp_score(real[i])) + std::log(1.0 - clamp_score(fake[i]));
  return -s / (2.0 * static_cast<double>(real.size()));
}

double g_loss(std::span<const double> fake) {
  if (fake.empty()) throw Error("g_loss needs a non-empty score list");
  double s = 0;
  for (double f : fake) s += std::log(clamp_score(f));
  return -s / (2.0 * static_cast<double>(fake.size()));
}

void d_loss_grad(std::span<const double> real, std::span<const double> fake, std::vector<double>& d_real,
                 std::vector<double>& d_fake) {
  const double two_n = 2.0 * static_cast<double>(real.size());
  d_real.resize(real.size());
  d_fake.resize(fake.size());
  for (std::size_t i = 0; i < real.size(); ++i) d_real[i] = in_clamp(real[i]) ? -1.0 / (two_n * real[i]) : 0.0;
  for (std::size_t i = 0; i < fake.size(); ++i)
    d_fake[i] = in_clamp(fake[i]) ? 1.0 / (two_n * (1.0 - fake[i])) : 0.0;
}

void g_loss_grad(std::span<const double> fake, std::vector<double>& d_fake) {
  const double two_n = 2.0 * static_cast<double>(fake.size());
  d_fake.resize(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) d_fake[i] = in_clamp(fake[i]) ? -1.0 / (two_n * fake[i]) : 0.0;
}

// ---------------------------------------------------------------------------

template <typename T>
void Adam<T>::ensure(const std::vector<nn::Param<T>*>& params) {
  if (m_.size() == params.size()) return;
  m_.clear();
  v_.clear();
  for (auto* p : params) {
    m_.emplace_back(p->value.size(), T(0));
    v_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(const std::vector<nn::Param<T>*>& params) {
  ensure(params);
  ++t_;
  const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(b1_, static_cast<double>(t_))));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(b2_, static_cast<double>(t_))));
  const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (!p->trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T g = p->grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      p->value[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
  }
}

template <typename T>
nn::NetParams Adam<T>::export_state(const std::vector<nn::Param<T>*>& params) const {
  nn::NetParams out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->trainable) continue;
    const bool have = k < m_.size();
    const std::size_t n = params[k]->value.size();
    out.push_back({"m." + params[k]->name, params[k]->shape,
                   have ? std::vector<float>(m_[k].begin(), m_[k].end()) : std::vector<float>(n, 0.0f)});
    out.push_back({"v." + params[k]->name, params[k]->shape,
                   have ? std::vector<float>(v_[k].begin(), v_[k].end()) : std::vector<float>(n, 0.0f)});
  }
  return out;
}

template <typename T>
void Adam<T>::import_state(const std::vector<nn::Param<T>*>& params, const nn::NetParams& state, long t) {
  m_.clear();
  v_.clear();
  auto find = [&](const std::string& name) -> const nn::NamedTensor* {
    for (const auto& s : state)
      if (s.name == name) return &s;
    return nullptr;
  };
  for (auto* p : params) {
    std::vector<T> m(p->value.size(), T(0)), v(p->value.size(), T(0));
    if (p->trainable) {
      const auto* ms = find("m." + p->name);
      const auto* vs = find("v." + p->name);
      if (!ms || !vs || ms->data.size() != m.size() || vs->data.size() != v.size())
        throw FormatError("optimizer state missing or malformed for '" + p->name + "'");
      m.assign(ms->data.begin(), ms->data.end());
      v.assign(vs->data.begin(), vs->data.end());
    }
    m_.push_back(std::move(m));
    v_.push_back(std::move(v));
  }
  t_ = t;
}

template <typename T>
GanState<T>::GanState(const nn::GeneratorSpec& gs, const nn::DiscriminatorSpec& ds, const TrainConfig& cfg)
    : g(gs, derive_seed(cfg.rng_seed, kGeneratorInitStream)),
      d(ds, derive_seed(cfg.rng_seed, kDiscriminatorInitStream)),
      g_opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      d_opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

// ---------------------------------------------------------------------------

template <typename T>
nn::Tensor<T> segment_images(const nn::Tensor<T>& images, const SegmentLayout& layout) {
  const auto seg = nn::to_extent(layout.segment_dims);
  const auto origins = layout.origins();
  nn::Tensor<T> out(images.n * layout.n, images.c, seg);
  const std::size_t ivol = images.s.volume(), svol = seg.volume();
  for (int b = 0; b < images.n; ++b)
    for (std::size_t i = 0; i < origins.size(); ++i) {
      T* dst = out.sample(b * layout.n + static_cast<int>(i));
      const T* src = images.sample(b);
      for (int ch = 0; ch < images.c; ++ch)
        for_each_segment_row(images.s, seg, origins[i], [&](std::size_t io, std::size_t so, int run) {
          std::copy_n(src + ch * ivol + io, run, dst + ch * svol + so);
        });
    }
  return out;
}

template <typename T>
nn::Tensor<T> unsegment_gradients(const nn::Tensor<T>& seg_grads, const SegmentLayout& layout, int batch) {
  const auto img = nn::to_extent(layout.output_dims);
  const auto origins = layout.origins();
  nn::Tensor<T> out(batch, seg_grads.c, img);
  const std::size_t ivol = img.volume(), svol = seg_grads.s.volume();
  for (int b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < origins.size(); ++i) {
      const T* src = seg_grads.sample(b * layout.n + static_cast<int>(i));
      T* dst = out.sample(b);
      for (int ch = 0; ch < seg_grads.c; ++ch)
        for_each_segment_row(img, seg_grads.s, origins[i], [&](std::size_t io, std::size_t so, int run) {
          for (int k = 0; k < run; ++k) dst[ch * ivol + io + k] += src[ch * svol + so + k];
        });
    }
  return out;
}

template <typename T>
LossReport discriminator_gradients(nn::Discriminator<T>& d, const nn::Tensor<T>& real, const nn::Tensor<T>& fake,
                                   const nn::Context& ctx) {
  d.zero_grad();
  const auto real_scores = scores_of(d.forward(real, ctx));
  std::vector<double> d_real, d_fake;
  // Gradients w.r.t. real scores do not depend on the fake scores.
  d_loss_grad(real_scores, real_scores, d_real, d_fake);
  d.backward(tensor_of<T>(d_real), ctx);
  const auto fake_scores = scores_of(d.forward(fake, ctx));
  d_loss_grad(real_scores, fake_scores, d_real, d_fake);
  d.backward(tensor_of<T>(d_fake), ctx);
  LossReport r;
  r.j_d = d_loss(real_scores, fake_scores);
  r.d_real_mean = mean(real_scores);
  r.d_fake_mean = mean(fake_scores);
  return r;
}

template <typename T>
double generator_gradients(nn::Generator<T>& g, nn::Discriminator<T>& d, const nn::Tensor<T>& input,
                           const SegmentLayout& layout, const nn::Context& g_ctx, const nn::Context& d_ctx) {
  const auto images = g.forward(input, g_ctx);
  const auto scores = scores_of(d.forward(segment_images(images, layout), d_ctx));
  std::vector<double> d_gen;
  g_loss_grad(scores, d_gen);
  const auto seg_grads = d.backward(tensor_of<T>(d_gen), d_ctx);
  g.zero_grad();
  g.backward(unsegment_gradients(seg_grads, layout, images.n), g_ctx);
  return g_loss(scores);
}

template <typename T>
LossReport train_step(GanState<T>& state, std::span<const TextureGrid> tis, const TrainConfig& config,
                      std::uint64_t step_seed) {
  const SegmentLayout layout = config.layout(state.g.spec());
  const int batch = config.batch_size;
  std::mt19937_64 rng(step_seed);
  const nn::Context train_ctx{nn::Mode::Train, &rng, true, true};
  const nn::Context frozen_d{nn::Mode::Train, &rng, false, false};

  // Discriminator update: batch * n TI crops against the n segments of each fake.
  const auto crops =
      sample_ti_segments(tis, layout.segment_dims, batch * layout.n, rng(), config.ti_sampling, layout.overlap);
  const auto real = stack_segments<T>(crops.segments);
  const auto fake = segment_images(state.g.forward(state.g.sample_input(batch, rng), train_ctx), layout);
  LossReport report = discriminator_gradients(state.d, real, fake, train_ctx);
  report.step = state.step;
  if (!std::isfinite(report.j_d)) throw TrainingError(state.step, "non-finite discriminator loss");
  state.d_opt.step(state.d.params());

  // Generator update through the assembled product of local probabilities.
  report.j_g = generator_gradients(state.g, state.d, state.g.sample_input(batch, rng), layout, train_ctx, frozen_d);
  if (!std::isfinite(report.j_g)) throw TrainingError(state.step, "non-finite generator loss");
  state.g_opt.step(state.g.params());
  return report;
}

// ---------------------------------------------------------------------------

nn::Checkpoint make_checkpoint(GanState<float>& state, const TrainConfig& config) {
  nn::Checkpoint ckpt;
  ckpt.meta = nlohmann::json{{"format", "texsyn-checkpoint"},
                             {"generator", state.g.spec()},
                             {"discriminator", state.d.spec()},
                             {"train", config},
                             {"step", state.step},
                             {"adam_t", {{"generator", state.g_opt.t()}, {"discriminator", state.d_opt.t()}}}};
  const auto gp = state.g.params();
  const auto dp = state.d.params();
  ckpt.add_group("generator/", state.g.export_params());
  ckpt.add_group("discriminator/", state.d.export_params());
  ckpt.add_group("adam_generator/", state.g_opt.export_state(gp));
  ckpt.add_group("adam_discriminator/", state.d_opt.export_state(dp));
  return ckpt;
}

void restore_checkpoint(GanState<float>& state, const nn::Checkpoint& ckpt) {
  const auto gp = state.g.params();
  const auto dp = state.d.params();
  nn::import_params(gp, ckpt.group("generator/"));
  nn::import_params(dp, ckpt.group("discriminator/"));
  const auto& t = ckpt.meta.at("adam_t");
  state.g_opt.import_state(gp, ckpt.group("adam_generator/"), t.at("generator").get<long>());
  state.d_opt.import_state(dp, ckpt.group("adam_discriminator/"), t.at("discriminator").get<long>());
  state.step = ckpt.meta.at("step").get<long>();
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossReport> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << "step,j_d,j_g,d_real_mean,d_fake_mean\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%ld,%.10g,%.10g,%.10g,%.10g\n", r.step, r.j_d, r.j_g, r.d_real_mean,
                  r.d_fake_mean);
    out << buf;
  }
}

std::vector<LossReport> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  std::vector<LossReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossReport r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &r.step, &r.j_d, &r.j_g, &r.d_real_mean,
                    &r.d_fake_mean) != 5)
      throw FormatError(path.string() + ": malformed loss row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

TrainResult train(std::span<const TextureGrid> tis, const nn::GeneratorSpec& g_spec,
                  const nn::DiscriminatorSpec& d_spec, const TrainConfig& config, const TrainOptions& options) {
  if (tis.empty()) throw Error("training needs at least one TI");
  config.validate(g_spec, d_spec);
  std::vector<TextureGrid> model_tis;
  for (const auto& ti : tis)
    model_tis.push_back(ti.domain() == ValueDomain::Binary01 ? to_model_range(ti) : ti);

  GanState<float> state(g_spec, d_spec, config);
  TrainResult result;
  const bool writing = !options.out_dir.empty();
  const auto ckpt_dir = options.out_dir / "checkpoints";
  const auto csv = options.out_dir / "loss_history.csv";
  if (writing) std::filesystem::create_directories(ckpt_dir);

  if (options.resume_from) {
    restore_checkpoint(state, nn::read_checkpoint(*options.resume_from));
    if (writing && std::filesystem::exists(csv))
      for (const auto& r : read_loss_csv(csv))
        if (r.step < state.step) result.history.push_back(r);
  }

  const std::uint64_t step_base = derive_seed(config.rng_seed, kStepStream);
  while (state.step < config.epochs) {
    std::optional<nn::Checkpoint> last_good;
    if (writing) last_good = make_checkpoint(state, config);
    LossReport report;
    try {
      report = train_step(state, model_tis, config, derive_seed(step_base, static_cast<std::uint64_t>(state.step)));
    } catch (const TrainingError&) {
      if (writing) {
        const auto p = ckpt_dir / "last_good.txck";
        nn::write_checkpoint(p, *last_good);
        result.checkpoints.push_back(p);
        write_loss_csv(csv, result.history);
      }
      throw;
    }
    ++state.step;
    result.history.push_back(report);
    if (options.on_step) options.on_step(report);
    if (writing && state.step % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "ckpt_%06ld.txck", state.step);
      nn::write_checkpoint(ckpt_dir / name, make_checkpoint(state, config));
      result.checkpoints.push_back(ckpt_dir / name);
    }
  }
  if (writing) {
    nn::write_checkpoint(ckpt_dir / "final.txck", make_checkpoint(state, config));
    result.checkpoints.push_back(ckpt_dir / "final.txck");
    write_loss_csv(csv, result.history);
  }
  result.generator = state.g.export_params();
  result.discriminator = state.d.export_params();
  return result;
}

template class Adam<float>;
template class Adam<double>;
template struct GanState<float>;
template struct GanState<double>;
template nn::Tensor<float> segment_images(const nn::Tensor<float>&, const SegmentLayout&);
template nn::Tensor<double> segment_images(const nn::Tensor<double>&, const SegmentLayout&);
template nn::Tensor<float> unsegment_gradients(const nn::Tensor<float>&, const SegmentLayout&, int);
template nn::Tensor<double> unsegment_gradients(const nn::Tensor<double>&, const SegmentLayout&, int);
template LossReport discriminator_gradients(nn::Discriminator<float>&, const nn::Tensor<float>&,
                                            const nn::Tensor<float>&, const nn::Context&);
template LossReport discriminator_gradients(nn::Discriminator<double>&, const nn::Tensor<double>&,
                                            const nn::Tensor<double>&, const nn::Context&);
template double generator_gradients(nn::Generator<float>&, nn::Discriminator<float>&, const nn::Tensor<float>&,
                                    const SegmentLayout&, const nn::Context&, const nn::Context&);
template double generator_gradients(nn::Generator<double>&, nn::Discriminator<double>&, const nn::Tensor<double>&,
                                    const SegmentLayout&, const nn::Context&, const nn::Context&);
template LossReport train_step(GanState<float>&, std::span<const TextureGrid>, const TrainConfig&, std::uint64_t);
template LossReport train_step(GanState<double>&, std::span<const TextureGrid>, const TrainConfig&, std::uint64_t);

}  // namespace texsyn
