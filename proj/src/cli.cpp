#include "texsyn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "texsyn/error.hpp"
#include "texsyn/rng.hpp"
#include "texsyn/synthesis.hpp"

namespace texsyn {

namespace {

std::string dims_str(const std::vector<int>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
  return s;
}

// Runs f(i) for i in [0, n) on up to `threads` workers; results go to caller-owned slots.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<TextureGrid> load_tis(const RunConfig& c) {
  std::vector<TextureGrid> tis;
  for (std::size_t i = 0; i < c.ti_paths.size(); ++i) {
    const std::string key = "/ti_paths/" + std::to_string(i);
    if (!std::filesystem::exists(c.ti_paths[i])) throw ConfigError(key, c.ti_paths[i].string() + ": file not found");
    tis.push_back(load_texture(c.ti_paths[i]));
    if (tis.back().ndim() != c.generator.ndim())
      throw ConfigError(key, "training image rank does not match the generator");
  }
  return tis;
}

// Every TI must hold at least one real sample for the discriminator.
void check_ti_sizes(const RunConfig& c, const std::vector<TextureGrid>& tis) {
  const auto need = c.train.mode == LossMode::SAGAN ? c.train.segment_dims : c.generator.output_dims();
  for (std::size_t i = 0; i < tis.size(); ++i)
    for (std::size_t a = 0; a < need.size(); ++a)
      if (tis[i].dims()[a] < need[a])
        throw ConfigError("/ti_paths/" + std::to_string(i), "training image " + dims_str(tis[i].dims()) +
                                                                 " is smaller than the real sample size " +
                                                                 dims_str(need));
}

std::vector<TextureGrid> model_range(const std::vector<TextureGrid>& tis) {
  std::vector<TextureGrid> out;
  for (const auto& t : tis) out.push_back(t.domain() == ValueDomain::Binary01 ? to_model_range(t) : t);
  return out;
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_with_overrides(const CommonOptions& o) {
  auto c = load_run_config(o.config);
  if (o.seed) c.train.rng_seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
  return c;
}

int cmd_validate(const CommonOptions& o) {
  const auto c = load_with_overrides(o);
  std::cout << o.config << ": ok (" << (c.train.mode == LossMode::SAGAN ? "SAGAN" : "DCGAN") << ", output "
            << dims_str(c.generator.output_dims());
  if (c.train.mode == LossMode::SAGAN) {
    const auto l = c.train.layout(c.generator);
    std::cout << ", " << l.n << " segments of " << dims_str(l.segment_dims);
  }
  std::cout << ")\n";
  return kExitOk;
}

int cmd_train(const CommonOptions& o, const std::string& resume) {
  const auto c = load_with_overrides(o);
  const auto tis = load_tis(c);
  check_ti_sizes(c, tis);
  std::filesystem::create_directories(c.out_dir);
  {
    std::ofstream f(c.out_dir / "config.json", std::ios::trunc);
    f << to_json(c).dump(2) << "\n";
  }
  TrainOptions opt;
  opt.out_dir = c.out_dir;
  if (!resume.empty()) opt.resume_from = resume;
  const long every = std::max(1L, c.train.epochs / 20);
  opt.on_step = [&](const LossReport& r) {
    if ((r.step + 1) % every == 0 || r.step + 1 == c.train.epochs)
      std::printf("step %ld/%ld  j_d %.4f  j_g %.4f  D(real) %.3f  D(fake) %.3f\n", r.step + 1, c.train.epochs, r.j_d,
                  r.j_g, r.d_real_mean, r.d_fake_mean);
  };
  const auto result = train(tis, c.generator, c.discriminator, c.train, opt);
  std::printf("trained %zu steps; outputs in %s\n", result.history.size(), c.out_dir.string().c_str());
  return kExitOk;
}

int cmd_generate(const CommonOptions& o, bool raw) {
  const auto c = load_with_overrides(o);
  auto g = load_generator(c.checkpoint_path());
  const auto dims = c.synthesis.output_dims.empty() ? g.spec().output_dims() : c.synthesis.output_dims;
  const auto grids = generate(g, dims, c.synthesis.count, c.train.rng_seed, c.synthesis.threshold, raw);
  const auto dir = c.realizations_dir();
  std::filesystem::create_directories(dir);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().filename().string().rfind("real_", 0) == 0) std::filesystem::remove(e.path());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    char name[32];
    const char* ext = raw ? "npy" : c.synthesis.format.c_str();
    std::snprintf(name, sizeof name, "real_%04zu.%s", i, ext);
    if (raw) {
      write_npy(grids[i], dir / name);
    } else {
      save_texture(grids[i], dir / name);
    }
  }
  std::printf("wrote %zu realizations of %s to %s\n", grids.size(), dims_str(dims).c_str(), dir.string().c_str());
  return kExitOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& realizations) {
  const auto c = load_with_overrides(o);
  const std::filesystem::path dir = realizations.empty() ? c.realizations_dir() : std::filesystem::path(realizations);
  for (std::size_t i = 0; i < c.ti_paths.size(); ++i)
    if (!std::filesystem::exists(c.ti_paths[i]))
      throw ConfigError("/ti_paths/" + std::to_string(i), c.ti_paths[i].string() + ": file not found");
  const auto s = evaluate_run(dir, c.ti_paths, c.metrics, c.out_dir / "evaluation", metric_threads());
  std::printf("evaluated %d realizations against %d TIs (max lag %d)\n", s.realizations, s.tis, s.max_lag);
  std::printf("porosity: realizations %.4f +- %.4f, TIs %.4f +- %.4f\n", s.porosity_realizations_mean,
              s.porosity_realizations_std, s.porosity_tis_mean, s.porosity_tis_std);
  for (const auto& [k, v] : s.mae) std::printf("MAE %s: %.5f\n", k.c_str(), v);
  return kExitOk;
}

int cmd_bench(const CommonOptions& o) {
  const auto c = load_with_overrides(o);
  if (c.train.mode != LossMode::SAGAN)
    throw ConfigError("/mode", "bench compares DCGAN against a SAGAN layout; set mode to SAGAN");
  const auto tis = load_tis(c);
  for (std::size_t i = 0; i < tis.size(); ++i)
    for (int a = 0; a < c.generator.ndim(); ++a)
      if (tis[i].dims()[a] < c.generator.output_dims()[a])
        throw ConfigError("/ti_paths/" + std::to_string(i), "bench needs TIs at least as large as the generator output");
  const auto rows = run_bench(c, tis);
  std::filesystem::create_directories(c.out_dir);
  write_bench_csv(c.out_dir / "bench.csv", rows);
  for (const auto& r : rows)
    std::printf("%-6s D input %-10s median step %.4f s\n", r.mode.c_str(), dims_str(r.d_input_dims).c_str(),
                r.median_step_seconds);
  std::printf("SAGAN/DCGAN median step ratio: %.3f\n", rows[1].median_step_seconds / rows[0].median_step_seconds);
  return kExitOk;
}

}  // namespace

int metric_threads() {
  if (const char* env = std::getenv("TEXSYN_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::filesystem::path> list_realizations(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    const auto ext = e.path().extension();
    if (name.rfind("real_", 0) == 0 && (ext == ".png" || ext == ".sgrd")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

EvaluationSummary evaluate_run(const std::filesystem::path& realizations_dir,
                               const std::vector<std::filesystem::path>& ti_paths, const MetricOptions& options,
                               const std::filesystem::path& out_dir, int threads) {
  const auto files = list_realizations(realizations_dir);
  if (files.empty()) throw Error(realizations_dir.string() + ": no realization files (real_*.png|sgrd)");
  if (ti_paths.empty()) throw Error("evaluation needs at least one TI");
  std::vector<TextureGrid> reals(files.size()), tis(ti_paths.size());
  parallel_for(static_cast<int>(files.size()), threads, [&](int i) { reals[i] = load_texture(files[i]); });
  for (std::size_t i = 0; i < ti_paths.size(); ++i) tis[i] = load_texture(ti_paths[i]);

  int min_extent = std::numeric_limits<int>::max();
  for (const auto* set : {&reals, &tis})
    for (const auto& g : *set) {
      if (g.ndim() != reals[0].ndim()) throw Error("realizations and TIs differ in rank");
      for (int d : g.dims()) min_extent = std::min(min_extent, d);
    }
  int max_lag = options.max_lag > 0 ? options.max_lag : min_extent / 2;
  max_lag = std::min(max_lag, min_extent - 1);

  EvaluationSummary s;
  s.realizations = static_cast<int>(reals.size());
  s.tis = static_cast<int>(tis.size());
  s.max_lag = max_lag;
  std::filesystem::create_directories(out_dir / "curves");

  std::vector<CurveKind> kinds{CurveKind::S2};
  if (options.c2) kinds.push_back(CurveKind::C2);
  auto curve = [&](const TextureGrid& g, CurveKind k, Averaging a) {
    if (k == CurveKind::C2) return c2(g, options.connectivity, max_lag, a, options.boundary);
    if (a == Averaging::RadialIsotropic) return s2_radial(g, max_lag, options.boundary);
    return s2_directional(g, a, max_lag, options.boundary);
  };
  for (auto kind : kinds)
    for (auto avg : options.averaging) {
      const std::string tag = to_string(kind) + "_" + to_string(avg);
      std::vector<MetricCurve> rc(reals.size()), tc(tis.size());
      parallel_for(static_cast<int>(reals.size()), threads, [&](int i) { rc[i] = curve(reals[i], kind, avg); });
      parallel_for(static_cast<int>(tis.size()), threads, [&](int i) { tc[i] = curve(tis[i], kind, avg); });
      for (std::size_t i = 0; i < rc.size(); ++i) {
        std::ofstream f(out_dir / "curves" / (files[i].stem().string() + "_" + tag + ".csv"), std::ios::trunc);
        f << "r,value\n";
        char buf[64];
        for (std::size_t k = 0; k < rc[i].lags.size(); ++k) {
          std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", rc[i].lags[k], rc[i].values[k]);
          f << buf;
        }
      }
      const auto re = ensemble_stats(rc);
      const auto te = ensemble_stats(tc);
      write_metric_csv(out_dir / ("realizations_" + tag + ".csv"), re);
      write_metric_csv(out_dir / ("tis_" + tag + ".csv"), te);
      double mae = 0;
      for (std::size_t k = 0; k < re.mean.size(); ++k) mae += std::abs(re.mean[k] - te.mean[k]);
      s.mae[tag] = mae / static_cast<double>(re.mean.size());
      if (kind == CurveKind::S2 && avg == options.averaging.front()) {
        s.porosity_realizations_mean = re.porosity_mean;
        s.porosity_realizations_std = re.porosity_std;
        s.porosity_tis_mean = te.porosity_mean;
        s.porosity_tis_std = te.porosity_std;
      }
    }

  nlohmann::json j{{"realizations", s.realizations},
                   {"tis", s.tis},
                   {"max_lag", s.max_lag},
                   {"porosity",
                    {{"realizations", {{"mean", s.porosity_realizations_mean}, {"std", s.porosity_realizations_std}}},
                     {"tis", {{"mean", s.porosity_tis_mean}, {"std", s.porosity_tis_std}}}}},
                   {"mae", s.mae}};
  std::ofstream(out_dir / "summary.json", std::ios::trunc) << j.dump(2) << "\n";
  return s;
}

std::vector<BenchRow> run_bench(const RunConfig& config, const std::vector<TextureGrid>& tis_in) {
  const auto tis = model_range(tis_in);
  std::vector<BenchRow> rows;
  for (auto mode : {LossMode::DCGAN, LossMode::SAGAN}) {
    TrainConfig tc = config.train;
    tc.mode = mode;
    nn::DiscriminatorSpec ds = config.discriminator;
    ds.input_dims = mode == LossMode::DCGAN ? config.generator.output_dims() : config.train.segment_dims;
    GanState<float> state(config.generator, ds, tc);
    std::vector<double> times;
    for (int k = 0; k < config.bench.steps; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      train_step(state, tis, tc, derive_seed(tc.rng_seed, static_cast<std::uint64_t>(k)));
      ++state.step;
      const auto t1 = std::chrono::steady_clock::now();
      if (k >= config.bench.warmup) times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    BenchRow r;
    r.mode = mode == LossMode::DCGAN ? "DCGAN" : "SAGAN";
    r.output_dims = config.generator.output_dims();
    r.d_input_dims = ds.input_dims;
    r.segments = tc.layout(config.generator).n;
    r.timed_steps = static_cast<int>(times.size());
    double sum = 0;
    for (double t : times) sum += t;
    r.mean_step_seconds = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size();
    r.median_step_seconds = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
    rows.push_back(r);
  }
  return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(path.string() + ": cannot open for writing");
  f << "mode,output_dims,d_input_dims,segments,timed_steps,median_step_seconds,mean_step_seconds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%.6f,%.6f\n", r.segments, r.timed_steps, r.median_step_seconds,
                  r.mean_step_seconds);
    f << r.mode << "," << dims_str(r.output_dims) << "," << dims_str(r.d_input_dims) << buf;
  }
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Texture synthesis with spatially assembled and deep convolutional GANs"};
  app.require_subcommand(1);
  CommonOptions common;
  std::string resume, realizations;
  bool raw = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->required();
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--out", common.out, "override the output directory");
  };
  auto* train_cmd = app.add_subcommand("train", "train a generator; writes checkpoints and loss_history.csv");
  add_common(train_cmd);
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  auto* gen_cmd = app.add_subcommand("generate", "write realizations from a trained checkpoint");
  add_common(gen_cmd);
  gen_cmd->add_flag("--raw", raw, "write unbinarized generator output as .npy");
  auto* eval_cmd = app.add_subcommand("evaluate", "S2/C2 statistics of realizations versus the TIs");
  add_common(eval_cmd);
  eval_cmd->add_option("--realizations", realizations, "directory of real_* files (default <out>/realizations)");
  auto* bench_cmd = app.add_subcommand("bench", "median step time of DCGAN versus SAGAN");
  add_common(bench_cmd);
  auto* validate_cmd = app.add_subcommand("validate-config", "check a configuration and exit");
  add_common(validate_cmd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(common, resume);
    if (gen_cmd->parsed()) return cmd_generate(common, raw);
    if (eval_cmd->parsed()) return cmd_evaluate(common, realizations);
    if (bench_cmd->parsed()) return cmd_bench(common);
    if (validate_cmd->parsed()) return cmd_validate(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.path() << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training diverged at " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace texsyn
