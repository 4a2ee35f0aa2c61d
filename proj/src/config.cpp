#include "texsyn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "texsyn/error.hpp"
#include "texsyn/segmentation.hpp"
#include "texsyn/synthesis.hpp"

namespace texsyn {

namespace {

using nlohmann::json;

enum class Kind { Object, Int, UInt, Number, Bool, String, IntArray, IntOrIntArray, StringArray };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Object: return "an object";
    case Kind::Int: return "an integer";
    case Kind::UInt: return "a non-negative integer";
    case Kind::Number: return "a number";
    case Kind::Bool: return "a boolean";
    case Kind::String: return "a string";
    case Kind::IntArray: return "an array of integers";
    case Kind::IntOrIntArray: return "an integer or an array of integers";
    default: return "an array of strings";
  }
}

bool is_int_array(const json& v) {
  return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
}

bool matches(const json& v, Kind k) {
  switch (k) {
    case Kind::Object: return v.is_object();
    case Kind::Int: return v.is_number_integer();
    case Kind::UInt: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Kind::Number: return v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::String: return v.is_string();
    case Kind::IntArray: return is_int_array(v);
    case Kind::IntOrIntArray: return v.is_number_integer() || is_int_array(v);
    default: return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
  }
}

// Checks the keys of one object against an allow-list with expected kinds.
void check_section(const json& obj, const std::string& path, const std::vector<std::pair<std::string, Kind>>& keys,
                   const std::set<std::string>& required = {}) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& p) { return p.first == key; });
    if (it == keys.end()) throw ConfigError(path + "/" + key, "unknown key");
    if (!matches(value, it->second)) throw ConfigError(path + "/" + key, std::string("expected ") + kind_name(it->second));
  }
  for (const auto& r : required)
    if (!obj.contains(r)) throw ConfigError(path + "/" + r, "required key is missing");
}

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

void positive_dims(const std::vector<int>& v, const std::string& path) {
  require(!v.empty(), path, "must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) require(v[i] > 0, path + "/" + std::to_string(i), "must be positive");
}

std::vector<int> axes(const json& v, int nd) {
  if (v.is_number_integer()) return std::vector<int>(nd, v.get<int>());
  return v.get<std::vector<int>>();
}

const json kEmpty = json::object();

const json& section(const json& j, const char* key) { return j.contains(key) ? j.at(key) : kEmpty; }

nn::GeneratorSpec parse_generator(const json& g) {
  check_section(g, "/generator",
                {{"latent_dim", Kind::Int}, {"latent_mode", Kind::String}, {"lattice", Kind::IntArray},
                 {"lattice_channels", Kind::Int}, {"filters", Kind::IntArray}, {"kernel", Kind::IntOrIntArray},
                 {"stride", Kind::IntOrIntArray}, {"batchnorm", Kind::Bool}, {"batchnorm_momentum", Kind::Number},
                 {"init_std", Kind::Number}},
                {"lattice", "filters"});
  const auto lattice = g.at("lattice").get<std::vector<int>>();
  require(lattice.size() == 2 || lattice.size() == 3, "/generator/lattice", "must have 2 or 3 entries");
  positive_dims(lattice, "/generator/lattice");
  positive_dims(g.at("filters").get<std::vector<int>>(), "/generator/filters");
  const int nd = static_cast<int>(lattice.size());
  for (const char* k : {"kernel", "stride"})
    if (g.contains(k)) {
      const auto v = axes(g.at(k), nd);
      require(static_cast<int>(v.size()) == nd, std::string("/generator/") + k, "must have one entry per axis");
      positive_dims(v, std::string("/generator/") + k);
    }
  if (g.contains("latent_mode")) {
    const auto m = g.at("latent_mode").get<std::string>();
    require(m == "fc" || m == "direct", "/generator/latent_mode", "must be 'fc' or 'direct'");
  }
  auto spec = g.get<nn::GeneratorSpec>();
  for (int a = 0; a < nd; ++a)
    require(spec.kernel[a] >= spec.stride[a], "/generator/kernel", "kernel must be >= stride on every axis");
  require(spec.latent_dim > 0, "/generator/latent_dim", "must be positive");
  require(spec.lattice_channels >= 0, "/generator/lattice_channels", "must be non-negative");
  require(spec.batchnorm_momentum >= 0 && spec.batchnorm_momentum < 1, "/generator/batchnorm_momentum",
          "must lie in [0, 1)");
  require(spec.init_std > 0, "/generator/init_std", "must be positive");
  try {
    spec.validate();
  } catch (const SpecError& e) {
    throw ConfigError("/generator", e.what());
  }
  return spec;
}

nn::DiscriminatorSpec parse_discriminator(const json& d, const std::vector<int>& default_input) {
  check_section(d, "/discriminator",
                {{"input_dims", Kind::IntArray}, {"filters", Kind::IntArray}, {"kernel", Kind::IntOrIntArray},
                 {"stride", Kind::IntOrIntArray}, {"dropout", Kind::Number}, {"batchnorm", Kind::Bool},
                 {"batchnorm_momentum", Kind::Number}, {"init_std", Kind::Number}},
                {"filters"});
  json full = d;
  if (!full.contains("input_dims")) full["input_dims"] = default_input;
  const auto input = full.at("input_dims").get<std::vector<int>>();
  positive_dims(input, "/discriminator/input_dims");
  positive_dims(d.at("filters").get<std::vector<int>>(), "/discriminator/filters");
  const int nd = static_cast<int>(input.size());
  for (const char* k : {"kernel", "stride"})
    if (d.contains(k)) {
      const auto v = axes(d.at(k), nd);
      require(static_cast<int>(v.size()) == nd, std::string("/discriminator/") + k, "must have one entry per axis");
      positive_dims(v, std::string("/discriminator/") + k);
    }
  auto spec = full.get<nn::DiscriminatorSpec>();
  require(spec.dropout_rate >= 0 && spec.dropout_rate < 1, "/discriminator/dropout", "must lie in [0, 1)");
  require(spec.batchnorm_momentum >= 0 && spec.batchnorm_momentum < 1, "/discriminator/batchnorm_momentum",
          "must lie in [0, 1)");
  require(spec.init_std > 0, "/discriminator/init_std", "must be positive");
  try {
    spec.validate();
  } catch (const SpecError& e) {
    throw ConfigError("/discriminator", e.what());
  }
  return spec;
}

}  // namespace

std::filesystem::path RunConfig::checkpoint_path() const {
  return synthesis.checkpoint.empty() ? out_dir / "checkpoints" / "final.txck" : synthesis.checkpoint;
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  check_section(j, "",
                {{"description", Kind::String}, {"mode", Kind::String}, {"seed", Kind::UInt},
                 {"ti_paths", Kind::StringArray}, {"out_dir", Kind::String}, {"generator", Kind::Object},
                 {"discriminator", Kind::Object}, {"training", Kind::Object}, {"layout", Kind::Object},
                 {"synthesis", Kind::Object}, {"metrics", Kind::Object}, {"bench", Kind::Object}},
                {"mode", "ti_paths", "generator", "discriminator"});
  RunConfig c;

  const auto mode = j.at("mode").get<std::string>();
  require(mode == "DCGAN" || mode == "SAGAN", "/mode", "must be 'DCGAN' or 'SAGAN'");
  c.train.mode = mode == "DCGAN" ? LossMode::DCGAN : LossMode::SAGAN;
  if (j.contains("seed")) c.train.rng_seed = j.at("seed").get<std::uint64_t>();

  const auto tis = j.at("ti_paths").get<std::vector<std::string>>();
  require(!tis.empty(), "/ti_paths", "must list at least one training image");
  for (const auto& p : tis) {
    std::filesystem::path path(p);
    c.ti_paths.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
  }
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();

  c.generator = parse_generator(j.at("generator"));
  const auto out = c.generator.output_dims();
  const int nd = c.generator.ndim();

  // Layout (SAGAN) before the discriminator so input_dims can default to the segment size.
  const json& lay = section(j, "layout");
  check_section(lay, "/layout", {{"segment", Kind::IntArray}, {"overlap", Kind::IntArray}});
  if (c.train.mode == LossMode::SAGAN) {
    require(lay.contains("segment"), "/layout/segment", "SAGAN mode needs a segment size");
    c.train.segment_dims = lay.at("segment").get<std::vector<int>>();
    c.train.overlap = lay.value("overlap", std::vector<int>(nd, 0));
    require(static_cast<int>(c.train.segment_dims.size()) == nd, "/layout/segment",
            "must have one entry per generator axis");
    require(static_cast<int>(c.train.overlap.size()) == nd, "/layout/overlap", "must have one entry per generator axis");
    positive_dims(c.train.segment_dims, "/layout/segment");
    for (int a = 0; a < nd; ++a) {
      require(c.train.overlap[a] >= 0, "/layout/overlap/" + std::to_string(a), "must be non-negative");
      require(c.train.overlap[a] < c.train.segment_dims[a], "/layout/overlap/" + std::to_string(a),
              "must be smaller than the segment");
    }
    try {
      plan_layout(out, c.train.segment_dims, c.train.overlap);
    } catch (const LayoutError& e) {
      throw ConfigError("/layout/segment", e.what());
    }
  }

  c.discriminator = parse_discriminator(j.at("discriminator"),
                                        c.train.mode == LossMode::SAGAN ? c.train.segment_dims : out);

  const json& tr = section(j, "training");
  check_section(tr, "/training",
                {{"batch_size", Kind::Int}, {"epochs", Kind::Int}, {"learning_rate", Kind::Number},
                 {"adam_beta1", Kind::Number}, {"adam_beta2", Kind::Number}, {"adam_eps", Kind::Number},
                 {"checkpoint_every", Kind::Int}, {"ti_sampling", Kind::String}});
  auto& t = c.train;
  t.batch_size = tr.value("batch_size", t.batch_size);
  t.epochs = tr.value("epochs", t.epochs);
  t.learning_rate = tr.value("learning_rate", t.learning_rate);
  t.adam_beta1 = tr.value("adam_beta1", t.adam_beta1);
  t.adam_beta2 = tr.value("adam_beta2", t.adam_beta2);
  t.adam_eps = tr.value("adam_eps", t.adam_eps);
  t.checkpoint_every = tr.value("checkpoint_every", t.checkpoint_every);
  require(t.batch_size >= 4 && t.batch_size <= 64, "/training/batch_size", "must lie in [4, 64]");
  require(t.epochs >= 0 && t.epochs <= 100000, "/training/epochs", "must lie in [0, 100000]");
  require(t.learning_rate > 0, "/training/learning_rate", "must be positive");
  require(t.adam_beta1 >= 0 && t.adam_beta1 < 1, "/training/adam_beta1", "must lie in [0, 1)");
  require(t.adam_beta2 >= 0 && t.adam_beta2 < 1, "/training/adam_beta2", "must lie in [0, 1)");
  require(t.adam_eps > 0, "/training/adam_eps", "must be positive");
  require(t.checkpoint_every >= 1, "/training/checkpoint_every", "must be positive");
  const auto sampling = tr.value("ti_sampling", std::string("random"));
  require(sampling == "random" || sampling == "grid", "/training/ti_sampling", "must be 'random' or 'grid'");
  t.ti_sampling = sampling == "grid" ? TiSampling::Grid : TiSampling::Random;

  // Cross-module consistency.
  const auto& din = c.discriminator.input_dims;
  if (c.train.mode == LossMode::DCGAN) {
    require(din == out, "/discriminator/input_dims",
            "DCGAN needs discriminator input equal to the generator output");
  } else {
    require(din == c.train.segment_dims, "/discriminator/input_dims", "SAGAN needs discriminator input equal to the segment size");
    const auto w = nn::projective_field_warning(c.generator, c.train.segment_dims);
    if (!w.empty()) c.warnings.push_back("/layout/segment: " + w);
  }
  try {
    t.validate(c.generator, c.discriminator);
  } catch (const Error& e) {
    throw ConfigError("/", e.what());
  }

  const json& sy = section(j, "synthesis");
  check_section(sy, "/synthesis",
                {{"output_dims", Kind::IntArray}, {"count", Kind::Int}, {"threshold", Kind::Number},
                 {"format", Kind::String}, {"checkpoint", Kind::String}});
  auto& s = c.synthesis;
  s.output_dims = sy.value("output_dims", std::vector<int>{});
  if (!s.output_dims.empty()) {
    positive_dims(s.output_dims, "/synthesis/output_dims");
    try {
      lattice_for(c.generator, s.output_dims);
    } catch (const LayoutError& e) {
      throw ConfigError("/synthesis/output_dims", e.what());
    }
  }
  s.count = sy.value("count", s.count);
  require(s.count >= 1, "/synthesis/count", "must be positive");
  s.threshold = sy.value("threshold", s.threshold);
  require(s.threshold > -1 && s.threshold < 1, "/synthesis/threshold", "must lie in (-1, 1)");
  s.format = sy.value("format", std::string(nd == 2 ? "png" : "sgrd"));
  require(s.format == "png" || s.format == "sgrd", "/synthesis/format", "must be 'png' or 'sgrd'");
  require(!(s.format == "png" && nd == 3), "/synthesis/format", "PNG holds 2D grids only");
  if (sy.contains("checkpoint")) {
    std::filesystem::path p(sy.at("checkpoint").get<std::string>());
    s.checkpoint = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }

  const json& me = section(j, "metrics");
  check_section(me, "/metrics",
                {{"max_lag", Kind::Int}, {"boundary", Kind::String}, {"connectivity", Kind::String},
                 {"averaging", Kind::StringArray}, {"c2", Kind::Bool}});
  auto& m = c.metrics;
  m.max_lag = me.value("max_lag", 0);
  require(m.max_lag >= 0, "/metrics/max_lag", "must be non-negative");
  try {
    m.boundary = parse_boundary(me.value("boundary", std::string("truncated")));
  } catch (const DomainError& e) {
    throw ConfigError("/metrics/boundary", e.what());
  }
  try {
    m.connectivity = parse_connectivity(me.value("connectivity", std::string("face")));
  } catch (const DomainError& e) {
    throw ConfigError("/metrics/connectivity", e.what());
  }
  if (me.contains("averaging")) {
    m.averaging.clear();
    const auto names = me.at("averaging").get<std::vector<std::string>>();
    require(!names.empty(), "/metrics/averaging", "must not be empty");
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        m.averaging.push_back(parse_averaging(names[i]));
      } catch (const DomainError& e) {
        throw ConfigError("/metrics/averaging/" + std::to_string(i), e.what());
      }
      require(!(m.averaging.back() == Averaging::DirectionalZ && nd != 3), "/metrics/averaging/" + std::to_string(i),
              "axis z needs 3D grids");
    }
  }
  m.c2 = me.value("c2", true);

  const json& be = section(j, "bench");
  check_section(be, "/bench", {{"steps", Kind::Int}, {"warmup", Kind::Int}});
  c.bench.steps = be.value("steps", c.bench.steps);
  c.bench.warmup = be.value("warmup", c.bench.warmup);
  require(c.bench.warmup >= 0, "/bench/warmup", "must be non-negative");
  require(c.bench.steps > c.bench.warmup, "/bench/steps", "must exceed warmup");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", path.string() + ": cannot open config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", path.string() + ": invalid JSON: " + e.what());
  }
  auto c = parse_run_config(j, path.parent_path());
  c.source = path;
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  json tis = json::array();
  for (const auto& p : c.ti_paths) tis.push_back(p.string());
  json avg = json::array();
  for (auto a : c.metrics.averaging) avg.push_back(to_string(a));
  json j{{"mode", c.train.mode == LossMode::DCGAN ? "DCGAN" : "SAGAN"},
         {"seed", c.train.rng_seed},
         {"ti_paths", tis},
         {"out_dir", c.out_dir.string()},
         {"generator", c.generator},
         {"discriminator", c.discriminator},
         {"training",
          {{"batch_size", c.train.batch_size},
           {"epochs", c.train.epochs},
           {"learning_rate", c.train.learning_rate},
           {"adam_beta1", c.train.adam_beta1},
           {"adam_beta2", c.train.adam_beta2},
           {"adam_eps", c.train.adam_eps},
           {"checkpoint_every", c.train.checkpoint_every},
           {"ti_sampling", c.train.ti_sampling == TiSampling::Grid ? "grid" : "random"}}},
         {"synthesis",
          {{"output_dims", c.synthesis.output_dims},
           {"count", c.synthesis.count},
           {"threshold", c.synthesis.threshold},
           {"format", c.synthesis.format}}},
         {"metrics",
          {{"max_lag", c.metrics.max_lag},
           {"boundary", c.metrics.boundary == Boundary::Periodic ? "periodic" : "truncated"},
           {"connectivity", c.metrics.connectivity == Connectivity::Full ? "full" : "face"},
           {"averaging", avg},
           {"c2", c.metrics.c2}}},
         {"bench", {{"steps", c.bench.steps}, {"warmup", c.bench.warmup}}}};
  if (c.train.mode == LossMode::SAGAN) j["layout"] = {{"segment", c.train.segment_dims}, {"overlap", c.train.overlap}};
  if (!c.synthesis.checkpoint.empty()) j["synthesis"]["checkpoint"] = c.synthesis.checkpoint.string();
  return j;
}

}  // namespace texsyn
