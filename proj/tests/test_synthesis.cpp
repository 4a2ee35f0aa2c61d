#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "texsyn/error.hpp"
#include "texsyn/metrics.hpp"
#include "texsyn/procedural.hpp"
#include "texsyn/synthesis.hpp"
#include "texsyn/training.hpp"

using namespace texsyn;

namespace {

using V = std::vector<int>;

nn::GeneratorSpec small_g(nn::LatentMode mode = nn::LatentMode::Direct) {
  nn::GeneratorSpec g;
  g.lattice_dims = {4, 4};
  g.filters = {16, 8};
  g.kernel = {3, 3};
  g.stride = {2, 2};
  g.latent_mode = mode;
  g.latent_dim = 12;
  g.init_std = 0.2;
  return g;
}

// Columns [0, cut) from a, the rest from b.
TextureGrid splice_columns(const TextureGrid& a, const TextureGrid& b, int cut) {
  const int h = a.dims()[0], w = a.dims()[1];
  std::vector<float> v(a.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[y * w + x] = x < cut ? a[y * w + x] : b[y * w + x];
  return TextureGrid(a.dims(), v, a.domain());
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("lattice for requested output sizes") {
    nn::GeneratorSpec g;
    g.lattice_dims = {32, 32};
    g.filters = {64, 32, 16};
    g.kernel = {5, 5};
    g.stride = {2, 2};
    CHECK(lattice_for(g, {512, 512}) == V{64, 64});
    CHECK(lattice_for(g, {256, 256}) == g.lattice_dims);
    CHECK(lattice_for(g, {528, 1040}) == V{66, 130});
    try {
      lattice_for(g, {300, 300});
      FAIL("expected LayoutError");
    } catch (const LayoutError& e) {
      CHECK(std::string(e.what()).find("nearest valid sizes: 296, 304") != std::string::npos);
    }
    CHECK_THROWS_AS(lattice_for(g, {4, 4}), LayoutError);
    CHECK_THROWS_AS(lattice_for(g, {256, 256, 256}), LayoutError);
  }

  TEST_CASE("realizations are reproducible and independent of count") {
    nn::Generator<float> g(small_g(), 1);
    const auto a = generate(g, {}, 3, 42);
    const auto b = generate(g, {}, 5, 42);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 5);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
    CHECK(a[0] != a[1]);
    CHECK(a[0].dims() == V{16, 16});
    CHECK(a[0].domain() == ValueDomain::Binary01);
    CHECK(generate(g, {}, 1, 43)[0] != a[0]);

    const auto raw = generate(g, {}, 2, 42, 0.0, true);
    CHECK(raw[0].domain() == ValueDomain::ModelRange);
    for (float v : raw[0].data()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
    CHECK(binarize(raw[0]) == a[0]);
    CHECK_THROWS_AS(generate(g, {}, 0, 1), DomainError);
  }

  TEST_CASE("enlarged outputs") {
    nn::Generator<float> g(small_g(), 2);
    const auto big = generate(g, {32, 48}, 2, 7);
    CHECK(big[0].dims() == V{32, 48});
    CHECK_THROWS_AS(generate(g, {30, 32}, 1, 7), LayoutError);

    nn::Generator<float> f(small_g(nn::LatentMode::Fc), 2);
    CHECK(generate(f, {32, 32}, 1, 7)[0].dims() == V{32, 32});
    // Fc mode can only tile whole trained lattices.
    CHECK_THROWS_AS(generate(f, {24, 32}, 1, 7), LayoutError);
  }

  TEST_CASE("tiled fc lattices use independent head draws") {
    nn::Generator<float> f(small_g(nn::LatentMode::Fc), 3);
    const auto y = generate(f, {16, 32}, 1, 9, 0.0, true)[0];
    // Left and right halves come from different latent vectors.
    bool differ = false;
    for (int r = 0; r < 16 && !differ; ++r)
      for (int c = 0; c < 16; ++c) differ = differ || y[r * 32 + c] != y[r * 32 + 16 + c];
    CHECK(differ);
  }

  TEST_CASE("checkpoint round trip feeds synthesis") {
    testutil::TempDir tmp("synth");
    TrainConfig cfg;
    cfg.segment_dims = {10, 10};
    cfg.overlap = {4, 4};
    nn::DiscriminatorSpec d;
    d.input_dims = {10, 10};
    d.filters = {4};
    d.kernel = {3, 3};
    d.stride = {2, 2};
    GanState<float> state(small_g(), d, cfg);
    nn::write_checkpoint(tmp / "c.txck", make_checkpoint(state, cfg));
    SynthesisRequest req;
    req.checkpoint = tmp / "c.txck";
    req.count = 2;
    req.rng_seed = 5;
    const auto viaReq = generate(req);
    const auto direct = generate(state.g, {}, 2, 5);
    CHECK(viaReq == direct);
    auto loaded = load_generator(tmp / "c.txck");
    CHECK(loaded.export_params() == state.g.export_params());
  }

  TEST_CASE("constant grids have zero discrepancy") {
    const auto layout = plan_layout(V{128, 128}, V{66, 66}, V{4, 4});
    for (float v : {0.0f, 1.0f}) {
      const auto rep = seam_scan(TextureGrid::filled({128, 128}, v, ValueDomain::Binary01), layout);
      REQUIRE(rep.boundaries.size() == 2);
      for (const auto& s : rep.boundaries) {
        CHECK(s.discrepancy == 0.0);
        CHECK(s.z == 0.0);
        CHECK(s.position == 64);
      }
    }
  }

  TEST_CASE("seam discrepancy matches direct pair counting") {
    std::mt19937_64 rng(1);
    const auto g = oracle::random_binary({40, 40}, 0.4, rng);
    const auto layout = plan_layout(V{40, 40}, V{22, 22}, V{4, 4});
    const auto rep = seam_scan(g, layout, 3);
    REQUIRE(rep.boundaries.size() == 2);
    // Fraction of foreground pairs at lag r whose lower index along the axis lies in [lo, hi).
    auto frac = [&](bool xaxis, int r, int lo, int hi) {
      long hits = 0, pairs = 0;
      for (int i = lo; i < hi; ++i)
        for (int j = 0; j < 40; ++j) {
          const int y0 = xaxis ? j : i, x0 = xaxis ? i : j;
          const int y1 = xaxis ? y0 : y0 + r, x1 = xaxis ? x0 + r : x0;
          ++pairs;
          hits += g[y0 * 40 + x0] == 1.0f && g[y1 * 40 + x1] == 1.0f;
        }
      return double(hits) / pairs;
    };
    for (const auto& s : rep.boundaries) {
      CHECK(s.position == 20);
      const bool xaxis = s.axis == 1;
      double total = 0;
      for (int r = 1; r <= 3; ++r)
        total += 0.5 * (frac(xaxis, r, 20 - 2 * r, 20 - r) + frac(xaxis, r, 20, 20 + r)) - frac(xaxis, r, 20 - r, 20);
      CHECK(s.discrepancy == doctest::Approx(total / 3).epsilon(1e-12));
    }
    // Lines 6..14 and 26..34 form the reference on each axis.
    CHECK(rep.interior_count == V{18, 18});
  }

  TEST_CASE("window and reference size checks") {
    const auto g = bernoulli_grid({64, 64}, 0.3, 1);
    const auto layout = plan_layout(V{64, 64}, V{34, 34}, V{4, 4});
    // One 64 x 64 grid leaves only two reference lines per axis at the default window.
    CHECK_THROWS_AS(seam_scan(g, layout), DomainError);
    CHECK_NOTHROW(seam_scan(g, layout, 3));
    CHECK_THROWS_AS(seam_scan(g, layout, 34), DomainError);
    std::vector<TextureGrid> many;
    for (int i = 0; i < 20; ++i) many.push_back(bernoulli_grid({64, 64}, 0.3, 100 + i));
    const auto rep = seam_scan(many, layout);
    CHECK(rep.boundaries.size() == 40);
    CHECK(rep.interior_count == V{40, 40});
    CHECK(rep.boundaries.back().grid == 19);
  }

  TEST_CASE("hard concatenation of independent halves is detected") {
    // Four-segment layout of a 256 x 256 image; the column boundary sits at 128.
    const auto layout = plan_layout(V{256, 256}, V{130, 130}, V{4, 4});
    int detected = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
      const auto a = channel_ti({256, 256}, 100 + 2 * t), b = channel_ti({256, 256}, 101 + 2 * t);
      const auto rep = seam_scan(splice_columns(a, b, 128), layout);
      for (const auto& s : rep.boundaries)
        if (s.axis == 1) detected += s.z > 3;
    }
    MESSAGE("spliced boundaries with z > 3: " << detected << "/" << trials);
    CHECK(detected == trials);
  }

  TEST_CASE("stationary grids rarely trigger the seam test") {
    const auto layout = plan_layout(V{256, 256}, V{130, 130}, V{4, 4});
    int clean = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
      const auto rep = seam_scan(bernoulli_grid({256, 256}, 0.3, 5000 + t), layout);
      bool ok = true;
      for (const auto& s : rep.boundaries) ok = ok && std::abs(s.z) < 3;
      clean += ok;
    }
    MESSAGE("stationary grids with all |z| < 3: " << clean << "/" << trials);
    CHECK(double(clean) / trials >= 0.99);
  }
}
