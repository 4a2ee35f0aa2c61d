#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "texsyn/error.hpp"
#include "texsyn/metrics.hpp"
#include "texsyn/procedural.hpp"

using namespace texsyn;

namespace {

TextureGrid row(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return TextureGrid({1, n}, std::move(v), ValueDomain::Binary01);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("porosity") {
    CHECK(porosity(TextureGrid::filled({5, 5}, 1, ValueDomain::Binary01)) == 1.0);
    CHECK(porosity(TextureGrid({2, 2}, {0, 0, 1, 0}, ValueDomain::Binary01)) == 0.25);
    CHECK(porosity(TextureGrid({2, 2}, {0, 0, 1, 0}, ValueDomain::Binary01, 0)) == 0.75);
    CHECK_THROWS_AS(porosity(TextureGrid::filled({2, 2}, 0.5f, ValueDomain::ModelRange)), DomainError);
  }

  TEST_CASE("directional S2 on small patterns") {
    const auto g = row({1, 1, 0, 0});
    const auto s = s2_directional(g, Averaging::DirectionalX, 3, Boundary::Periodic);
    CHECK(s.values[0] == 0.5);
    CHECK(s.values[1] == 0.25);
    CHECK(s.values[2] == 0.0);
    CHECK(s.lags == std::vector<double>{0, 1, 2, 3});

    const auto full = s2_directional(TextureGrid::filled({6, 6}, 1, ValueDomain::Binary01), Averaging::DirectionalY, 5);
    for (double v : full.values) CHECK(v == 1.0);

    std::vector<float> cb(8 * 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) cb[y * 8 + x] = float((x + y) % 2);
    const TextureGrid board({8, 8}, cb, ValueDomain::Binary01);
    for (auto axis : {Averaging::DirectionalX, Averaging::DirectionalY}) {
      const auto c = s2_directional(board, axis, 2, Boundary::Periodic);
      CHECK(c.values[1] == 0.0);
      CHECK(c.values[2] == 0.5);
    }
    // Truncated: lag 3 of [1,1,0,1] has the single pair (0, 3).
    CHECK(s2_directional(row({1, 1, 0, 1}), Averaging::DirectionalX, 3).values[3] == 1.0);
    CHECK_THROWS_AS(s2_directional(g, Averaging::DirectionalX, 4), DomainError);
    CHECK_THROWS_AS(s2_directional(g, Averaging::DirectionalZ, 1), DomainError);
  }

  TEST_CASE("directional S2 matches pair counting") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
      const bool three = t % 2;
      const auto g = three ? oracle::random_binary({6, 7, 8}, 0.4, rng) : oracle::random_binary({9, 11}, 0.4, rng);
      for (auto b : {Boundary::Truncated, Boundary::Periodic}) {
        const bool per = b == Boundary::Periodic;
        const auto sx = s2_directional(g, Averaging::DirectionalX, 5, b);
        const auto sy = s2_directional(g, Averaging::DirectionalY, 5, b);
        for (int r = 0; r <= 5; ++r) {
          CHECK(sx.values[r] == doctest::Approx(oracle::s2_vector(g, 0, 0, r, per)).epsilon(1e-12));
          CHECK(sy.values[r] == doctest::Approx(oracle::s2_vector(g, 0, r, 0, per)).epsilon(1e-12));
        }
        if (three) {
          const auto sz = s2_directional(g, Averaging::DirectionalZ, 5, b);
          for (int r = 0; r <= 5; ++r)
            CHECK(sz.values[r] == doctest::Approx(oracle::s2_vector(g, r, 0, 0, per)).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("FFT radial S2 equals brute-force pair counting") {
    std::mt19937_64 rng(2);
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
      const auto g2 = oracle::random_binary({16, 16}, 0.2 + 0.6 * (t % 5) / 4.0, rng);
      const auto g3 = oracle::random_binary({8, 8, 8}, 0.2 + 0.6 * (t % 5) / 4.0, rng);
      for (const auto* g : {&g2, &g3}) {
        const int lag = g->ndim() == 3 ? 4 : 7;
        const auto fft = s2_radial(*g, lag, Boundary::Periodic);
        const auto ref = oracle::s2_radial(*g, lag, true);
        for (int r = 0; r <= lag; ++r) worst = std::max(worst, std::abs(fft.values[r] - ref[r]));
      }
    }
    CHECK(worst <= 1e-10);
    // Truncated boundary uses the zero-padded transform; same oracle without wrapping.
    worst = 0;
    for (int t = 0; t < 10; ++t) {
      const auto g = oracle::random_binary({12, 10}, 0.5, rng);
      const auto fft = s2_radial(g, 6, Boundary::Truncated);
      const auto ref = oracle::s2_radial(g, 6, false);
      for (int r = 0; r <= 6; ++r) worst = std::max(worst, std::abs(fft.values[r] - ref[r]));
    }
    CHECK(worst <= 1e-10);
  }

  TEST_CASE("radial S2 basics") {
    std::mt19937_64 rng(3);
    const auto g = oracle::random_binary({20, 20}, 0.35, rng);
    CHECK(s2_radial(g, 5).values[0] == doctest::Approx(porosity(g)).epsilon(1e-12));
    const auto n = s2_radial(g, 5, Boundary::Periodic, true);
    CHECK(n.values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(s2_radial(TextureGrid::filled({8, 8}, 1, ValueDomain::Binary01), 3, Boundary::Periodic, true),
                    DomainError);
    CHECK_THROWS_AS(s2_radial(g, 20), DomainError);
  }

  TEST_CASE("uncorrelated Bernoulli grid decorrelates to phi squared") {
    const auto g = bernoulli_grid({64, 64}, 0.3, 17);
    const double phi = porosity(g);
    CHECK(std::abs(phi - 0.3) < 0.02);
    const auto s = s2_radial(g, 20);
    for (int r = 10; r <= 20; ++r) CHECK(std::abs(s.values[r] - 0.09) <= 0.01);
  }

  TEST_CASE("cluster labeling examples") {
    const auto l = label_clusters(row({1, 1, 0, 1}));
    CHECK(l.cluster_count == 2);
    CHECK(l.labels == std::vector<int>{1, 1, 0, 2});
    const TextureGrid diag({2, 2}, {1, 0, 0, 1}, ValueDomain::Binary01);
    CHECK(label_clusters(diag, Connectivity::Full).cluster_count == 1);
    CHECK(label_clusters(diag, Connectivity::Face).cluster_count == 2);
    // Periodic wrap joins the two ends of a row.
    CHECK(label_clusters(row({1, 0, 0, 1}), Connectivity::Face, true).cluster_count == 1);
  }

  TEST_CASE("cluster labeling matches a BFS oracle") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
      const auto g = oracle::random_binary({12, 12, 12}, 0.2 + 0.4 * (t % 3) / 2.0, rng);
      for (bool full : {false, true}) {
        const auto l = label_clusters(g, full ? Connectivity::Full : Connectivity::Face);
        const auto ref = oracle::bfs_labels(g, full);
        REQUIRE(oracle::same_partition(l.labels, ref));
        // Both number clusters by first visit in a row-major scan, so labels agree exactly.
        REQUIRE(l.labels == ref);
      }
    }
    for (int t = 0; t < 20; ++t) {
      const auto g = oracle::random_binary({1 + int(rng() % 16), 1 + int(rng() % 16)}, 0.5, rng);
      for (bool full : {false, true})
        for (bool per : {false, true})
          REQUIRE(oracle::same_partition(label_clusters(g, full ? Connectivity::Full : Connectivity::Face, per).labels,
                                         oracle::bfs_labels(g, full, per)));
    }
  }

  TEST_CASE("C2 examples") {
    const auto g = row({1, 1, 0, 1});
    const auto c = c2(g, Connectivity::Face, 3, Averaging::DirectionalX);
    const auto s = s2_directional(g, Averaging::DirectionalX, 3);
    CHECK(c.values[1] == doctest::Approx(1.0 / 3));
    CHECK(c.values[1] == s.values[1]);
    CHECK(c.values[3] == 0.0);
    CHECK(s.values[3] == 1.0);

    // One spanning cluster: C2 equals S2.
    std::vector<float> v(10 * 10, 0);
    for (int y = 0; y < 10; ++y) v[y * 10 + 4] = 1;
    for (int x = 0; x < 10; ++x) v[5 * 10 + x] = 1;
    const TextureGrid cross({10, 10}, v, ValueDomain::Binary01);
    for (auto a : {Averaging::DirectionalX, Averaging::DirectionalY, Averaging::RadialIsotropic}) {
      const auto cc = c2(cross, Connectivity::Face, 4, a);
      const auto ss = a == Averaging::RadialIsotropic ? s2_radial(cross, 4) : s2_directional(cross, a, 4);
      for (int r = 0; r <= 4; ++r) CHECK(cc.values[r] == doctest::Approx(ss.values[r]).epsilon(1e-12));
    }
  }

  TEST_CASE("C2 <= S2 <= phi on random grids") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 100; ++t) {
      const auto g = t % 4 == 0 ? oracle::random_binary({8, 8, 8}, 0.5, rng)
                                : oracle::random_binary({16, 16}, 0.2 + 0.6 * (t % 7) / 6.0, rng);
      const double phi = porosity(g);
      for (auto a : {Averaging::DirectionalX, Averaging::RadialIsotropic}) {
        const auto cc = c2(g, Connectivity::Face, 5, a, Boundary::Periodic);
        const auto ss = a == Averaging::RadialIsotropic ? s2_radial(g, 5, Boundary::Periodic)
                                                        : s2_directional(g, a, 5, Boundary::Periodic);
        for (int r = 0; r <= 5; ++r) {
          REQUIRE(cc.values[r] <= ss.values[r] + 1e-12);
          REQUIRE(ss.values[r] <= phi + 1e-12);
        }
      }
      // Truncated C2 is still bounded by truncated S2.
      const auto ct = c2(g, Connectivity::Full, 5, Averaging::DirectionalY);
      const auto st = s2_directional(g, Averaging::DirectionalY, 5);
      for (int r = 0; r <= 5; ++r) REQUIRE(ct.values[r] <= st.values[r] + 1e-12);
    }
  }

  TEST_CASE("C2 matches same-cluster pair counting") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 10; ++t) {
      const auto g = oracle::random_binary({10, 9}, 0.55, rng);
      const auto lab = oracle::bfs_labels(g, true);
      const auto cc = c2(g, Connectivity::Full, 4, Averaging::DirectionalY);
      for (int r = 0; r <= 4; ++r) {
        long hits = 0, pairs = 0;
        for (int y = 0; y + r < 10; ++y)
          for (int x = 0; x < 9; ++x) {
            ++pairs;
            const int a = lab[y * 9 + x], b = lab[(y + r) * 9 + x];
            hits += a != 0 && a == b;
          }
        CHECK(cc.values[r] == doctest::Approx(double(hits) / pairs).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("ensemble statistics") {
    MetricCurve a{CurveKind::S2, Averaging::DirectionalX, {0, 1, 2}, {0.5, 0.3, 0.2}, 0.5};
    MetricCurve b{CurveKind::S2, Averaging::DirectionalX, {0, 1, 2}, {0.3, 0.2, 0.25}, 0.3};
    const std::vector<MetricCurve> one{a};
    const auto e1 = ensemble_stats(one);
    CHECK(e1.mean == a.values);
    CHECK(e1.min == a.values);
    CHECK(e1.max == a.values);
    CHECK(e1.porosity_std == 0.0);
    CHECK(e1.count == 1);
    const std::vector<MetricCurve> two{a, b};
    const auto e2 = ensemble_stats(two);
    for (int r = 0; r < 3; ++r) {
      CHECK(e2.min[r] == std::min(a.values[r], b.values[r]));
      CHECK(e2.max[r] == std::max(a.values[r], b.values[r]));
      CHECK(e2.mean[r] == doctest::Approx((a.values[r] + b.values[r]) / 2));
    }
    CHECK(e2.porosity_mean == doctest::Approx(0.4));
    CHECK(e2.porosity_std == doctest::Approx(std::sqrt(0.02)));
    MetricCurve c = b;
    c.lags = {0, 1};
    c.values = {0.1, 0.1};
    const std::vector<MetricCurve> bad{a, c};
    CHECK_THROWS(ensemble_stats(bad));
  }

  TEST_CASE("ensemble band covers phi at lag zero") {
    // Band of 20 Bernoulli realizations against the process porosity.
    int covered = 0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
      std::vector<MetricCurve> curves;
      for (int i = 0; i < 20; ++i)
        curves.push_back(s2_directional(bernoulli_grid({32, 32}, 0.3, 1000 * rep + i), Averaging::DirectionalX, 4));
      const auto e = ensemble_stats(curves);
      covered += e.min[0] <= 0.3 && 0.3 <= e.max[0];
    }
    CHECK(double(covered) / reps >= 0.95);
  }

  TEST_CASE("metric CSV layout") {
    testutil::TempDir tmp("metrics");
    MetricCurve a{CurveKind::C2, Averaging::RadialIsotropic, {0, 1}, {0.5, 0.25}, 0.5};
    const std::vector<MetricCurve> one{a};
    write_metric_csv(tmp / "m.csv", ensemble_stats(one));
    const auto text = testutil::read_text(tmp / "m.csv");
    CHECK(text.find("# kind=C2") != std::string::npos);
    CHECK(text.find("# averaging=radial") != std::string::npos);
    CHECK(text.find("r,value_mean,value_min,value_max\n0,0.5,0.5,0.5\n1,0.25,0.25,0.25") != std::string::npos);
  }

  TEST_CASE("string conversions") {
    CHECK(parse_averaging("x") == Averaging::DirectionalX);
    CHECK(parse_averaging("radial") == Averaging::RadialIsotropic);
    CHECK(to_string(Averaging::DirectionalZ) == "z");
    CHECK(to_string(CurveKind::S2) == "S2");
    CHECK(parse_boundary("periodic") == Boundary::Periodic);
    CHECK(parse_connectivity("full") == Connectivity::Full);
    CHECK_THROWS_AS(parse_averaging("diag"), DomainError);
  }
}
