#include <doctest.h>

#include <cstring>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "texsyn/error.hpp"
#include "texsyn/grid.hpp"
#include "texsyn/metrics.hpp"

using namespace texsyn;

namespace {

std::vector<unsigned char> sgrd_bytes(const std::vector<std::uint32_t>& dims, const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> b{'S', 'G', 'R', 'D', 1, static_cast<unsigned char>(dims.size())};
  for (auto d : dims)
    for (int s = 0; s < 32; s += 8) b.push_back(static_cast<unsigned char>(d >> s));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

}  // namespace

TEST_SUITE("grids") {
  TEST_CASE("constructor enforces invariants") {
    CHECK_THROWS_AS(TextureGrid({2, 2}, {0, 1, 1}, ValueDomain::Binary01), ShapeError);
    CHECK_THROWS_AS(TextureGrid({4}, {0, 1, 1, 0}, ValueDomain::Binary01), ShapeError);
    CHECK_THROWS_AS(TextureGrid({2, 2}, {0, 1, 2, 0}, ValueDomain::Binary01), DomainError);
    CHECK_THROWS_AS(TextureGrid({2, 2}, {0, 1.5f, 0, 0}, ValueDomain::ModelRange), DomainError);
    CHECK_THROWS_AS(TextureGrid({2, 2}, {0, NAN, 0, 0}, ValueDomain::ModelRange), DomainError);
  }

  TEST_CASE("SGRD written byte by byte loads with the expected count") {
    testutil::TempDir tmp("grids");
    std::vector<unsigned char> payload(64);
    for (int i = 0; i < 64; ++i) payload[i] = i % 2;
    testutil::write_bytes(tmp / "alt.sgrd", sgrd_bytes({4, 4, 4}, payload));
    const auto g = load_texture(tmp / "alt.sgrd");
    CHECK(g.dims() == std::vector<int>{4, 4, 4});
    CHECK(g.domain() == ValueDomain::Binary01);
    int ones = 0;
    for (std::size_t i = 0; i < g.size(); ++i) ones += g[i] == 1.0f;
    CHECK(ones == 32);
    CHECK(g[1] == 1.0f);
    CHECK(g[0] == 0.0f);

    // Any nonzero byte is foreground.
    payload.assign(64, 0);
    payload[5] = 200;
    testutil::write_bytes(tmp / "nz.sgrd", sgrd_bytes({4, 4, 4}, payload));
    CHECK(porosity(load_texture(tmp / "nz.sgrd")) == doctest::Approx(1.0 / 64));
  }

  TEST_CASE("SGRD payload length mismatch names the field") {
    testutil::TempDir tmp("grids");
    testutil::write_bytes(tmp / "short.sgrd", sgrd_bytes({4, 4, 4}, std::vector<unsigned char>(60, 1)));
    try {
      load_texture(tmp / "short.sgrd");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("payload length") != std::string::npos);
    }
    auto bad = sgrd_bytes({2, 2}, {0, 0, 0, 0});
    bad[0] = 'X';
    testutil::write_bytes(tmp / "magic.sgrd", bad);
    CHECK_THROWS_AS(load_texture(tmp / "magic.sgrd"), FormatError);
    bad = sgrd_bytes({2, 2}, {0, 0, 0, 0});
    bad[4] = 2;
    testutil::write_bytes(tmp / "version.sgrd", bad);
    CHECK_THROWS_AS(load_texture(tmp / "version.sgrd"), FormatError);
    CHECK_THROWS_AS(load_texture(tmp / "missing.sgrd"), FormatError);
  }

  TEST_CASE("SGRD writer produces the exact byte layout") {
    testutil::TempDir tmp("grids");
    std::mt19937_64 rng(3);
    const auto g = oracle::random_binary({3, 5, 7}, 0.4, rng);
    save_texture(g, tmp / "g.sgrd");
    const auto bytes = testutil::read_bytes(tmp / "g.sgrd");
    std::vector<unsigned char> payload(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) payload[i] = g[i] == 1.0f ? 1 : 0;
    const auto expect = sgrd_bytes({3, 5, 7}, payload);
    // Only the foreground/background distinction is fixed by the format; compare as phases.
    REQUIRE(bytes.size() == expect.size());
    CHECK(std::equal(bytes.begin(), bytes.begin() + 18, expect.begin()));
    for (std::size_t i = 18; i < bytes.size(); ++i) CHECK((bytes[i] != 0) == (expect[i] != 0));
    CHECK(load_texture(tmp / "g.sgrd") == g);
  }

  TEST_CASE("hand-encoded PNG inputs") {
    testutil::TempDir tmp("grids");
    testutil::write_bytes(tmp / "white.png", oracle::png_stored(256, 256, 8, std::vector<unsigned char>(256 * 256, 255)));
    const auto white = load_texture(tmp / "white.png");
    CHECK(white.dims() == std::vector<int>{256, 256});
    CHECK(porosity(white) == 1.0);

    // Threshold: > 127 is foreground.
    std::vector<unsigned char> px{0, 127, 128, 255, 10, 200};
    testutil::write_bytes(tmp / "ramp.png", oracle::png_stored(3, 2, 8, px));
    const auto ramp = load_texture(tmp / "ramp.png");
    CHECK(ramp.dims() == std::vector<int>{2, 3});
    const std::vector<float> want{0, 0, 1, 1, 0, 1};
    for (int i = 0; i < 6; ++i) CHECK(ramp[i] == want[i]);

    testutil::write_bytes(tmp / "deep.png", oracle::png_stored(2, 2, 16, std::vector<unsigned char>(8, 0)));
    try {
      load_texture(tmp / "deep.png");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("bit depth") != std::string::npos);
    }
  }

  TEST_CASE("PNG writer output has valid structure and round-trips") {
    testutil::TempDir tmp("grids");
    std::mt19937_64 rng(11);
    const auto g = oracle::random_binary({37, 53}, 0.3, rng);
    save_texture(g, tmp / "g.png");
    const auto b = testutil::read_bytes(tmp / "g.png");
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    REQUIRE(b.size() > 8);
    CHECK(std::equal(sig, sig + 8, b.begin()));
    // Walk the chunks and check every CRC against the independent implementation.
    std::size_t at = 8;
    std::vector<std::string> types;
    while (at + 12 <= b.size()) {
      const auto len = be32(b, at);
      const std::string type(b.begin() + at + 4, b.begin() + at + 8);
      types.push_back(type);
      CHECK(oracle::crc32(b.data() + at + 4, len + 4) == be32(b, at + 8 + len));
      if (type == "IHDR") {
        CHECK(be32(b, at + 8) == 53u);
        CHECK(be32(b, at + 12) == 37u);
        CHECK(b[at + 16] == 8);  // bit depth
        CHECK(b[at + 17] == 0);  // grayscale
      }
      at += 12 + len;
    }
    CHECK(at == b.size());
    REQUIRE(!types.empty());
    CHECK(types.front() == "IHDR");
    CHECK(types.back() == "IEND");
    CHECK(load_texture(tmp / "g.png") == g);
  }

  TEST_CASE("round trips for random grids") {
    testutil::TempDir tmp("grids");
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
      const auto g2 = oracle::random_binary({1 + int(rng() % 40), 1 + int(rng() % 40)}, 0.5, rng);
      save_texture(g2, tmp / "a.png");
      CHECK(load_texture(tmp / "a.png") == g2);
      save_texture(g2, tmp / "a.sgrd");
      CHECK(load_texture(tmp / "a.sgrd") == g2);
      const auto g3 = oracle::random_binary({1 + int(rng() % 9), 1 + int(rng() % 9), 1 + int(rng() % 9)}, 0.5, rng);
      save_texture(g3, tmp / "b.sgrd");
      CHECK(load_texture(tmp / "b.sgrd") == g3);
    }
    const auto g3 = oracle::random_binary({2, 3, 4}, 0.5, rng);
    CHECK_THROWS(save_texture(g3, tmp / "b.png"));
    CHECK_THROWS_AS(save_texture(g3, tmp / "b.txt"), FormatError);
    CHECK_THROWS_AS(save_texture(to_model_range(g3), tmp / "c.sgrd"), DomainError);
  }

  TEST_CASE("to_model_range and binarize") {
    const TextureGrid g({2, 2}, {0, 1, 1, 0}, ValueDomain::Binary01);
    const auto m = to_model_range(g);
    CHECK(m.domain() == ValueDomain::ModelRange);
    const std::vector<float> want{-1, 1, 1, -1};
    for (int i = 0; i < 4; ++i) CHECK(m[i] == want[i]);
    const auto zeros = to_model_range(TextureGrid::filled({3, 3}, 0, ValueDomain::Binary01));
    for (std::size_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == -1.0f);

    const TextureGrid r({1, 3}, {-0.9f, 0.1f, 0.0f}, ValueDomain::ModelRange);
    const auto b = binarize(r);
    CHECK(b[0] == 0.0f);
    CHECK(b[1] == 1.0f);
    CHECK(b[2] == 0.0f);
    CHECK(porosity(binarize(TextureGrid::filled({4, 4}, 0.25f, ValueDomain::ModelRange), 0.25)) == 0.0);
    CHECK_THROWS_AS(binarize(g), DomainError);
    CHECK_THROWS_AS(to_model_range(m), DomainError);

    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
      const auto x = oracle::random_binary({8, 1 + int(rng() % 20)}, 0.5, rng);
      CHECK(binarize(to_model_range(x)) == x);
    }
  }

  TEST_CASE("porosity falls monotonically with the threshold") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> u(-1, 1);
    std::vector<float> v(64 * 64);
    for (auto& x : v) x = u(rng);
    const TextureGrid g({64, 64}, v, ValueDomain::ModelRange);
    double prev = 2;
    for (double t = -1.0; t <= 1.0; t += 0.05) {
      const double p = porosity(binarize(g, t));
      CHECK(p <= prev);
      prev = p;
    }
  }

  TEST_CASE("npy writer header") {
    testutil::TempDir tmp("grids");
    const TextureGrid g({2, 3}, {-1, 0.5f, 0, 1, 0.25f, -0.5f}, ValueDomain::ModelRange);
    write_npy(g, tmp / "g.npy");
    const auto b = testutil::read_bytes(tmp / "g.npy");
    REQUIRE(b.size() > 10);
    CHECK(b[0] == 0x93);
    CHECK(std::string(b.begin() + 1, b.begin() + 6) == "NUMPY");
    const std::size_t hlen = b[8] | (b[9] << 8);
    CHECK((10 + hlen) % 64 == 0);
    const std::string header(b.begin() + 10, b.begin() + 10 + hlen);
    CHECK(header.find("'descr': '<f4'") != std::string::npos);
    CHECK(header.find("(2, 3)") != std::string::npos);
    REQUIRE(b.size() == 10 + hlen + 6 * 4);
    float second;
    std::memcpy(&second, b.data() + 10 + hlen + 4, 4);
    CHECK(second == 0.5f);
  }
}
