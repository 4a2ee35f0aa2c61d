#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nn_checks.hpp"
#include "oracles.hpp"
#include "texsyn/error.hpp"
#include "texsyn/nets.hpp"
#include "texsyn/segmentation.hpp"
#include "texsyn/training.hpp"

using namespace texsyn;
using namespace texsyn::nn;

namespace {

using namespace nncheck;

void check_gradients(GeneratorSpec gs, DiscriminatorSpec ds, const SegmentLayout& layout, int batch) {
  const auto r = nncheck::gradient_check(gs, ds, layout, batch);
  CHECK(r.d_frozen);
  CHECK(r.d_worst <= 1e-3);
  CHECK(r.g_worst <= 1e-3);
  MESSAGE("max relative error: discriminator " << r.d_worst << ", generator " << r.g_worst);
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("generated sizes of every architecture table row") {
    for (const auto& row : kTable) {
      V filters;
      for (int l = 0; l < row.layers; ++l) filters.push_back(64 >> std::min(l, 4));
      const int k = row.lattice.size() == 3 ? 3 : 5;
      const auto spec = gspec(row.lattice, filters, k, 2);
      CHECK(spec.output_dims() == row.generated);
    }
    auto big = gspec({32, 32}, {64, 32, 16}, 5, 2);
    CHECK(big.output_dims_for({64, 64}) == V{512, 512});
    CHECK(big.scale() == V{8, 8});
  }

  TEST_CASE("spec validation") {
    CHECK_NOTHROW(gspec({4, 4}, {8}, 3, 2).validate());
    CHECK_THROWS_AS(gspec({4, 4}, {}, 3, 2).validate(), SpecError);
    CHECK_THROWS_AS(gspec({4, 4}, {8}, 1, 2).validate(), SpecError);
    CHECK_THROWS_AS(gspec({4}, {8}, 3, 2).validate(), SpecError);
    auto g = gspec({4, 4}, {8}, 3, 2);
    g.kernel = {3};
    CHECK_THROWS_AS(g.validate(), SpecError);
    g = gspec({4, 4}, {8}, 3, 2);
    g.batchnorm_momentum = 1.0;
    CHECK_THROWS_AS(g.validate(), SpecError);
    auto d = dspec({16, 16}, {8}, 3, 2);
    CHECK_NOTHROW(d.validate());
    d.dropout_rate = 1.0;
    CHECK_THROWS_AS(d.validate(), SpecError);
    CHECK_THROWS_AS(dspec({16, 16}, {0}, 3, 2).validate(), SpecError);
  }

  TEST_CASE("discriminator accepts sizes that do not divide by the stride") {
    const auto d = dspec({130, 130}, {16, 32, 64}, 5, 2);
    const auto f = d.feature_dims();
    REQUIRE(f.size() == 3);
    CHECK(f[0] == V{65, 65});
    CHECK(f[1] == V{33, 33});
    CHECK(f[2] == V{17, 17});
    Discriminator<float> net(d, 1);
    std::mt19937_64 rng(1);
    Tensor<float> x(2, 1, Extent{1, 130, 130});
    std::uniform_real_distribution<float> u(-1, 1);
    for (auto& v : x.v) v = u(rng);
    const auto y = net.forward(x, Context{Mode::Infer});
    CHECK(y.n == 2);
    CHECK(y.v.size() == 2);
  }

  TEST_CASE("projective field recurrence") {
    CHECK(projective_field(gspec({8, 8}, {64, 32, 16}, 5, 2)) == V{33, 33});
    CHECK(projective_field(gspec({8, 8}, {8}, 2, 2)) == V{3, 3});
    CHECK(projective_field(gspec({4, 4, 4}, {8, 8}, 3, 2)) == V{9, 9, 9});
    const auto g = gspec({8, 8}, {64, 32, 16}, 5, 2);
    CHECK(projective_field_warning(g, V{66, 66}) == "");
    CHECK(projective_field_warning(g, V{34, 34}) != "");
    CHECK(projective_field_warning(g, V{66, 40}) != "");
  }

  TEST_CASE("projective field matches a perturbation probe") {
    const auto a = gspec({8, 8}, {16, 8, 4}, 5, 2);
    CHECK(probe_extent(a, {4, 4}, 3) == projective_field(a));
    const auto b = gspec({6, 6}, {8, 4}, 3, 2);
    CHECK(probe_extent(b, {3, 3}, 3) == projective_field(b));
    const auto c = gspec({4, 4, 4}, {6, 4}, 3, 2);
    CHECK(probe_extent(c, {2, 2, 2}, 3) == projective_field(c));
    auto e = gspec({8, 16}, {8, 4}, 4, 2);
    e.kernel = {4, 5};
    e.stride = {2, 1};
    CHECK(projective_field(e) == V{13, 13});
    CHECK(probe_extent(e, {4, 8}, 3) == projective_field(e));
  }

  TEST_CASE("construction is deterministic in the seed") {
    const auto g = gspec({4, 4}, {16, 8}, 5, 2);
    CHECK(build_generator(g, 7) == build_generator(g, 7));
    CHECK(build_generator(g, 7) != build_generator(g, 8));
    const auto d = dspec({16, 16}, {8, 16}, 5, 2);
    CHECK(build_discriminator(d, 7) == build_discriminator(d, 7));
    Generator<float> a(g, 7), b(g, build_generator(g, 7));
    CHECK(a.export_params() == b.export_params());
  }

  TEST_CASE("output ranges and inference determinism") {
    auto g = gspec({4, 4}, {16, 8}, 5, 2);
    g.init_std = 0.5;  // large weights push tanh towards saturation
    Generator<float> net(g, 2);
    std::mt19937_64 rng(3);
    const auto z = net.sample_input(4, rng);
    const Context infer{Mode::Infer};
    const auto y = net.forward(z, infer);
    CHECK(y.s == Extent{1, 16, 16});
    for (float v : y.v) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
    CHECK(net.forward(z, infer).v == y.v);

    auto ds = dspec({16, 16}, {8, 16}, 5, 2);
    Discriminator<float> d(ds, 3);
    Tensor<float> x(3, 1, Extent{1, 16, 16});
    std::fill(x.v.begin(), x.v.begin() + 256, 1.0f);
    std::fill(x.v.begin() + 256, x.v.begin() + 512, -1.0f);
    std::uniform_real_distribution<float> u(-1, 1);
    for (std::size_t i = 512; i < x.v.size(); ++i) x.v[i] = u(rng);
    const auto s = d.forward(x, infer);
    for (float v : s.v) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    CHECK(d.forward(x, infer).v == s.v);
  }

  TEST_CASE("fc head maps latent vectors onto the lattice") {
    auto g = gspec({3, 5}, {6, 4}, 3, 2);
    g.latent_mode = LatentMode::Fc;
    g.latent_dim = 10;
    Generator<float> net(g, 1);
    std::mt19937_64 rng(1);
    const auto z = net.sample_input(2, rng);
    CHECK(z.per_sample() == 10u);
    const Context infer{Mode::Infer};
    const auto lat = net.head(z, infer);
    CHECK(lat.c == 6);
    CHECK(lat.s == Extent{1, 3, 5});
    CHECK(net.forward(z, infer).s == Extent{1, 12, 20});
  }

  TEST_CASE("analytic gradients match finite differences (2D, direct latent)") {
    const auto layout = plan_layout(V{4, 4}, V{3, 3}, V{2, 2});
    REQUIRE(layout.n == 4);
    check_gradients(gspec({2, 2}, {3}, 3, 2), dspec({3, 3}, {2, 3}, 3, 2), layout, 2);
  }

  TEST_CASE("analytic gradients match finite differences (2D, fc latent)") {
    auto g = gspec({2, 2}, {3}, 3, 2);
    g.latent_mode = LatentMode::Fc;
    g.latent_dim = 4;
    const auto layout = plan_layout(V{4, 4}, V{3, 3}, V{2, 2});
    check_gradients(g, dspec({3, 3}, {2, 3}, 3, 2), layout, 2);
  }

  TEST_CASE("analytic gradients match finite differences (3D)") {
    const auto layout = plan_layout(V{4, 4, 4}, V{3, 3, 3}, V{2, 2, 2});
    REQUIRE(layout.n == 8);
    check_gradients(gspec({2, 2, 2}, {2}, 3, 2), dspec({3, 3, 3}, {2, 2}, 3, 2), layout, 2);
  }

  TEST_CASE("segment_images and unsegment_gradients are adjoint") {
    const auto layout = plan_layout(V{10, 7}, V{4, 3}, V{1, 1});
    std::mt19937_64 rng(6);
    const auto x = random_tensor(2, Extent{1, 10, 7}, rng);
    const auto y = random_tensor(2 * layout.n, Extent{1, 4, 3}, rng);
    const auto sx = segment_images(x, layout);
    const auto uy = unsegment_gradients(y, layout, 2);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < sx.v.size(); ++i) lhs += sx.v[i] * y.v[i];
    for (std::size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * uy.v[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}
