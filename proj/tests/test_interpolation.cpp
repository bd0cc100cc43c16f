#include <stdexcept>
#include "doctest.h"

#include "igd/interpolation.hpp"
#include "igd/rng.hpp"
#include "test_support.hpp"

using namespace igd;
using igd_testing::random_tensor;

TEST_SUITE_BEGIN("interpolation");

TEST_CASE("latent interpolation endpoints and midpoint") {
    Tensor z1({2}, {0.0, 0.0});
    Tensor z2({2}, {2.0, 4.0});
    CHECK(interpolate_latents(z1, z2, 0.0)[0] == doctest::Approx(2.0));
    CHECK(interpolate_latents(z1, z2, 0.0)[1] == doctest::Approx(4.0));
    CHECK(interpolate_latents(z1, z2, 1.0)[0] == doctest::Approx(0.0));
    Tensor mid = interpolate_latents(z1, z2, 0.5);
    CHECK(mid[0] == doctest::Approx(1.0));
    CHECK(mid[1] == doctest::Approx(2.0));
    CHECK_THROWS_AS((void)interpolate_latents(z1, z2, 1.5), std::invalid_argument);
    CHECK_THROWS_AS((void)interpolate_latents(z1, Tensor({3}), 0.5), std::invalid_argument);
}

TEST_CASE("interpolation symmetry identity") {
    Rng rng(50);
    Tensor z1 = random_tensor({6}, rng, -1.0, 1.0);
    Tensor z2 = random_tensor({6}, rng, -1.0, 1.0);
    for (double a : {0.1, 0.37, 0.5, 0.9}) {
        Tensor lhs = interpolate_latents(z1, z2, a);
        Tensor rhs = interpolate_latents(z2, z1, 1.0 - a);
        for (std::size_t i = 0; i < lhs.size(); ++i)
            CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
    }
}

TEST_CASE("image blend endpoints and constant arithmetic") {
    Tensor x({1, 2, 2}, 0.2);
    Tensor xhat({1, 2, 2}, 0.6);
    Tensor b = blend_image(x, xhat, 0.5);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == doctest::Approx(0.4));
    CHECK(blend_image(x, xhat, 1.0)[0] == doctest::Approx(0.2));
    CHECK(blend_image(x, xhat, 0.0)[0] == doctest::Approx(0.6));
}

TEST_CASE("critic loss arithmetic") {
    CHECK(critic_loss(0.3, 0.3, 0.0) == doctest::Approx(0.0));
    CHECK(critic_loss(0.0, 0.3, 0.0) == doctest::Approx(0.09));
    CHECK(critic_loss(0.5, 0.25, 0.1) == doctest::Approx(0.0725));
    // Nonnegative with equality only at the exact optimum.
    Rng rng(51);
    for (int i = 0; i < 50; ++i) {
        const double ap = rng.uniform(), at = rng.uniform(0.0, 0.5), zp = rng.uniform();
        const double l = critic_loss(ap, at, zp);
        CHECK(l >= 0.0);
        if (ap != at || zp != 0.0) CHECK(l > 0.0);
    }
}

TEST_CASE("generator regularizer arithmetic") {
    CHECK(generator_interp_reg(0.0, 0.1) == doctest::Approx(0.0));
    CHECK(generator_interp_reg(0.5, 0.1) == doctest::Approx(0.025));
    CHECK(generator_interp_reg(0.77, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("sampled batches pair distinct images with in-range coefficients") {
    Rng rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(14));
        InterpolationBatch b = sample_interpolation_batch(n, rng);
        REQUIRE(static_cast<int>(b.pair_index.size()) == n);
        for (int i = 0; i < n; ++i) {
            CHECK(b.pair_index[static_cast<std::size_t>(i)] != i);
            CHECK(b.alpha[static_cast<std::size_t>(i)] >= 0.0);
            CHECK(b.alpha[static_cast<std::size_t>(i)] <= 0.5);
            CHECK(b.zeta[static_cast<std::size_t>(i)] >= 0.0);
            CHECK(b.zeta[static_cast<std::size_t>(i)] <= 1.0);
        }
    }
}

TEST_CASE("tape ops match the scalar definitions") {
    Rng rng(53);
    Tensor z = random_tensor({4, 3}, rng, -1.0, 1.0);
    const std::vector<int> pair = {1, 2, 3, 0};
    const std::vector<double> alpha = {0.1, 0.2, 0.3, 0.4};
    Tape t;
    const Tensor& mixed = interpolate_latents_op(t.constant(z), pair, alpha).value();
    for (int i = 0; i < 4; ++i) {
        Tensor zi({3}), zp({3});
        for (int j = 0; j < 3; ++j) {
            zi[static_cast<std::size_t>(j)] = z.at(i, j);
            zp[static_cast<std::size_t>(j)] = z.at(pair[static_cast<std::size_t>(i)], j);
        }
        Tensor expect = interpolate_latents(zi, zp, alpha[static_cast<std::size_t>(i)]);
        for (int j = 0; j < 3; ++j)
            CHECK(mixed.at(i, j) == doctest::Approx(expect[static_cast<std::size_t>(j)]).epsilon(1e-12));
    }

    Tensor ap({3}, {0.3, 0.1, 0.5});
    Tensor zp({3}, {0.0, 0.2, 0.1});
    const std::vector<double> truth = {0.3, 0.4, 0.0};
    Tape t2;
    const double got =
        critic_loss_op(t2.constant(ap), truth, t2.constant(zp)).value()[0];
    double expect = 0.0;
    for (int i = 0; i < 3; ++i)
        expect += critic_loss(ap[static_cast<std::size_t>(i)], truth[static_cast<std::size_t>(i)],
                              zp[static_cast<std::size_t>(i)]);
    CHECK(got == doctest::Approx(expect / 3.0).epsilon(1e-12));
}

TEST_SUITE_END();
