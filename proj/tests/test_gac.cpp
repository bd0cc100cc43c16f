#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "igd/gac.hpp"
#include "igd/rng.hpp"
#include "test_support.hpp"

using namespace igd;
using igd_testing::max_grad_rel_err;
using igd_testing::random_tensor;

TEST_SUITE_BEGIN("gac");

TEST_CASE("two-point descriptor arithmetic") {
    Tensor latents({2, 2}, {0.0, 0.0, 2.0, 0.0});
    GaussianDescriptor d = estimate_descriptor(latents);
    CHECK(d.mu[0] == doctest::Approx(1.0));
    CHECK(d.mu[1] == doctest::Approx(0.0));
    CHECK(d.sigma == doctest::Approx(1.0));
    CHECK(d.n_samples == 2);
}

TEST_CASE("identical latents clamp sigma to the floor") {
    Tensor latents({3, 4}, 0.7);
    GaussianDescriptor d = estimate_descriptor(latents);
    CHECK(d.sigma == GaussianDescriptor::kSigmaFloor);
}

TEST_CASE("monte carlo sigma of an isotropic 2-d source") {
    // For unit-variance isotropic 2-d latents, E||z - mu||^2 = 2.
    Rng rng(42);
    const int n = 10000;
    Tensor latents({n, 2});
    for (int i = 0; i < n; ++i) {
        latents.at(i, 0) = rng.normal();
        latents.at(i, 1) = rng.normal();
    }
    GaussianDescriptor d = estimate_descriptor(latents);
    CHECK(d.sigma == doctest::Approx(std::sqrt(2.0)).epsilon(0.05 / std::sqrt(2.0)));
}

TEST_CASE("descriptor estimation is permutation invariant") {
    Rng rng(43);
    Tensor latents = random_tensor({12, 5}, rng, -2.0, 2.0);
    GaussianDescriptor a = estimate_descriptor(latents);
    std::vector<int> perm = rng.permutation(12);
    Tensor shuffled({12, 5});
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 5; ++j) shuffled.at(i, j) = latents.at(perm[static_cast<std::size_t>(i)], j);
    GaussianDescriptor b = estimate_descriptor(shuffled);
    for (int j = 0; j < 5; ++j) CHECK(a.mu[static_cast<std::size_t>(j)] == doctest::Approx(b.mu[static_cast<std::size_t>(j)]).epsilon(1e-12));
    CHECK(a.sigma == doctest::Approx(b.sigma).epsilon(1e-12));
}

TEST_CASE("normality probability analytic points") {
    GaussianDescriptor d;
    d.mu = {1.0, 2.0};
    d.sigma = 0.5;
    CHECK(normality_prob({1.0, 2.0}, d) == doctest::Approx(1.0));
    // ||z - mu|| = sigma
    CHECK(normality_prob({1.5, 2.0}, d) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    // ||z - mu|| = 2 sigma
    CHECK(normality_prob({2.0, 2.0}, d) == doctest::Approx(std::exp(-4.0)).epsilon(1e-9));
    CHECK(gac_loss({1.0, 2.0}, d) == doctest::Approx(0.0));
    CHECK(gac_loss({1.5, 2.0}, d) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("dimension mismatch raises") {
    GaussianDescriptor d;
    d.mu = {0.0, 0.0};
    d.sigma = 1.0;
    CHECK_THROWS_AS((void)normality_prob({1.0, 2.0, 3.0}, d), std::invalid_argument);
    CHECK_THROWS_AS((void)estimate_descriptor(Tensor({0, 3})), std::invalid_argument);
}

TEST_CASE("batch op mean and per-sample values") {
    GaussianDescriptor d;
    d.mu = {1.0, 2.0};
    d.sigma = 0.5;
    Tensor z({2, 2}, {1.0, 2.0, 1.5, 2.0});
    Tape t;
    const Tensor& losses = gac_loss_op(t.constant(z), d).value();
    CHECK(losses[0] == doctest::Approx(0.0));
    CHECK(losses[1] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
    // Batch of two copies of mu has mean loss 0.
    Tensor zz({2, 2}, {1.0, 2.0, 1.0, 2.0});
    Tape t2;
    CHECK(mean_all(gac_loss_op(t2.constant(zz), d)).value()[0] == doctest::Approx(0.0));
}

TEST_CASE("monotone in distance, decreasing in sigma") {
    GaussianDescriptor d;
    d.mu = {0.0};
    d.sigma = 1.0;
    double prev = -1.0;
    for (double r : {0.1, 0.5, 1.0, 2.0, 4.0}) {
        const double l = gac_loss({r}, d);
        CHECK(l > prev);
        prev = l;
    }
    GaussianDescriptor wide = d;
    wide.sigma = 2.0;
    CHECK(gac_loss({1.0}, wide) < gac_loss({1.0}, d));
}

TEST_CASE("gradient w.r.t. latents matches finite differences") {
    Rng rng(44);
    GaussianDescriptor d;
    d.mu = {0.3, -0.2, 0.9, 0.0, -1.1, 0.4, 0.7, -0.5};
    d.sigma = 0.8;
    Tensor z = random_tensor({3, 8}, rng, -1.5, 1.5);
    const double err = max_grad_rel_err(
        z, [&](Tape&, Ref zz) { return mean_all(gac_loss_op(zz, d)); }, 1e-4);
    CHECK(err < 1e-5);
}

TEST_SUITE_END();
