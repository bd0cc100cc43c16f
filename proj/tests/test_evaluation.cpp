#include <stdexcept>

#include "doctest.h"

#include "igd/evaluation.hpp"
#include "igd/rng.hpp"
#include "oracles.hpp"

using namespace igd;
using igd_testing::oracle_pairwise_auc;

TEST_SUITE_BEGIN("evaluation");

TEST_CASE("auc of separated and constant scores") {
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS((void)roc_auc({0.5, 0.6}, {0, 0}), std::invalid_argument);
}

TEST_CASE("auc equals the pairwise oracle exactly, including ties") {
    Rng rng(80);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_index(60));
        std::vector<double> scores(static_cast<std::size_t>(n));
        std::vector<int> labels(static_cast<std::size_t>(n));
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // Quantized scores force plenty of ties.
            scores[static_cast<std::size_t>(i)] =
                static_cast<double>(rng.uniform_index(8)) / 8.0;
            labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.4 ? 1 : 0;
            (labels[static_cast<std::size_t>(i)] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        CHECK(roc_auc(scores, labels) == oracle_pairwise_auc(scores, labels));
    }
}

TEST_CASE("auc invariances") {
    Rng rng(81);
    std::vector<double> scores(30);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) {
        scores[static_cast<std::size_t>(i)] = rng.uniform();
        labels[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
    }
    const double base = roc_auc(scores, labels);
    // Strictly increasing transform.
    std::vector<double> transformed = scores;
    for (double& s : transformed) s = std::exp(3.0 * s) + 7.0;
    CHECK(roc_auc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));
    // Score negation flips the curve (tie-free scores almost surely).
    std::vector<double> negated = scores;
    for (double& s : negated) s = -s;
    CHECK(roc_auc(negated, labels) == doctest::Approx(1.0 - base).epsilon(1e-12));
}

TEST_CASE("accuracy at threshold with min-max normalization") {
    CHECK(accuracy_at_threshold({0.4, 0.6}, {0, 1}, 0.5) == doctest::Approx(1.0));
    CHECK(accuracy_at_threshold({1.0, 3.0, 9.0, 10.0}, {0, 0, 1, 1}, 0.5) == doctest::Approx(1.0));
    const double acc = accuracy_at_threshold({0.1, 0.2, 0.7, 0.9}, {0, 1, 0, 1}, 0.5);
    const double inv = accuracy_at_threshold({0.1, 0.2, 0.7, 0.9}, {1, 0, 1, 0}, 0.5);
    CHECK(acc + inv == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)accuracy_at_threshold({}, {}, 0.5), std::invalid_argument);
}

TEST_CASE("pixel auc on toy maps") {
    // Heatmap equal to the mask scores 1 per image.
    Tensor mask({4, 4});
    mask[5] = mask[6] = 1.0;
    CHECK(pixel_auc({mask}, {mask}) == doctest::Approx(1.0));
    // Constant heatmap scores 0.5.
    Tensor flat({4, 4}, 0.3);
    CHECK(pixel_auc({flat}, {mask}) == doctest::Approx(0.5));
    // Toy case against the pairwise oracle.
    Rng rng(82);
    Tensor heat({4, 4});
    for (auto& v : heat.vec()) v = rng.uniform();
    std::vector<double> scores(heat.vec());
    std::vector<int> labels(16);
    for (int i = 0; i < 16; ++i) labels[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(i)] > 0.5 ? 1 : 0;
    CHECK(pixel_auc({heat}, {mask}) ==
          doctest::Approx(oracle_pairwise_auc(scores, labels)).epsilon(1e-12));
    // All-positive masks are excluded; with nothing left it throws.
    Tensor full({4, 4}, 1.0);
    CHECK_THROWS_AS((void)pixel_auc({heat}, {full}), std::invalid_argument);
    // Mixed: the valid image still counts.
    CHECK(pixel_auc({heat, heat}, {full, mask}) ==
          doctest::Approx(oracle_pairwise_auc(scores, labels)).epsilon(1e-12));
}

TEST_SUITE_END();
