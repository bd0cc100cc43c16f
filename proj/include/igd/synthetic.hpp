#pragma once

#include <cstdint>

#include "igd/datasets.hpp"
#include "igd/rng.hpp"
#include "igd/tensor.hpp"

namespace igd {

// Procedural one-class benchmark: normal images are smooth textures (two
// families: Gaussian blob compositions and low-frequency waves), anomalous
// images carry a localized high-frequency defect (stripe patch or noise
// square) with a ground-truth mask.
struct SyntheticSpec {
    int height = 32;
    int width = 32;
    int n_normal_train = 160;
    int n_normal_test = 40;
    int n_anomalous_test = 40;
    std::uint64_t seed = 7;
    bool two_family_normals = true;
    // Fraction of anomalies that are noise squares (the rest are stripe
    // patches); squares carry crisp masks for localization tests.
    double square_fraction = 0.5;
};

struct SyntheticBenchmark {
    LabeledImageSet train;  // normals only, labels all 0
    LabeledImageSet test;   // held-out normals (0) + anomalies (1) with masks
};

SyntheticBenchmark make_synthetic_benchmark(const SyntheticSpec& spec);

// Single samples, usable for focused tests.
Tensor synthetic_normal_image(Rng& rng, int height, int width, bool two_families);
// Returns the image and writes the defect mask into *mask ([H,W], {0,1}).
Tensor synthetic_anomalous_image(Rng& rng, int height, int width, bool two_families,
                                 bool noise_square, Tensor* mask);

}  // namespace igd
