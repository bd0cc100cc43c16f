#include "igd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace igd {

namespace {

double clamp01d(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Family A: a soft background gradient plus 2-4 Gaussian blobs.
Tensor blob_image(Rng& rng, int height, int width) {
    Tensor img({1, height, width});
    const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
    const double base = rng.uniform(0.35, 0.55);
    const int blobs = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<double> cx(blobs), cy(blobs), amp(blobs), rad(blobs);
    for (int b = 0; b < blobs; ++b) {
        cy[b] = rng.uniform(0.15, 0.85) * height;
        cx[b] = rng.uniform(0.15, 0.85) * width;
        amp[b] = rng.uniform(0.2, 0.4) * (rng.uniform() < 0.3 ? -1.0 : 1.0);
        rad[b] = rng.uniform(0.12, 0.3) * std::min(height, width);
    }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double v = base + gx * (x - width / 2.0) / width + gy * (y - height / 2.0) / height;
            for (int b = 0; b < blobs; ++b) {
                const double dy = (y - cy[b]) / rad[b], dx = (x - cx[b]) / rad[b];
                v += amp[b] * std::exp(-0.5 * (dx * dx + dy * dy));
            }
            img[static_cast<std::size_t>(y) * width + x] = clamp01d(v);
        }
    return img;
}

// Family B: one or two low-frequency sinusoidal waves.
Tensor wave_image(Rng& rng, int height, int width) {
    Tensor img({1, height, width});
    const double base = rng.uniform(0.4, 0.6);
    const double a1 = rng.uniform(0.1, 0.2);
    const double a2 = rng.uniform(0.05, 0.15);
    const double f1 = rng.uniform(0.5, 1.5) * 2.0 * std::numbers::pi / std::min(height, width);
    const double f2 = rng.uniform(0.5, 1.5) * 2.0 * std::numbers::pi / std::min(height, width);
    const double th = rng.uniform(0.0, std::numbers::pi);
    const double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = std::cos(th), s = std::sin(th);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double u = c * x + s * y, w = -s * x + c * y;
            const double v = base + a1 * std::sin(f1 * u + ph1) + a2 * std::sin(f2 * w + ph2);
            img[static_cast<std::size_t>(y) * width + x] = clamp01d(v);
        }
    return img;
}

}  // namespace

Tensor synthetic_normal_image(Rng& rng, int height, int width, bool two_families) {
    if (two_families && rng.uniform() < 0.5) return wave_image(rng, height, width);
    return blob_image(rng, height, width);
}

Tensor synthetic_anomalous_image(Rng& rng, int height, int width, bool two_families,
                                 bool noise_square, Tensor* mask) {
    Tensor img = synthetic_normal_image(rng, height, width, two_families);
    Tensor m({height, width});
    const int side_h = std::max(4, static_cast<int>(rng.uniform(0.25, 0.45) * height));
    const int side_w = std::max(4, static_cast<int>(rng.uniform(0.25, 0.45) * width));
    const int top = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(height - side_h + 1)));
    const int left = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(width - side_w + 1)));
    if (noise_square) {
        for (int y = top; y < top + side_h; ++y)
            for (int x = left; x < left + side_w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                img[i] = clamp01d(img[i] + rng.uniform(-0.5, 0.5));
                m[i] = 1.0;
            }
    } else {
        // High-frequency stripes blended into the region: small mean shift,
        // strong structural change.
        const double freq = rng.uniform(1.8, 2.8);
        const double amp = rng.uniform(0.25, 0.4);
        const bool vertical = rng.uniform() < 0.5;
        for (int y = top; y < top + side_h; ++y)
            for (int x = left; x < left + side_w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                const double t = vertical ? x : y;
                img[i] = clamp01d(img[i] + amp * std::sin(freq * t));
                m[i] = 1.0;
            }
    }
    if (mask) *mask = std::move(m);
    return img;
}

SyntheticBenchmark make_synthetic_benchmark(const SyntheticSpec& spec) {
    Rng rng(spec.seed);
    SyntheticBenchmark b;
    auto add = [&](LabeledImageSet& set, Tensor img, int label, Tensor mask,
                   const std::string& id) {
        set.images.push_back(std::move(img));
        set.labels.push_back(label);
        set.true_labels.push_back(label);
        set.masks.push_back(std::move(mask));
        set.ids.push_back(id);
    };
    for (int i = 0; i < spec.n_normal_train; ++i)
        add(b.train, synthetic_normal_image(rng, spec.height, spec.width, spec.two_family_normals),
            0, Tensor({spec.height, spec.width}), "normal/train_" + std::to_string(i));
    for (int i = 0; i < spec.n_normal_test; ++i)
        add(b.test, synthetic_normal_image(rng, spec.height, spec.width, spec.two_family_normals),
            0, Tensor({spec.height, spec.width}), "normal/test_" + std::to_string(i));
    for (int i = 0; i < spec.n_anomalous_test; ++i) {
        const bool square = rng.uniform() < spec.square_fraction;
        Tensor mask;
        Tensor img = synthetic_anomalous_image(rng, spec.height, spec.width,
                                               spec.two_family_normals, square, &mask);
        add(b.test, std::move(img), 1, std::move(mask),
            std::string(square ? "square" : "stripes") + "/test_" + std::to_string(i));
    }
    b.train.validate();
    b.test.validate();
    return b;
}

}  // namespace igd
