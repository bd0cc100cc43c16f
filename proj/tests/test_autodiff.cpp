#include "doctest.h"

#include "igd/autodiff.hpp"
#include "igd/rng.hpp"
#include "test_support.hpp"

using namespace igd;
using igd_testing::max_grad_rel_err;
using igd_testing::random_tensor;

TEST_SUITE_BEGIN("autodiff");

namespace {

// Scalarize an op output against fixed random weights so asymmetric
// gradient bugs cannot cancel in a plain mean.
Ref weigh(Tape& t, Ref y, const Tensor& w) { return sum_all(mul(y, t.constant(w))); }

}  // namespace

TEST_CASE("elementwise chain gradient") {
    Rng rng(1);
    Tensor x = random_tensor({2, 5}, rng, 0.1, 0.9);
    const double err = max_grad_rel_err(x, [](Tape& t, Ref x) {
        Ref a = sigmoid(scale(x, 2.0));
        Ref b = exp_val(neg(square(x)));
        Ref c = sqrt_eps(mul(a, b), 1e-12);
        (void)t;
        return mean_all(c);
    });
    CHECK(err < 1e-5);
}

TEST_CASE("abs and pow_floored gradients away from kinks") {
    Rng rng(2);
    Tensor x = random_tensor({3, 4}, rng, 0.2, 0.9);
    const double err = max_grad_rel_err(x, [](Tape&, Ref x) {
        return mean_all(add(abs_val(add_scalar(x, -0.05)), pow_floored(x, 0.3001, 1e-12)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("linear value and gradients") {
    Rng rng(3);
    Tensor x = random_tensor({4, 6}, rng, -1.0, 1.0);
    Tensor w = random_tensor({6, 3}, rng, -1.0, 1.0);
    Tensor b = random_tensor({3}, rng, -1.0, 1.0);
    Tensor mix = random_tensor({4, 3}, rng, -1.0, 1.0);

    {
        Tape t;
        const Tensor& y = linear(t.constant(x), t.constant(w), t.constant(b)).value();
        double expect = b[1];
        for (int i = 0; i < 6; ++i) expect += x.at(2, i) * w.at(i, 1);
        CHECK(y.at(2, 1) == doctest::Approx(expect).epsilon(1e-12));
    }
    const double ex = max_grad_rel_err(x, [&](Tape& t, Ref xx) {
        return weigh(t, linear(xx, t.constant(w), t.constant(b)), mix);
    });
    const double ew = max_grad_rel_err(w, [&](Tape& t, Ref ww) {
        return weigh(t, linear(t.constant(x), ww, t.constant(b)), mix);
    });
    const double eb = max_grad_rel_err(b, [&](Tape& t, Ref bb) {
        return weigh(t, linear(t.constant(x), t.constant(w), bb), mix);
    });
    CHECK(ex < 1e-6);
    CHECK(ew < 1e-6);
    CHECK(eb < 1e-6);
}

TEST_CASE("conv2d identity kernel reproduces input") {
    Rng rng(4);
    Tensor x = random_tensor({1, 1, 5, 5}, rng);
    Tensor w({1, 1, 3, 3});
    w.at(0, 0, 1, 1) = 1.0;
    Tape t;
    const Tensor& y = conv2d(t.constant(x), t.constant(w), Ref{}, 1, 1).value();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d gradients (stride 1 and 2)") {
    Rng rng(5);
    for (int stride : {1, 2}) {
        Tensor x = random_tensor({2, 3, 6, 6}, rng, -1.0, 1.0);
        Tensor w = random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
        Tensor b = random_tensor({4}, rng, -0.5, 0.5);
        const int oh = (6 + 2 - 3) / stride + 1;
        Tensor mix = random_tensor({2, 4, oh, oh}, rng, -1.0, 1.0);
        const double ex = max_grad_rel_err(x, [&](Tape& t, Ref xx) {
            return weigh(t, conv2d(xx, t.constant(w), t.constant(b), stride, 1), mix);
        });
        const double ew = max_grad_rel_err(w, [&](Tape& t, Ref ww) {
            return weigh(t, conv2d(t.constant(x), ww, t.constant(b), stride, 1), mix);
        });
        const double eb = max_grad_rel_err(b, [&](Tape& t, Ref bb) {
            return weigh(t, conv2d(t.constant(x), t.constant(w), bb, stride, 1), mix);
        });
        CHECK(ex < 1e-5);
        CHECK(ew < 1e-5);
        CHECK(eb < 1e-5);
    }
}

TEST_CASE("conv2d_transpose doubles resolution and has exact gradients") {
    Rng rng(6);
    Tensor x = random_tensor({2, 3, 4, 4}, rng, -1.0, 1.0);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor b = random_tensor({2}, rng, -0.5, 0.5);
    {
        Tape t;
        const Tensor& y =
            conv2d_transpose(t.constant(x), t.constant(w), t.constant(b), 2, 1, 1).value();
        CHECK(y.dim(2) == 8);
        CHECK(y.dim(3) == 8);
    }
    Tensor mix = random_tensor({2, 2, 8, 8}, rng, -1.0, 1.0);
    const double ex = max_grad_rel_err(x, [&](Tape& t, Ref xx) {
        return weigh(t, conv2d_transpose(xx, t.constant(w), t.constant(b), 2, 1, 1), mix);
    });
    const double ew = max_grad_rel_err(w, [&](Tape& t, Ref ww) {
        return weigh(t, conv2d_transpose(t.constant(x), ww, t.constant(b), 2, 1, 1), mix);
    });
    CHECK(ex < 1e-5);
    CHECK(ew < 1e-5);
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
    // <conv(x), y> == <x, conv_transpose(y)> for matching geometry.
    Rng rng(7);
    Tensor x = random_tensor({1, 2, 6, 6}, rng, -1.0, 1.0);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, -1.0, 1.0);  // conv weights [OC,IC,KH,KW]
    Tensor y = random_tensor({1, 3, 3, 3}, rng, -1.0, 1.0);  // conv output for stride 2 pad 1
    Tape t;
    const Tensor& cx = conv2d(t.constant(x), t.constant(w), Ref{}, 2, 1).value();
    // Transposed weights [IC=3 -> OC=2] are the same array viewed as [3,2,..]
    // only if we permute; instead check via gradient: d<conv(x),y>/dx equals
    // conv_transpose(y) with w. Use backward for the left side.
    Tensor sink({1, 2, 6, 6});
    Tape t2;
    Ref xr = t2.leaf(x, &sink);
    Ref lhs = sum_all(mul(conv2d(xr, t2.constant(w), Ref{}, 2, 1), t2.constant(y)));
    t2.backward(lhs);
    // Right side: conv2d_transpose reads the same [OC,IC,KH,KW] array as
    // [IC',OC',KH,KW], which is exactly the adjoint orientation.
    Tape t3;
    const int out_pad = 6 - ((3 - 1) * 2 - 2 + 3);
    const Tensor& rhs =
        conv2d_transpose(t3.constant(y), t3.constant(w), Ref{}, 2, 1, out_pad).value();
    REQUIRE(rhs.same_shape(sink));
    double dot1 = 0.0;
    for (std::size_t i = 0; i < cx.size(); ++i) dot1 += cx[i] * y[i];
    double dot2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot2 += x[i] * rhs[i];
    CHECK(dot1 == doctest::Approx(dot2).epsilon(1e-10));
    for (std::size_t i = 0; i < sink.size(); ++i)
        CHECK(sink[i] == doctest::Approx(rhs[i]).epsilon(1e-10));
}

TEST_CASE("pooling values and gradients") {
    Rng rng(8);
    Tensor x = random_tensor({2, 2, 6, 6}, rng, -1.0, 1.0);
    {
        Tape t;
        const Tensor& y = avg_pool2(t.constant(x)).value();
        CHECK(y.at(0, 0, 0, 0) ==
              doctest::Approx(0.25 * (x.at(0, 0, 0, 0) + x.at(0, 0, 0, 1) + x.at(0, 0, 1, 0) +
                                      x.at(0, 0, 1, 1))));
    }
    Tensor mix3 = random_tensor({2, 2, 3, 3}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) { return weigh(t, avg_pool2(xx), mix3); }) <
          1e-6);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, max_pool(xx, 3, 2, 1), mix3);
          }) < 1e-5);
    Tensor mix_gap = random_tensor({2, 2}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, global_avg_pool(xx), mix_gap);
          }) < 1e-6);
    Tensor mix_mc = random_tensor({2, 1, 6, 6}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, mean_channels(xx), mix_mc);
          }) < 1e-6);
}

TEST_CASE("box_mean equals direct clipped-window mean and has exact adjoint") {
    Rng rng(9);
    Tensor x = random_tensor({1, 1, 7, 6}, rng);
    const int k = 3;
    Tape t;
    const Tensor& y = box_mean(t.constant(x), k).value();
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 6; ++j) {
            const int ra = std::max(0, i - 1), rb = std::min(6, i + 1);
            const int ca = std::max(0, j - 1), cb = std::min(5, j + 1);
            double s = 0.0;
            int n = 0;
            for (int r = ra; r <= rb; ++r)
                for (int c = ca; c <= cb; ++c) {
                    s += x.at(0, 0, r, c);
                    ++n;
                }
            CHECK(y.at(0, 0, i, j) == doctest::Approx(s / n).epsilon(1e-12));
        }
    Tensor mix = random_tensor({1, 1, 7, 6}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t2, Ref xx) { return weigh(t2, box_mean(xx, k), mix); }) <
          1e-6);
    // Even window (clamped coarse scales hit k=2).
    CHECK(max_grad_rel_err(x, [&](Tape& t2, Ref xx) { return weigh(t2, box_mean(xx, 2), mix); }) <
          1e-6);
}

TEST_CASE("upsample_shift gathers with clamped indices") {
    Rng rng(10);
    Tensor x = random_tensor({1, 1, 3, 3}, rng);
    Tape t;
    const Tensor& y = upsample_shift(t.constant(x), 7, 7, 1).value();
    CHECK(y.at(0, 0, 0, 0) == x.at(0, 0, 0, 0));
    CHECK(y.at(0, 0, 3, 3) == x.at(0, 0, 1, 1));
    CHECK(y.at(0, 0, 6, 6) == x.at(0, 0, 2, 2));  // 6>>1 = 3 clamps to 2
    Tensor mix = random_tensor({1, 1, 7, 7}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t2, Ref xx) {
              return weigh(t2, upsample_shift(xx, 7, 7, 1), mix);
          }) < 1e-6);
}

TEST_CASE("batch ops: permute, per-image scale, row sums") {
    Rng rng(11);
    Tensor x = random_tensor({4, 3}, rng, -1.0, 1.0);
    const std::vector<int> idx = {2, 0, 3, 1};
    const std::vector<double> s = {0.3, -1.2, 2.0, 0.5};
    {
        Tape t;
        const Tensor& y = permute_batch(t.constant(x), idx).value();
        CHECK(y.at(0, 1) == x.at(2, 1));
        CHECK(y.at(3, 2) == x.at(1, 2));
    }
    Tensor mix = random_tensor({4, 3}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, permute_batch(xx, idx), mix);
          }) < 1e-6);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, scale_per_image(xx, s), mix);
          }) < 1e-6);
    Tensor mixrow = random_tensor({4}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) { return weigh(t, sum_rows(xx), mixrow); }) <
          1e-6);
    CHECK(max_grad_rel_err(x, [&](Tape& t, Ref xx) {
              return weigh(t, mean_per_image(xx), mixrow);
          }) < 1e-6);
}

TEST_CASE("gradient accumulates across reuse of a node") {
    // loss = mean(x*x) + mean(x) uses x twice.
    Rng rng(12);
    Tensor x = random_tensor({3, 3}, rng, -1.0, 1.0);
    CHECK(max_grad_rel_err(x, [](Tape&, Ref xx) {
              return add(mean_all(square(xx)), mean_all(xx));
          }) < 1e-6);
}

TEST_CASE("backward only touches reachable leaves") {
    Tape t;
    Tensor sink_a({2}), sink_b({2});
    Ref a = t.leaf(Tensor({2}, 1.0), &sink_a);
    Ref b = t.leaf(Tensor({2}, 2.0), &sink_b);
    Ref loss = mean_all(square(a));
    (void)b;
    t.backward(loss);
    CHECK(sink_a[0] != 0.0);
    CHECK(sink_b[0] == 0.0);
    CHECK(sink_b[1] == 0.0);
}

TEST_SUITE_END();
