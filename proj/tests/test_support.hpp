#pragma once

#include <cmath>
#include <functional>

#include "doctest.h"

#include "igd/autodiff.hpp"
#include "igd/rng.hpp"
#include "igd/tensor.hpp"

namespace igd_testing {

inline igd::Tensor random_tensor(std::vector<int> shape, igd::Rng& rng, double lo = 0.0,
                                 double hi = 1.0) {
    igd::Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

// Central-difference checks of d(loss)/d(x) for a scalar loss built from a
// single leaf.

// Vector-level relative error ||g - fd|| / max(||g||, ||fd||). Robust to
// near-zero gradient coordinates where the per-coordinate ratio blows up on
// truncation error alone.
inline double grad_norm_rel_err(
    const igd::Tensor& x0, const std::function<igd::Ref(igd::Tape&, igd::Ref)>& make_loss,
    double step = 1e-3) {
    igd::Tensor sink(x0.shape());
    igd::Tape t;
    igd::Ref x = t.leaf(x0, &sink);
    t.backward(make_loss(t, x));
    auto eval = [&](const igd::Tensor& xv) {
        igd::Tape tt;
        return make_loss(tt, tt.constant(xv)).value()[0];
    };
    double num = 0.0, den_g = 0.0, den_f = 0.0;
    igd::Tensor xp = x0, xm = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        xp[i] = x0[i] + step;
        xm[i] = x0[i] - step;
        const double fd = (eval(xp) - eval(xm)) / (2.0 * step);
        xp[i] = x0[i];
        xm[i] = x0[i];
        num += (sink[i] - fd) * (sink[i] - fd);
        den_g += sink[i] * sink[i];
        den_f += fd * fd;
    }
    const double den = std::max({std::sqrt(den_g), std::sqrt(den_f), 1e-12});
    return std::sqrt(num) / den;
}

// Max per-coordinate relative error; strictest form, use with small steps.
inline double max_grad_rel_err(
    const igd::Tensor& x0, const std::function<igd::Ref(igd::Tape&, igd::Ref)>& make_loss,
    double step = 1e-5) {
    igd::Tensor sink(x0.shape());
    igd::Tape t;
    igd::Ref x = t.leaf(x0, &sink);
    igd::Ref loss = make_loss(t, x);
    t.backward(loss);

    auto eval = [&](const igd::Tensor& xv) {
        igd::Tape tt;
        igd::Ref xx = tt.constant(xv);
        return make_loss(tt, xx).value()[0];
    };

    double worst = 0.0;
    igd::Tensor xp = x0, xm = x0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        xp[i] = x0[i] + step;
        xm[i] = x0[i] - step;
        const double fd = (eval(xp) - eval(xm)) / (2.0 * step);
        xp[i] = x0[i];
        xm[i] = x0[i];
        const double g = sink[i];
        const double denom = std::max({std::abs(g), std::abs(fd), 1e-6});
        worst = std::max(worst, std::abs(g - fd) / denom);
    }
    return worst;
}

}  // namespace igd_testing
