// Independent reference implementations used to validate the library:
// a straight-from-definition multi-scale similarity (naive per-pixel window
// loops, explicit downsampling) and an O(n^2) pairwise AUC. These share no
// code with the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "igd/msssim.hpp"
#include "igd/tensor.hpp"

namespace igd_testing {

// [C,H,W] -> [C,floor(H/2),floor(W/2)] by 2x2 block averaging.
inline igd::Tensor oracle_downsample2(const igd::Tensor& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int oh = h / 2, ow = w / 2;
    igd::Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        s += img[(static_cast<std::size_t>(ch) * h + 2 * y + dy) * w + 2 * x + dx];
                out[(static_cast<std::size_t>(ch) * oh + y) * ow + x] = 0.25 * s;
            }
    return out;
}

// Per-pixel similarity map [H,W] by direct evaluation of the luminance,
// contrast and structure terms over border-clipped windows at every scale.
inline igd::Tensor oracle_msssim_map(const igd::Tensor& x0, const igd::Tensor& y0,
                                     const igd::MsssimConfig& cfg) {
    const int channels = x0.dim(0), height = x0.dim(1), width = x0.dim(2);
    const double c1 = cfg.c1(), c2 = cfg.c2(), c3 = cfg.c3();
    auto powf = [&](double base, double e) {
        return std::pow(base < cfg.pow_floor ? cfg.pow_floor : base, e);
    };
    igd::Tensor map({height, width});
    for (int ch = 0; ch < channels; ++ch) {
        igd::Tensor xs({1, height, width}), ys({1, height, width});
        for (int i = 0; i < height * width; ++i) {
            xs[static_cast<std::size_t>(i)] = x0[(static_cast<std::size_t>(ch) * height * width) + i];
            ys[static_cast<std::size_t>(i)] = y0[(static_cast<std::size_t>(ch) * height * width) + i];
        }
        std::vector<double> channel_map(static_cast<std::size_t>(height) * width, 1.0);
        for (int m = 0; m < cfg.scales; ++m) {
            if (m > 0) {
                xs = oracle_downsample2(xs);
                ys = oracle_downsample2(ys);
            }
            const int hm = xs.dim(1), wm = xs.dim(2);
            const int k = std::min(cfg.window, std::min(hm, wm));
            const int lo = (k - 1) / 2, hi = k - 1 - lo;
            const double weight = cfg.weights[static_cast<std::size_t>(m)];
            const bool coarsest = m == cfg.scales - 1;
            std::vector<double> scale_map(static_cast<std::size_t>(hm) * wm);
            for (int i = 0; i < hm; ++i)
                for (int j = 0; j < wm; ++j) {
                    const int ra = std::max(0, i - lo), rb = std::min(hm - 1, i + hi);
                    const int ca = std::max(0, j - lo), cb = std::min(wm - 1, j + hi);
                    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                    int n = 0;
                    for (int r = ra; r <= rb; ++r)
                        for (int cc = ca; cc <= cb; ++cc) {
                            const double xv = xs[static_cast<std::size_t>(r) * wm + cc];
                            const double yv = ys[static_cast<std::size_t>(r) * wm + cc];
                            sx += xv;
                            sy += yv;
                            sxx += xv * xv;
                            syy += yv * yv;
                            sxy += xv * yv;
                            ++n;
                        }
                    const double mx = sx / n, my = sy / n;
                    const double vx = std::max(0.0, sxx / n - mx * mx);
                    const double vy = std::max(0.0, syy / n - my * my);
                    const double cov = sxy / n - mx * my;
                    const double sdx = std::sqrt(vx + cfg.var_eps);
                    const double sdy = std::sqrt(vy + cfg.var_eps);
                    const double c_term = (2.0 * sdx * sdy + c2) / (sdx * sdx + sdy * sdy + c2);
                    const double s_term = (cov + c3) / (sdx * sdy + c3);
                    double v = powf(c_term, weight) * powf(s_term, weight);
                    if (coarsest) {
                        const double l_term = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                        v *= powf(l_term, weight);
                    }
                    scale_map[static_cast<std::size_t>(i) * wm + j] = v;
                }
            for (int i = 0; i < height; ++i)
                for (int j = 0; j < width; ++j) {
                    const int si = std::min(i >> m, hm - 1);
                    const int sj = std::min(j >> m, wm - 1);
                    channel_map[static_cast<std::size_t>(i) * width + j] *=
                        scale_map[static_cast<std::size_t>(si) * wm + sj];
                }
        }
        for (int i = 0; i < height * width; ++i) {
            const double v = std::clamp(channel_map[static_cast<std::size_t>(i)], 0.0, 1.0);
            map[static_cast<std::size_t>(i)] += v / channels;
        }
    }
    return map;
}

inline double oracle_msssim_score(const igd::Tensor& x, const igd::Tensor& y,
                                  const igd::MsssimConfig& cfg) {
    return oracle_msssim_map(x, y, cfg).mean();
}

inline double oracle_recon_loss(const igd::Tensor& x, const igd::Tensor& xhat,
                                const igd::MsssimConfig& cfg) {
    double mae = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mae += std::abs(x[i] - xhat[i]);
    mae /= static_cast<double>(x.size());
    return cfg.rho * mae + (1.0 - cfg.rho) * (1.0 - oracle_msssim_score(x, xhat, cfg));
}

// P(score_anomalous > score_normal) + 0.5 P(tie) by exhaustive comparison.
inline double oracle_pairwise_auc(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    for (int l : labels) n_neg += l == 0 ? 1 : 0;
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace igd_testing
