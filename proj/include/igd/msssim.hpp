#pragma once

#include <vector>

#include "igd/autodiff.hpp"
#include "igd/tensor.hpp"

namespace igd {

// Multi-scale structural similarity configuration. The per-scale exponent
// weights[m] are applied to both the contrast and structure terms at scale
// m; the last entry is also the luminance exponent at the coarsest scale.
struct MsssimConfig {
    int scales = 5;
    int window = 11;
    std::vector<double> weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 4.7579;  // pixel range L used in the C constants
    double rho = 0.15;              // MAE weight in the reconstruction loss
    double pow_floor = 1e-12;       // floor inside fractional powers
    double var_eps = 1e-12;         // eps inside sqrt of window variances

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
    double c3() const { return c2() / 2.0; }

    // Whole-image model: 5 scales, 11x11 windows.
    static MsssimConfig global_model();
    // Patch model: 4 scales, 3x3 windows.
    static MsssimConfig local_model();

    // Throws std::invalid_argument on inconsistent settings or an image
    // geometry that cannot support the scale count.
    void validate(int h, int w) const;
};

// ---------------------------------------------------------------------------
// Tape ops (differentiable w.r.t. both inputs). Inputs are NCHW batches.
// Windows are clipped at image borders (statistics over the intersection
// with the image) so every pixel has a well defined similarity; coarser
// scale maps are nearest-upsampled to full resolution before the exponent
// combination.
// ---------------------------------------------------------------------------

// Per-pixel similarity map, channel-averaged: [N,1,H,W], values in [0,1].
Ref msssim_map_op(Ref x, Ref y, const MsssimConfig& cfg);
// Per-image score [N]: spatial mean of the per-pixel map.
Ref msssim_score_op(Ref x, Ref y, const MsssimConfig& cfg);
// Per-image reconstruction loss [N]: rho * MAE + (1 - rho) * (1 - score).
Ref recon_loss_op(Ref x, Ref xhat, const MsssimConfig& cfg);
// Per-image mean-squared error [N] (baseline reconstruction loss).
Ref mse_loss_op(Ref x, Ref xhat);

// ---------------------------------------------------------------------------
// Plain evaluation wrappers for single images ([C,H,W] or [1,C,H,W]).
// ---------------------------------------------------------------------------
double msssim_score(const Tensor& x, const Tensor& y, const MsssimConfig& cfg);
// Returns an [H,W] heat map of per-pixel similarity.
Tensor msssim_map(const Tensor& x, const Tensor& y, const MsssimConfig& cfg);
double recon_loss(const Tensor& x, const Tensor& xhat, const MsssimConfig& cfg);

// Per-pixel reconstruction error map [H,W]:
// rho * |x - xhat| + (1 - rho) * (1 - m(x, xhat)), channel-averaged.
Tensor recon_error_map(const Tensor& x, const Tensor& xhat, const MsssimConfig& cfg);

// [C,H,W] -> [1,C,H,W] view used by the wrappers.
Tensor as_batch_of_one(const Tensor& image);

}  // namespace igd
