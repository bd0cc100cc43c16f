#pragma once

#include <vector>

#include "igd/autodiff.hpp"
#include "igd/rng.hpp"
#include "igd/tensor.hpp"

namespace igd {

// alpha * z1 + (1 - alpha) * z2 for latent vectors of equal dimension.
// alpha must lie in [0, 1].
Tensor interpolate_latents(const Tensor& z1, const Tensor& z2, double alpha);

// zeta * x + (1 - zeta) * xhat for images of equal shape; zeta in [0, 1].
Tensor blend_image(const Tensor& x, const Tensor& xhat, double zeta);

// Critic regression loss for a single pair of critic outputs:
// (alpha_pred - alpha_true)^2 + zeta_pred^2.
double critic_loss(double alpha_pred, double alpha_true, double zeta_pred);

// Generator-side interpolation regularizer: lambda3 * alpha_pred^2.
double generator_interp_reg(double alpha_pred_on_interp, double lambda3);

// Sampled pairing and coefficients for one minibatch. pair_index is a
// derangement of the batch so no image interpolates with itself; alphas are
// drawn from U(0, 0.5) and zetas from U(0, 1).
struct InterpolationBatch {
    std::vector<int> pair_index;
    std::vector<double> alpha;
    std::vector<double> zeta;
};

InterpolationBatch sample_interpolation_batch(int batch_size, Rng& rng);

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

// Row-wise convex combination: out[n] = alpha[n]*z[n] + (1-alpha[n])*z[pair[n]].
Ref interpolate_latents_op(Ref z, const std::vector<int>& pair_index,
                           const std::vector<double>& alpha);

// Per-image blend with constant x: out[n] = zeta[n]*x[n] + (1-zeta[n])*xhat[n].
Ref blend_with_const_op(Ref xhat, const Tensor& x, const std::vector<double>& zeta);

// Mean over the batch of (alpha_pred - alpha)^2 + zeta_pred^2; scalar [1].
// alpha_pred and zeta_pred are [B] critic outputs.
Ref critic_loss_op(Ref alpha_pred, const std::vector<double>& alpha_true, Ref zeta_pred);

// Mean over the batch of lambda3 * alpha_pred^2; scalar [1].
Ref generator_interp_reg_op(Ref alpha_pred_on_interp, double lambda3);

}  // namespace igd
