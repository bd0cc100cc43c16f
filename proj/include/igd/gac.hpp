#pragma once

#include <cstdint>
#include <vector>

#include "igd/autodiff.hpp"
#include "igd/tensor.hpp"

namespace igd {

// Latent descriptor of the normal class: mean vector and a scalar (isotropic)
// standard deviation of the latent distances. Estimated, never learned by
// gradient; immutable once estimated.
struct GaussianDescriptor {
    std::vector<double> mu;
    double sigma = 0.0;
    std::int64_t n_samples = 0;

    static constexpr double kSigmaFloor = 1e-6;

    int z_dim() const { return static_cast<int>(mu.size()); }
};

// mu = mean of the latents, sigma = sqrt(mean squared distance to mu),
// clamped at kSigmaFloor. latents is [N, Z] with N >= 1.
GaussianDescriptor estimate_descriptor(const Tensor& latents);

// exp(-||z - mu||^2 / sigma^2), in (0, 1].
double normality_prob(const std::vector<double>& z, const GaussianDescriptor& d);

// 1 - normality_prob, in [0, 1).
double gac_loss(const std::vector<double>& z, const GaussianDescriptor& d);

// Per-sample losses [B] for a latent batch z[B,Z]; differentiable w.r.t. z.
// The descriptor enters as plain constants, so no gradient can reach it.
Ref gac_loss_op(Ref z, const GaussianDescriptor& d);
// Per-sample normality probabilities [B].
Ref normality_prob_op(Ref z, const GaussianDescriptor& d);

// Row n of a [N, Z] latent matrix as a vector.
std::vector<double> latent_row(const Tensor& latents, int row);

}  // namespace igd
