#include "igd/interpolation.hpp"

#include <stdexcept>

namespace igd {

Tensor interpolate_latents(const Tensor& z1, const Tensor& z2, double alpha) {
    require_same_shape(z1, z2, "interpolate_latents");
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("interpolate_latents: alpha must be in [0,1]");
    Tensor out = z1;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = alpha * z1[i] + (1.0 - alpha) * z2[i];
    return out;
}

Tensor blend_image(const Tensor& x, const Tensor& xhat, double zeta) {
    require_same_shape(x, xhat, "blend_image");
    if (zeta < 0.0 || zeta > 1.0)
        throw std::invalid_argument("blend_image: zeta must be in [0,1]");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = zeta * x[i] + (1.0 - zeta) * xhat[i];
    return out;
}

double critic_loss(double alpha_pred, double alpha_true, double zeta_pred) {
    const double da = alpha_pred - alpha_true;
    return da * da + zeta_pred * zeta_pred;
}

double generator_interp_reg(double alpha_pred_on_interp, double lambda3) {
    return lambda3 * alpha_pred_on_interp * alpha_pred_on_interp;
}

InterpolationBatch sample_interpolation_batch(int batch_size, Rng& rng) {
    if (batch_size < 2)
        throw std::invalid_argument("sample_interpolation_batch: need batch size >= 2");
    InterpolationBatch b;
    b.pair_index = rng.derangement(batch_size);
    b.alpha.resize(static_cast<std::size_t>(batch_size));
    b.zeta.resize(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        b.alpha[static_cast<std::size_t>(i)] = rng.uniform(0.0, 0.5);
        b.zeta[static_cast<std::size_t>(i)] = rng.uniform(0.0, 1.0);
    }
    return b;
}

Ref interpolate_latents_op(Ref z, const std::vector<int>& pair_index,
                           const std::vector<double>& alpha) {
    const int n = z.value().dim(0);
    if (static_cast<int>(pair_index.size()) != n || static_cast<int>(alpha.size()) != n)
        throw std::invalid_argument("interpolate_latents_op: batch size mismatch");
    std::vector<double> one_minus(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) one_minus[i] = 1.0 - alpha[i];
    Ref partner = permute_batch(z, pair_index);
    return add(scale_per_image(z, alpha), scale_per_image(partner, one_minus));
}

Ref blend_with_const_op(Ref xhat, const Tensor& x, const std::vector<double>& zeta) {
    const Tensor& xv = xhat.value();
    require_same_shape(xv, x, "blend_with_const_op");
    const int n = xv.dim(0);
    if (static_cast<int>(zeta.size()) != n)
        throw std::invalid_argument("blend_with_const_op: batch size mismatch");
    std::vector<double> one_minus(zeta.size());
    for (std::size_t i = 0; i < zeta.size(); ++i) one_minus[i] = 1.0 - zeta[i];
    // zeta * x is a constant; only (1 - zeta) * xhat carries gradient.
    Tensor zx = x;
    const std::size_t per = x.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < per; ++j)
            zx[static_cast<std::size_t>(i) * per + j] *= zeta[static_cast<std::size_t>(i)];
    return add_const(scale_per_image(xhat, one_minus), zx);
}

Ref critic_loss_op(Ref alpha_pred, const std::vector<double>& alpha_true, Ref zeta_pred) {
    const Tensor& ap = alpha_pred.value();
    if (ap.ndim() != 1 || static_cast<int>(alpha_true.size()) != ap.dim(0))
        throw std::invalid_argument("critic_loss_op: alpha batch mismatch");
    Tensor truth({ap.dim(0)}, alpha_true);
    Ref err = sub_const(alpha_pred, truth);
    return add(mean_all(square(err)), mean_all(square(zeta_pred)));
}

Ref generator_interp_reg_op(Ref alpha_pred_on_interp, double lambda3) {
    return scale(mean_all(square(alpha_pred_on_interp)), lambda3);
}

}  // namespace igd
