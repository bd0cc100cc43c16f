#include "igd/gac.hpp"

#include <cmath>
#include <stdexcept>

namespace igd {

GaussianDescriptor estimate_descriptor(const Tensor& latents) {
    if (latents.ndim() != 2 || latents.dim(0) < 1)
        throw std::invalid_argument("estimate_descriptor: need a nonempty [N,Z] latent matrix");
    const int n = latents.dim(0), z = latents.dim(1);
    GaussianDescriptor d;
    d.mu.assign(static_cast<std::size_t>(z), 0.0);
    d.n_samples = n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < z; ++j) d.mu[static_cast<std::size_t>(j)] += latents.at(i, j);
    for (double& v : d.mu) v /= static_cast<double>(n);
    double msd = 0.0;
    for (int i = 0; i < n; ++i) {
        double dist2 = 0.0;
        for (int j = 0; j < z; ++j) {
            const double delta = latents.at(i, j) - d.mu[static_cast<std::size_t>(j)];
            dist2 += delta * delta;
        }
        msd += dist2;
    }
    msd /= static_cast<double>(n);
    d.sigma = std::max(std::sqrt(msd), GaussianDescriptor::kSigmaFloor);
    return d;
}

namespace {

double squared_distance(const std::vector<double>& z, const GaussianDescriptor& d) {
    if (z.size() != d.mu.size())
        throw std::invalid_argument("gac: latent dimension does not match descriptor");
    double dist2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double delta = z[i] - d.mu[i];
        dist2 += delta * delta;
    }
    return dist2;
}

}  // namespace

double normality_prob(const std::vector<double>& z, const GaussianDescriptor& d) {
    return std::exp(-squared_distance(z, d) / (d.sigma * d.sigma));
}

double gac_loss(const std::vector<double>& z, const GaussianDescriptor& d) {
    return 1.0 - normality_prob(z, d);
}

Ref normality_prob_op(Ref z, const GaussianDescriptor& d) {
    const Tensor& zv = z.value();
    if (zv.ndim() != 2 || zv.dim(1) != d.z_dim())
        throw std::invalid_argument("gac: latent batch does not match descriptor dimension");
    Tensor mu({d.z_dim()}, d.mu);
    Ref centered = sub_rowvec_const(z, mu);
    Ref dist2 = sum_rows(square(centered));
    return exp_val(scale(dist2, -1.0 / (d.sigma * d.sigma)));
}

Ref gac_loss_op(Ref z, const GaussianDescriptor& d) {
    return rsub_scalar(1.0, normality_prob_op(z, d));
}

std::vector<double> latent_row(const Tensor& latents, int row) {
    const int z = latents.dim(1);
    std::vector<double> out(static_cast<std::size_t>(z));
    for (int j = 0; j < z; ++j) out[static_cast<std::size_t>(j)] = latents.at(row, j);
    return out;
}

}  // namespace igd
