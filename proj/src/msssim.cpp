#include "igd/msssim.hpp"

#include <algorithm>
#include <stdexcept>

namespace igd {

MsssimConfig MsssimConfig::global_model() { return MsssimConfig{}; }

MsssimConfig MsssimConfig::local_model() {
    MsssimConfig cfg;
    cfg.scales = 4;
    cfg.window = 3;
    cfg.weights = {0.0516, 0.3295, 0.3463, 0.2726};
    return cfg;
}

void MsssimConfig::validate(int h, int w) const {
    if (scales < 1) throw std::invalid_argument("MsssimConfig: scales must be >= 1");
    if (window < 1) throw std::invalid_argument("MsssimConfig: window must be >= 1");
    if (static_cast<int>(weights.size()) != scales)
        throw std::invalid_argument("MsssimConfig: need one exponent weight per scale");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("MsssimConfig: rho must be in [0,1]");
    int hh = h, ww = w;
    for (int m = 1; m < scales; ++m) {
        hh /= 2;
        ww /= 2;
    }
    if (hh < 1 || ww < 1)
        throw std::invalid_argument("MsssimConfig: image too small for the scale count");
}

namespace {

struct ScaleTerms {
    Ref map;  // combined [c^beta * s^gamma] (and l^alpha at the coarsest scale)
};

// Combined similarity term at one scale, same spatial size as the inputs.
Ref scale_similarity(Ref x, Ref y, const MsssimConfig& cfg, int k, double weight, bool coarsest) {
    const double C1 = cfg.c1(), C2 = cfg.c2(), C3 = cfg.c3();
    Ref mu_x = box_mean(x, k);
    Ref mu_y = box_mean(y, k);
    Ref mu_xx = box_mean(square(x), k);
    Ref mu_yy = box_mean(square(y), k);
    Ref mu_xy = box_mean(mul(x, y), k);

    Ref var_x = clamp_min0(sub(mu_xx, square(mu_x)));
    Ref var_y = clamp_min0(sub(mu_yy, square(mu_y)));
    Ref cov = sub(mu_xy, mul(mu_x, mu_y));
    Ref sig_x = sqrt_eps(var_x, cfg.var_eps);
    Ref sig_y = sqrt_eps(var_y, cfg.var_eps);
    Ref sig_xy = mul(sig_x, sig_y);

    // c = (2*sx*sy + C2) / (sx^2 + sy^2 + C2)
    Ref c_num = add_scalar(scale(sig_xy, 2.0), C2);
    Ref c_den = add_scalar(add(square(sig_x), square(sig_y)), C2);
    Ref c_term = div(c_num, c_den);
    // s = (cov + C3) / (sx*sy + C3); can be negative for anticorrelation.
    Ref s_term = div(add_scalar(cov, C3), add_scalar(sig_xy, C3));

    Ref combined = mul(pow_floored(c_term, weight, cfg.pow_floor),
                       pow_floored(s_term, weight, cfg.pow_floor));
    if (coarsest) {
        // l = (2*mx*my + C1) / (mx^2 + my^2 + C1)
        Ref l_num = add_scalar(scale(mul(mu_x, mu_y), 2.0), C1);
        Ref l_den = add_scalar(add(square(mu_x), square(mu_y)), C1);
        Ref l_term = div(l_num, l_den);
        combined = mul(combined, pow_floored(l_term, weight, cfg.pow_floor));
    }
    return combined;
}

}  // namespace

Ref msssim_map_op(Ref x, Ref y, const MsssimConfig& cfg) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const Tensor& yv = t.val(y.id);
    require_same_shape(xv, yv, "msssim");
    if (xv.ndim() != 4) throw std::invalid_argument("msssim: need NCHW input");
    const int H = xv.dim(2), W = xv.dim(3);
    cfg.validate(H, W);

    Ref xm = x, ym = y;
    Ref full_map;
    for (int m = 0; m < cfg.scales; ++m) {
        if (m > 0) {
            xm = avg_pool2(xm);
            ym = avg_pool2(ym);
        }
        const Tensor& cur = t.val(xm.id);
        const int hm = cur.dim(2), wm = cur.dim(3);
        const int k = std::min(cfg.window, std::min(hm, wm));
        const bool coarsest = (m == cfg.scales - 1);
        Ref term = scale_similarity(xm, ym, cfg, k, cfg.weights[static_cast<std::size_t>(m)],
                                    coarsest);
        Ref up = (m == 0) ? term : upsample_shift(term, H, W, m);
        full_map = (m == 0) ? up : mul(full_map, up);
    }
    return mean_channels(clamp01(full_map));
}

Ref msssim_score_op(Ref x, Ref y, const MsssimConfig& cfg) {
    return mean_per_image(msssim_map_op(x, y, cfg));
}

Ref recon_loss_op(Ref x, Ref xhat, const MsssimConfig& cfg) {
    Ref mae = mean_per_image(abs_val(sub(x, xhat)));
    Ref dissim = rsub_scalar(1.0, msssim_score_op(x, xhat, cfg));
    return add(scale(mae, cfg.rho), scale(dissim, 1.0 - cfg.rho));
}

Ref mse_loss_op(Ref x, Ref xhat) { return mean_per_image(square(sub(x, xhat))); }

Tensor as_batch_of_one(const Tensor& image) {
    if (image.ndim() == 4) {
        if (image.dim(0) != 1)
            throw std::invalid_argument("as_batch_of_one: batch dimension must be 1");
        return image;
    }
    if (image.ndim() != 3) throw std::invalid_argument("as_batch_of_one: need [C,H,W]");
    return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
}

double msssim_score(const Tensor& x, const Tensor& y, const MsssimConfig& cfg) {
    Tape t;
    Ref rx = t.constant(as_batch_of_one(x));
    Ref ry = t.constant(as_batch_of_one(y));
    return msssim_score_op(rx, ry, cfg).value()[0];
}

Tensor msssim_map(const Tensor& x, const Tensor& y, const MsssimConfig& cfg) {
    Tape t;
    Ref rx = t.constant(as_batch_of_one(x));
    Ref ry = t.constant(as_batch_of_one(y));
    const Tensor& m = msssim_map_op(rx, ry, cfg).value();
    return m.reshaped({m.dim(2), m.dim(3)});
}

double recon_loss(const Tensor& x, const Tensor& xhat, const MsssimConfig& cfg) {
    Tape t;
    Ref rx = t.constant(as_batch_of_one(x));
    Ref ry = t.constant(as_batch_of_one(xhat));
    return recon_loss_op(rx, ry, cfg).value()[0];
}

Tensor recon_error_map(const Tensor& x, const Tensor& xhat, const MsssimConfig& cfg) {
    Tape t;
    Ref rx = t.constant(as_batch_of_one(x));
    Ref ry = t.constant(as_batch_of_one(xhat));
    Ref sim = msssim_map_op(rx, ry, cfg);                       // [1,1,H,W]
    Ref mae = mean_channels(abs_val(sub(rx, ry)));              // [1,1,H,W]
    Ref m = add(scale(mae, cfg.rho), scale(rsub_scalar(1.0, sim), 1.0 - cfg.rho));
    const Tensor& v = m.value();
    return v.reshaped({v.dim(2), v.dim(3)});
}

}  // namespace igd
