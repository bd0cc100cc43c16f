#include "igd/inference.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "igd/gac.hpp"
#include "igd/image_io.hpp"
#include "igd/msssim.hpp"

namespace igd {

namespace {

void require_descriptor(const ModelBundle& mb, const char* where) {
    if (mb.descriptor.mu.empty())
        throw std::invalid_argument(std::string(where) + ": model has no estimated descriptor");
}

bool uses_gac(const ModelBundle& mb) {
    return mb.train_cfg.variant == TrainVariant::rec_gac ||
           mb.train_cfg.variant == TrainVariant::igd;
}

// Per-patch scores for a stack of patches [P,C,h,w], evaluated in chunks.
struct PatchScores {
    std::vector<double> recon;
    std::vector<double> gac;
};

PatchScores patch_scores(const ModelBundle& mb, const Tensor& patches) {
    const int p = patches.dim(0);
    PatchScores out;
    out.recon.resize(static_cast<std::size_t>(p));
    out.gac.resize(static_cast<std::size_t>(p), 0.0);
    const bool gac_on = uses_gac(mb);
    const std::size_t per = patches.size() / static_cast<std::size_t>(p);
    const int chunk = 64;
    for (int start = 0; start < p; start += chunk) {
        const int count = std::min(chunk, p - start);
        Tensor batch({count, patches.dim(1), patches.dim(2), patches.dim(3)});
        std::memcpy(batch.data(), patches.data() + static_cast<std::size_t>(start) * per,
                    sizeof(double) * per * static_cast<std::size_t>(count));
        Tape t;
        Ref x = t.constant(std::move(batch));
        Ref z = mb.encoder.forward(t, x, false);
        Ref xhat = mb.decoder.forward(t, z, false);
        Ref recon = mb.train_cfg.variant == TrainVariant::mse
                        ? mse_loss_op(x, xhat)
                        : recon_loss_op(x, xhat, mb.msssim);
        const Tensor& rv = recon.value();
        for (int i = 0; i < count; ++i) out.recon[static_cast<std::size_t>(start + i)] = rv[static_cast<std::size_t>(i)];
        if (gac_on) {
            const Tensor& gv = gac_loss_op(z, mb.descriptor).value();
            for (int i = 0; i < count; ++i) out.gac[static_cast<std::size_t>(start + i)] = gv[static_cast<std::size_t>(i)];
        }
    }
    return out;
}

}  // namespace

GlobalScore global_score(const ModelBundle& mb, const Tensor& image) {
    if (mb.is_baseline())
        throw std::invalid_argument("global_score: baseline bundles use baseline_score");
    if (uses_gac(mb)) require_descriptor(mb, "global_score");
    Tape t;
    Ref x = t.constant(as_batch_of_one(image));
    Ref z = mb.encoder.forward(t, x, false);
    Ref xhat = mb.decoder.forward(t, z, false);
    GlobalScore s;
    s.recon = (mb.train_cfg.variant == TrainVariant::mse
                   ? mse_loss_op(x, xhat)
                   : recon_loss_op(x, xhat, mb.msssim))
                  .value()[0];
    if (uses_gac(mb)) s.gac = gac_loss_op(z, mb.descriptor).value()[0];
    s.total = s.recon + s.gac;
    return s;
}

LocalScore local_score(const ModelBundle& mb, const Tensor& image, int stride) {
    if (uses_gac(mb)) require_descriptor(mb, "local_score");
    if (stride < 1) throw std::invalid_argument("local_score: stride must be >= 1");
    const int ph = mb.backbone.input_h, pw = mb.backbone.input_w;
    std::vector<Patch> patches = extract_patches(image, ph, pw, stride, stride);
    Tensor stack({static_cast<int>(patches.size()), image.dim(0), ph, pw});
    const std::size_t per = static_cast<std::size_t>(image.dim(0)) * ph * pw;
    for (std::size_t i = 0; i < patches.size(); ++i)
        std::memcpy(stack.data() + i * per, patches[i].data.data(), sizeof(double) * per);
    PatchScores ps = patch_scores(mb, stack);

    LocalScore best;
    best.total = -1.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const double total = ps.recon[i] + ps.gac[i];
        if (total > best.total) {
            best.total = total;
            best.recon = ps.recon[i];
            best.gac = ps.gac[i];
            best.center_y = patches[i].center_y;
            best.center_x = patches[i].center_x;
        }
    }
    return best;
}

ScoreBreakdown detection_score(const ModelBundle& global_model, const ModelBundle& local_model,
                               const Tensor& image, int local_stride) {
    GlobalScore g = global_score(global_model, image);
    LocalScore l = local_score(local_model, image, local_stride);
    ScoreBreakdown s;
    s.s_global = g.total;
    s.s_local = l.total;
    s.s_total = g.total + l.total;
    s.recon_term_g = g.recon;
    s.gac_term_g = g.gac;
    s.recon_term_l = l.recon;
    s.gac_term_l = l.gac;
    s.argmax_cy = l.center_y;
    s.argmax_cx = l.center_x;
    return s;
}

Tensor localization_map(const ModelBundle& global_model, const ModelBundle& local_model,
                        const Tensor& image) {
    const int h = image.dim(1), w = image.dim(2);
    // Global term: per-pixel reconstruction error of the whole-image model.
    Tensor xhat;
    {
        Tape t;
        Ref x = t.constant(as_batch_of_one(image));
        Ref z = global_model.encoder.forward(t, x, false);
        const Tensor& y = global_model.decoder.forward(t, z, false).value();
        xhat = y.reshaped({y.dim(1), y.dim(2), y.dim(3)});
    }
    Tensor out = recon_error_map(image, xhat, global_model.msssim);

    // Local term: stride-1 patch grid, one patch reconstruction loss per pixel.
    const int ph = local_model.backbone.input_h, pw = local_model.backbone.input_w;
    std::vector<Patch> patches = extract_patches(image, ph, pw, 1, 1);
    Tensor stack({static_cast<int>(patches.size()), image.dim(0), ph, pw});
    const std::size_t per = static_cast<std::size_t>(image.dim(0)) * ph * pw;
    for (std::size_t i = 0; i < patches.size(); ++i)
        std::memcpy(stack.data() + i * per, patches[i].data.data(), sizeof(double) * per);
    PatchScores ps = patch_scores(local_model, stack);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Patch& p = patches[i];
        out[static_cast<std::size_t>(p.center_y) * w + p.center_x] += ps.recon[i];
    }
    if (!out.all_finite())
        throw std::runtime_error("localization_map: non-finite heat map values");
    (void)h;
    return out;
}

double baseline_score(const ModelBundle& mb, const Tensor& image) {
    if (!mb.is_baseline())
        throw std::invalid_argument("baseline_score: bundle is not a baseline");
    require_descriptor(mb, "baseline_score");
    Tape t;
    Ref x = t.constant(as_batch_of_one(image));
    const Tensor& z = mb.encoder.forward(t, x, false).value();
    double dist2 = 0.0;
    for (int j = 0; j < z.dim(1); ++j) {
        const double d = z.at(0, j) - mb.descriptor.mu[static_cast<std::size_t>(j)];
        dist2 += d * d;
    }
    return dist2;
}

std::vector<double> score_set(const ModelBundle& global_model, const ModelBundle* local_model,
                              const LabeledImageSet& set, int local_stride) {
    std::vector<double> scores;
    scores.reserve(set.size());
    for (const Tensor& img : set.images) {
        if (global_model.is_baseline()) {
            scores.push_back(baseline_score(global_model, img));
        } else if (local_model != nullptr) {
            scores.push_back(detection_score(global_model, *local_model, img, local_stride).s_total);
        } else {
            scores.push_back(global_score(global_model, img).total);
        }
    }
    return scores;
}

Tensor box_blur(const Tensor& map, int k) {
    if (map.ndim() != 2) throw std::invalid_argument("box_blur: need [H,W]");
    Tape t;
    Ref m = t.constant(map.reshaped({1, 1, map.dim(0), map.dim(1)}));
    const Tensor& b = box_mean(m, k).value();
    return b.reshaped({map.dim(0), map.dim(1)});
}

void export_heatmap(const std::string& base_path, const Tensor& map) {
    save_grayscale_normalized(base_path + ".png", map);
    save_float_map(base_path + ".f32", map);
}

}  // namespace igd
