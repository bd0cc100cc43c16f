#include "igd/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "igd/json_conv.hpp"

namespace igd {

std::string to_string(TrainVariant v) {
    switch (v) {
        case TrainVariant::mse: return "mse";
        case TrainVariant::rec: return "rec";
        case TrainVariant::rec_gac: return "rec_gac";
        case TrainVariant::igd: return "igd";
    }
    return "igd";
}

std::string to_string(BaselineKind b) {
    switch (b) {
        case BaselineKind::none: return "none";
        case BaselineKind::dsvdd: return "dsvdd";
        case BaselineKind::dsvdd_rec: return "dsvdd_rec";
    }
    return "none";
}

TrainVariant train_variant_from_string(const std::string& s) {
    if (s == "mse") return TrainVariant::mse;
    if (s == "rec") return TrainVariant::rec;
    if (s == "rec_gac") return TrainVariant::rec_gac;
    if (s == "igd") return TrainVariant::igd;
    throw std::invalid_argument("unknown train variant: " + s);
}

BaselineKind baseline_from_string(const std::string& s) {
    if (s == "none") return BaselineKind::none;
    if (s == "dsvdd") return BaselineKind::dsvdd;
    if (s == "dsvdd_rec") return BaselineKind::dsvdd_rec;
    throw std::invalid_argument("unknown baseline: " + s);
}

void TrainConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("TrainConfig: lambda weights must be >= 0");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("TrainConfig: rho must be in [0,1]");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (model_scope != "global" && model_scope != "local")
        throw std::invalid_argument("TrainConfig: model_scope must be global or local");
    if (patches_per_image < 1)
        throw std::invalid_argument("TrainConfig: patches_per_image must be >= 1");
    if (checkpoint_every < 1)
        throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
}

MsssimConfig TrainConfig::msssim_config() const {
    MsssimConfig m =
        model_scope == "local" ? MsssimConfig::local_model() : MsssimConfig::global_model();
    m.rho = rho;
    return m;
}

namespace {

Tensor take_batch(const Tensor& all, const std::vector<int>& order, int start, int count) {
    std::vector<int> shape = all.shape();
    shape[0] = count;
    Tensor out(shape);
    const std::size_t per = all.size() / static_cast<std::size_t>(all.dim(0));
    for (int i = 0; i < count; ++i)
        std::memcpy(out.data() + static_cast<std::size_t>(i) * per,
                    all.data() + static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)]) * per,
                    sizeof(double) * per);
    return out;
}

Tensor blend_batch(const Tensor& x, const Tensor& xhat, const std::vector<double>& zeta) {
    Tensor out = x;
    const int n = x.dim(0);
    const std::size_t per = x.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
        const double z = zeta[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < per; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * per + j;
            out[k] = z * x[k] + (1.0 - z) * xhat[k];
        }
    }
    return out;
}

std::vector<Tensor> snapshot_params(const ModelBundle& mb) {
    std::vector<Tensor> snap;
    for (const ParamStore* s : {&mb.encoder.params(), &mb.decoder.params(), &mb.critic.params()})
        for (const auto& [name, e] : s->entries()) snap.push_back(e.value);
    return snap;
}

double displacement_from(const ModelBundle& mb, const std::vector<Tensor>& snap) {
    double acc = 0.0;
    std::size_t k = 0;
    for (const ParamStore* s : {&mb.encoder.params(), &mb.decoder.params(), &mb.critic.params()})
        for (const auto& [name, e] : s->entries()) {
            const Tensor& old = snap[k++];
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                const double d = e.value[i] - old[i];
                acc += d * d;
            }
        }
    return std::sqrt(acc);
}

// Uniformly sampled patch centers over the full pixel grid, one tensor per
// epoch with patches_per_image patches from every image.
Tensor sample_epoch_patches(const LabeledImageSet& train, const BackboneConfig& bb,
                            int patches_per_image, Rng& rng) {
    const int n = static_cast<int>(train.size());
    Tensor out({n * patches_per_image, bb.channels, bb.input_h, bb.input_w});
    const std::size_t per = static_cast<std::size_t>(bb.channels) * bb.input_h * bb.input_w;
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        const Tensor& img = train.images[static_cast<std::size_t>(i)];
        for (int p = 0; p < patches_per_image; ++p) {
            const int cy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.dim(1))));
            const int cx = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.dim(2))));
            Tensor patch = extract_patch_at(img, bb.input_h, bb.input_w, cy, cx);
            std::memcpy(out.data() + k * per, patch.data(), sizeof(double) * per);
            ++k;
        }
    }
    return out;
}

void ensure_finite(const GeneratorLossParts& parts, int epoch, int batch,
                   const ModelBundle& mb) {
    if (std::isfinite(parts.total) && std::isfinite(parts.l_h) && std::isfinite(parts.l_fg))
        return;
    std::ostringstream os;
    os << "training diverged: non-finite loss at epoch " << epoch << " batch " << batch
       << " (total=" << parts.total << ", l_h=" << parts.l_h << ", l_fg=" << parts.l_fg
       << ", recon=" << parts.recon << ", reg=" << parts.interp_reg
       << "); |enc|=" << mb.encoder.params().param_l2_norm()
       << " |dec|=" << mb.decoder.params().param_l2_norm()
       << " sigma=" << mb.descriptor.sigma;
    throw TrainingDiverged(os.str());
}

std::string checkpoint_name(int epoch, bool final_one) {
    if (final_one) return "checkpoint_final.igdc";
    std::ostringstream os;
    os << "checkpoint_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".igdc";
    return os.str();
}

}  // namespace

Ref generator_loss_op(Tape& t, const ModelBundle& mb, Ref x, const GaussianDescriptor& d,
                      const InterpolationBatch& interp, bool trainable,
                      GeneratorLossParts* parts) {
    const TrainConfig& cfg = mb.train_cfg;
    Ref z = mb.encoder.forward(t, x, trainable);
    Ref xhat = mb.decoder.forward(t, z, trainable);

    Ref recon = cfg.variant == TrainVariant::mse ? mean_all(mse_loss_op(x, xhat))
                                                 : mean_all(recon_loss_op(x, xhat, mb.msssim));
    const bool use_gac =
        cfg.variant == TrainVariant::rec_gac || cfg.variant == TrainVariant::igd;
    const bool use_reg =
        cfg.variant == TrainVariant::igd && cfg.lambda3 > 0.0 && !interp.alpha.empty();

    Ref l_h, reg;
    if (use_gac) l_h = mean_all(gac_loss_op(z, d));
    if (use_reg) {
        Ref zmix = interpolate_latents_op(z, interp.pair_index, interp.alpha);
        Ref xalpha = mb.decoder.forward(t, zmix, trainable);
        Ref alpha_pred = mb.critic.forward(t, xalpha, /*trainable=*/false);
        reg = generator_interp_reg_op(alpha_pred, cfg.lambda3);
    }

    Ref total;
    switch (cfg.variant) {
        case TrainVariant::mse:
        case TrainVariant::rec:
            total = recon;
            break;
        case TrainVariant::rec_gac:
            total = add(l_h, scale(recon, cfg.lambda2));
            break;
        case TrainVariant::igd: {
            Ref l_fg = use_reg ? add(recon, reg) : recon;
            total = add(l_h, scale(l_fg, cfg.lambda2));
            break;
        }
    }
    if (parts) {
        parts->recon = recon.value()[0];
        parts->l_h = use_gac ? l_h.value()[0] : 0.0;
        parts->interp_reg = use_reg ? reg.value()[0] : 0.0;
        parts->l_fg = parts->recon + parts->interp_reg;
        parts->total = total.value()[0];
    }
    return total;
}

GeneratorLossParts total_generator_loss(const ModelBundle& mb, const Tensor& batch,
                                        const GaussianDescriptor& d,
                                        const InterpolationBatch& interp) {
    Tape t;
    GeneratorLossParts parts;
    generator_loss_op(t, mb, t.constant(batch), d, interp, /*trainable=*/false, &parts);
    return parts;
}

std::pair<ModelBundle, TrainState> run_em(const LabeledImageSet& train,
                                          const BackboneConfig& backbone,
                                          const TrainConfig& cfg) {
    cfg.validate();
    backbone.validate();
    if (train.size() == 0) throw std::invalid_argument("run_em: empty training set");
    const bool local = cfg.model_scope == "local";
    if (cfg.variant == TrainVariant::igd && !local && train.size() < 2)
        throw std::invalid_argument("run_em: interpolation training needs >= 2 images");

    Rng init_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    ModelBundle mb{backbone,
                   cfg,
                   cfg.msssim_config(),
                   build_encoder(backbone, init_rng),
                   build_decoder(backbone, init_rng),
                   build_critic(backbone, init_rng),
                   GaussianDescriptor{}};
    Rng rng(cfg.seed);
    TrainState st;
    const AdamConfig adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay};
    const bool critic_enabled = cfg.variant == TrainVariant::igd && cfg.lambda1 > 0.0;
    const int min_batch = cfg.variant == TrainVariant::igd ? 2 : 1;

    Tensor whole_images;
    if (!local) whole_images = stack_images(train);

    // Decile boundaries for the net-displacement convergence quantity.
    const int decile = std::max(1, cfg.epochs / 10);
    std::vector<Tensor> snap_tail_begin;
    const std::vector<Tensor> snap_start = snapshot_params(mb);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const Tensor inputs =
            local ? sample_epoch_patches(train, backbone, cfg.patches_per_image, rng)
                  : whole_images;
        // E-step: descriptor from the full epoch input, gradients off.
        mb.descriptor = estimate_descriptor(mb.encoder.encode(inputs));

        const std::vector<Tensor> snap = snapshot_params(mb);
        const int n = inputs.dim(0);
        std::vector<int> order = rng.permutation(n);

        double sum_total = 0, sum_lh = 0, sum_ld = 0, sum_lfg = 0;
        int batches = 0, critic_batches = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - start);
            if (count < min_batch) break;
            Tensor x = take_batch(inputs, order, start, count);
            InterpolationBatch interp;
            if (cfg.variant == TrainVariant::igd && count >= 2)
                interp = sample_interpolation_batch(count, rng);

            if (critic_enabled && !interp.alpha.empty()) {
                // Critic step on Eq-style regression targets; encoder and
                // decoder are detached by evaluating their outputs first.
                Tape t0;
                Ref x0 = t0.constant(x);
                Ref z0 = mb.encoder.forward(t0, x0, false);
                Ref zmix0 = interpolate_latents_op(z0, interp.pair_index, interp.alpha);
                Tensor xalpha_v = mb.decoder.forward(t0, zmix0, false).value();
                Tensor xhat_v = mb.decoder.forward(t0, z0, false).value();
                Tensor xzeta_v = blend_batch(x, xhat_v, interp.zeta);

                Tape t1;
                Ref alpha_pred = mb.critic.forward(t1, t1.constant(std::move(xalpha_v)), true);
                Ref zeta_pred = mb.critic.forward(t1, t1.constant(std::move(xzeta_v)), true);
                Ref ld_raw = critic_loss_op(alpha_pred, interp.alpha, zeta_pred);
                Ref ld = scale(ld_raw, cfg.lambda1);
                const double ld_value = ld_raw.value()[0];
                if (!std::isfinite(ld_value))
                    throw TrainingDiverged("training diverged: non-finite critic loss at epoch " +
                                           std::to_string(epoch));
                mb.critic.params().zero_grad();
                t1.backward(ld);
                adam_step(mb.critic.params(), adam);
                sum_ld += ld_value;
                ++critic_batches;
            }

            Tape t2;
            GeneratorLossParts parts;
            Ref loss = generator_loss_op(t2, mb, t2.constant(std::move(x)), mb.descriptor,
                                         interp, /*trainable=*/true, &parts);
            ensure_finite(parts, epoch, batches, mb);
            mb.encoder.params().zero_grad();
            mb.decoder.params().zero_grad();
            t2.backward(loss);
            if (!backbone.freeze_encoder) adam_step(mb.encoder.params(), adam);
            adam_step(mb.decoder.params(), adam);

            sum_total += parts.total;
            sum_lh += parts.l_h;
            sum_lfg += parts.l_fg;
            ++batches;
        }
        if (batches == 0)
            throw std::invalid_argument("run_em: no trainable batch (input too small)");

        EpochRecord rec;
        rec.total = sum_total / batches;
        rec.l_h = sum_lh / batches;
        rec.l_d = critic_batches > 0 ? sum_ld / critic_batches : 0.0;
        rec.l_fg = sum_lfg / batches;
        st.loss_history.push_back(rec);
        st.param_displacement.push_back(displacement_from(mb, snap));
        {
            // Deterministic end-of-epoch l_h over the full epoch input,
            // with the descriptor re-estimated for the epoch's resulting
            // parameters (the value the next E-step would produce).
            Tensor latents = mb.encoder.encode(inputs);
            GaussianDescriptor fresh = estimate_descriptor(latents);
            Tape t;
            st.epoch_lh.push_back(
                mean_all(gac_loss_op(t.constant(latents), fresh)).value()[0]);
        }
        st.epoch = epoch;
        if (epoch == decile) st.net_displacement_head = displacement_from(mb, snap_start);
        if (epoch == cfg.epochs - decile) snap_tail_begin = snapshot_params(mb);
        if (epoch == cfg.epochs && !snap_tail_begin.empty())
            st.net_displacement_tail = displacement_from(mb, snap_tail_begin);

        if (!cfg.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0) {
            st.descriptor = mb.descriptor;
            st.rng_state = rng.state();
            save_checkpoint(cfg.checkpoint_dir + "/" + checkpoint_name(epoch, false), mb, st, "");
        }
    }

    // Final E-step so the stored descriptor matches the final weights.
    const Tensor final_inputs =
        local ? sample_epoch_patches(train, backbone, cfg.patches_per_image, rng) : whole_images;
    mb.descriptor = estimate_descriptor(mb.encoder.encode(final_inputs));
    st.descriptor = mb.descriptor;
    st.rng_state = rng.state();
    if (!cfg.checkpoint_dir.empty())
        save_checkpoint(cfg.checkpoint_dir + "/" + checkpoint_name(cfg.epochs, true), mb, st, "");
    return {std::move(mb), std::move(st)};
}

std::pair<ModelBundle, TrainState> train_dsvdd_baseline(const LabeledImageSet& train,
                                                        const BackboneConfig& backbone,
                                                        const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.baseline == BaselineKind::none)
        throw std::invalid_argument("train_dsvdd_baseline: cfg.baseline must be dsvdd or dsvdd_rec");
    if (cfg.model_scope != "global")
        throw std::invalid_argument("train_dsvdd_baseline: baselines are global-scope only");
    if (train.size() == 0) throw std::invalid_argument("train_dsvdd_baseline: empty training set");
    const bool with_rec = cfg.baseline == BaselineKind::dsvdd_rec;

    BackboneConfig bb = backbone;
    bb.encoder_bias = false;  // hypersphere baselines drop bias terms
    bb.validate();
    Rng init_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    ModelBundle mb{bb,
                   cfg,
                   cfg.msssim_config(),
                   build_encoder(bb, init_rng),
                   build_decoder(bb, init_rng),
                   build_critic(bb, init_rng),
                   GaussianDescriptor{}};
    Rng rng(cfg.seed);
    TrainState st;
    const AdamConfig adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay};

    const Tensor inputs = stack_images(train);
    // Fixed center: latent mean of the initial pass; never touched again.
    {
        GaussianDescriptor d0 = estimate_descriptor(mb.encoder.encode(inputs));
        mb.descriptor.mu = d0.mu;
        mb.descriptor.sigma = 1.0;
        mb.descriptor.n_samples = d0.n_samples;
    }
    Tensor center({static_cast<int>(mb.descriptor.mu.size())}, mb.descriptor.mu);

    const int n = inputs.dim(0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int> order = rng.permutation(n);
        const std::vector<Tensor> snap = snapshot_params(mb);
        double sum_total = 0, sum_dist = 0, sum_rec = 0;
        int batches = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, n - start);
            Tape t;
            Ref x = t.constant(take_batch(inputs, order, start, count));
            Ref z = mb.encoder.forward(t, x, true);
            Ref dist = mean_all(sum_rows(square(sub_rowvec_const(z, center))));
            Ref total = dist;
            double rec_v = 0.0;
            if (with_rec) {
                Ref xhat = mb.decoder.forward(t, z, true);
                Ref rec = mean_all(recon_loss_op(x, xhat, mb.msssim));
                rec_v = rec.value()[0];
                total = add(dist, scale(rec, cfg.lambda2));
            }
            const double total_v = total.value()[0];
            if (!std::isfinite(total_v))
                throw TrainingDiverged("dsvdd baseline diverged at epoch " + std::to_string(epoch));
            mb.encoder.params().zero_grad();
            mb.decoder.params().zero_grad();
            t.backward(total);
            adam_step(mb.encoder.params(), adam);
            if (with_rec) adam_step(mb.decoder.params(), adam);
            sum_total += total_v;
            sum_dist += dist.value()[0];
            sum_rec += rec_v;
            ++batches;
        }
        EpochRecord rec;
        rec.total = sum_total / batches;
        rec.l_h = sum_dist / batches;
        rec.l_d = 0.0;
        rec.l_fg = sum_rec / batches;
        st.loss_history.push_back(rec);
        st.param_displacement.push_back(displacement_from(mb, snap));
        st.epoch = epoch;
    }
    st.descriptor = mb.descriptor;
    st.rng_state = rng.state();
    return {std::move(mb), std::move(st)};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelBundle& mb, const TrainState& state,
                     const std::string& config_hash) {
    nlohmann::json extra;
    extra["kind"] = "igd_checkpoint";
    extra["epoch"] = state.epoch;
    extra["config_hash"] = config_hash;
    extra["backbone"] = mb.backbone;
    extra["train_config"] = mb.train_cfg;
    extra["msssim"] = mb.msssim;
    extra["descriptor"] = mb.descriptor;
    extra["rng_state"] = state.rng_state;
    nlohmann::json hist = nlohmann::json::array();
    for (const EpochRecord& r : state.loss_history)
        hist.push_back({r.total, r.l_h, r.l_d, r.l_fg});
    extra["loss_history"] = hist;

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& [name, ptr] : named_tensors(mb.encoder.params(), "enc.")) tensors.emplace_back(name, ptr);
    for (auto& [name, ptr] : named_tensors(mb.decoder.params(), "dec.")) tensors.emplace_back(name, ptr);
    for (auto& [name, ptr] : named_tensors(mb.critic.params(), "critic.")) tensors.emplace_back(name, ptr);
    save_weight_archive(path, to_string(mb.backbone.variant), mb.backbone.latent_dim, tensors,
                        extra.dump());
}

ModelBundle load_checkpoint(const std::string& path, TrainState* state,
                            std::string* config_hash) {
    WeightArchive archive = load_weight_archive(path);
    nlohmann::json extra = nlohmann::json::parse(archive.extra_json);
    if (extra.value("kind", "") != "igd_checkpoint")
        throw std::runtime_error("not an igd checkpoint: " + path);

    BackboneConfig bb = extra["backbone"].get<BackboneConfig>();
    TrainConfig tc = extra["train_config"].get<TrainConfig>();
    MsssimConfig ms = extra["msssim"].get<MsssimConfig>();
    GaussianDescriptor desc = extra["descriptor"].get<GaussianDescriptor>();

    Rng dummy(0);
    ModelBundle mb{bb, tc, ms, Encoder(bb, dummy), Decoder(bb, dummy), Critic(bb, dummy), desc};
    const std::size_t ne = load_params_from_archive(mb.encoder.params(), archive, "enc.");
    const std::size_t nd = load_params_from_archive(mb.decoder.params(), archive, "dec.");
    const std::size_t nc = load_params_from_archive(mb.critic.params(), archive, "critic.");
    if (ne != mb.encoder.params().entries().size() || nd != mb.decoder.params().entries().size() ||
        nc != mb.critic.params().entries().size())
        throw std::runtime_error("checkpoint does not cover every model parameter: " + path);

    if (state) {
        state->epoch = extra.value("epoch", 0);
        state->descriptor = desc;
        state->rng_state = extra.value("rng_state", "");
        state->loss_history.clear();
        for (const auto& row : extra["loss_history"])
            state->loss_history.push_back(
                EpochRecord{row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                            row[3].get<double>()});
    }
    if (config_hash) *config_hash = extra.value("config_hash", "");
    return mb;
}

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write loss csv: " + path);
    f << "epoch,total,l_h,l_d,l_fg\n";
    f << std::setprecision(17);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const EpochRecord& r = history[i];
        f << (i + 1) << "," << r.total << "," << r.l_h << "," << r.l_d << "," << r.l_fg << "\n";
    }
}

Tensor encode_set(const Encoder& enc, const LabeledImageSet& set) {
    return enc.encode(stack_images(set));
}

}  // namespace igd
