#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "igd/datasets.hpp"
#include "igd/gac.hpp"
#include "igd/interpolation.hpp"
#include "igd/models.hpp"
#include "igd/msssim.hpp"

namespace igd {

// Objective variants matching the ablation axes: plain MSE autoencoder,
// MAE+MS-SSIM autoencoder, reconstruction + Gaussian classifier, and the
// full model with the adversarial interpolation regularizer.
enum class TrainVariant { mse, rec, rec_gac, igd };
enum class BaselineKind { none, dsvdd, dsvdd_rec };

std::string to_string(TrainVariant v);
std::string to_string(BaselineKind b);
TrainVariant train_variant_from_string(const std::string& s);
BaselineKind baseline_from_string(const std::string& s);

struct TrainConfig {
    double lambda1 = 1.0;   // critic loss weight (0 disables the critic step)
    double lambda2 = 1.0;   // reconstruction constraint weight
    double lambda3 = 0.1;   // interpolation regularizer weight
    double rho = 0.15;      // MAE share inside the reconstruction loss
    double lr = 1e-4;
    double weight_decay = 1e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int batch_size = 64;
    int epochs = 256;
    std::uint64_t seed = 1;
    std::string model_scope = "global";  // "global" (whole image) or "local" (patches)
    BaselineKind baseline = BaselineKind::none;
    TrainVariant variant = TrainVariant::igd;
    int patches_per_image = 4;  // local-scope training sampler
    int checkpoint_every = 10;
    std::string checkpoint_dir;  // empty disables checkpoint files

    void validate() const;
    // Scope-appropriate MS-SSIM settings carrying this config's rho.
    MsssimConfig msssim_config() const;
};

struct EpochRecord {
    double total = 0.0;
    double l_h = 0.0;
    double l_d = 0.0;
    double l_fg = 0.0;
};

struct TrainState {
    int epoch = 0;
    GaussianDescriptor descriptor;
    std::vector<EpochRecord> loss_history;
    std::string rng_state;
    // Parameter displacement ||theta_e - theta_{e-1}|| per epoch over all
    // three networks, used by the convergence checks.
    std::vector<double> param_displacement;
    // Full-training-set mean l_h at the end of each epoch, with the
    // descriptor re-estimated for the epoch's resulting parameters
    // (deterministic, minibatch-noise free).
    std::vector<double> epoch_lh;
    // Net displacement ||theta_b - theta_a|| over the first and last
    // decile spans of the run (the Cauchy-style convergence quantity);
    // zero for runs shorter than two deciles.
    double net_displacement_head = 0.0;
    double net_displacement_tail = 0.0;
};

// A trained (or initialized) model: networks, their descriptor, and the
// configs that produced them.
struct ModelBundle {
    BackboneConfig backbone;
    TrainConfig train_cfg;
    MsssimConfig msssim;
    Encoder encoder;
    Decoder decoder;
    Critic critic;
    GaussianDescriptor descriptor;

    bool is_baseline() const { return train_cfg.baseline != BaselineKind::none; }
};

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

struct GeneratorLossParts {
    double total = 0.0;
    double l_h = 0.0;
    double recon = 0.0;
    double interp_reg = 0.0;
    double l_fg = 0.0;  // recon + interp_reg
};

// Builds the generator objective on the tape:
//   mse:      mean mse(x, xhat)
//   rec:      mean recon(x, xhat)
//   rec_gac:  mean l_h + lambda2 * mean recon
//   igd:      mean l_h + lambda2 * (mean recon + lambda3 * mean critic(xhat_alpha)^2)
// The critic participates with frozen parameters; the descriptor enters as
// constants only. `interp` may be empty for variants that do not use it.
Ref generator_loss_op(Tape& t, const ModelBundle& mb, Ref x, const GaussianDescriptor& d,
                      const InterpolationBatch& interp, bool trainable,
                      GeneratorLossParts* parts);

// Convenience evaluation of the generator objective on a plain batch.
GeneratorLossParts total_generator_loss(const ModelBundle& mb, const Tensor& batch,
                                        const GaussianDescriptor& d,
                                        const InterpolationBatch& interp);

// EM training: per epoch, an E-step re-estimates the descriptor over the
// full training input with gradients off, then the M-step walks seeded
// minibatches taking one critic step (when enabled) and one generator step
// each. A final E-step aligns the returned descriptor with the final
// weights. Throws TrainingDiverged on non-finite losses.
std::pair<ModelBundle, TrainState> run_em(const LabeledImageSet& train,
                                          const BackboneConfig& backbone,
                                          const TrainConfig& cfg);

// Fixed-center hypersphere baselines. The encoder is built without bias
// terms; the center is the latent mean of the initial pass and is never
// updated by gradients. dsvdd_rec adds lambda2 * recon through a decoder.
std::pair<ModelBundle, TrainState> train_dsvdd_baseline(const LabeledImageSet& train,
                                                        const BackboneConfig& backbone,
                                                        const TrainConfig& cfg);

// Checkpoint files: the weight archive plus descriptor, config echo, epoch
// counter, config hash and loss history in the archive's extra block.
void save_checkpoint(const std::string& path, const ModelBundle& mb, const TrainState& state,
                     const std::string& config_hash);
ModelBundle load_checkpoint(const std::string& path, TrainState* state = nullptr,
                            std::string* config_hash = nullptr);

// CSV rows `epoch,total,l_h,l_d,l_fg`.
void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& history);

// Latent matrix [N,Z] of every image in the set (gradients off).
Tensor encode_set(const Encoder& enc, const LabeledImageSet& set);

}  // namespace igd
