#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "igd/autodiff.hpp"
#include "igd/rng.hpp"
#include "igd/tensor.hpp"

namespace igd {

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor m;  // Adam first moment
        Tensor v;  // Adam second moment
    };

    Entry& create(const std::string& name, Tensor init);
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    void zero_grad();
    std::size_t param_count() const;
    double param_l2_norm() const;

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::int64_t step_count = 0;

private:
    std::map<std::string, Entry> entries_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
};

// One Adam update over every entry of the store, consuming current grads
// (grads are not cleared here). Weight decay is classic L2-in-gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// Leaf for a parameter: trainable leaves accumulate into entry.grad.
Ref param_ref(Tape& t, ParamStore::Entry& e, bool trainable);

// ---------------------------------------------------------------------------
// Backbones
// ---------------------------------------------------------------------------

enum class BackboneVariant { desk_cnn, resnet18_like };

std::string to_string(BackboneVariant v);
BackboneVariant backbone_variant_from_string(const std::string& s);

struct BackboneConfig {
    BackboneVariant variant = BackboneVariant::desk_cnn;
    int latent_dim = 128;
    int input_h = 32;
    int input_w = 32;
    int channels = 3;
    int base_channels = 16;  // desk_cnn conv width; critic width for both variants
    int critic_blocks = 3;
    std::string pretrained_weights;  // optional encoder weight archive
    bool freeze_encoder = false;
    bool encoder_bias = true;  // disabled by the DSVDD baseline

    void validate() const;  // throws std::invalid_argument
};

class Encoder {
public:
    Encoder() = default;
    Encoder(const BackboneConfig& cfg, Rng& init_rng);

    // x is [B,C,H,W]; returns latents [B,Z]. Parameters join the tape as
    // trainable leaves only when trainable && !cfg.freeze_encoder.
    Ref forward(Tape& t, Ref x, bool trainable) const;
    // No-grad convenience over an [N,C,H,W] batch, evaluated in chunks.
    Tensor encode(const Tensor& images) const;

    const BackboneConfig& config() const { return cfg_; }
    ParamStore& params() const { return *store_; }
    bool initialized() const { return store_ != nullptr; }

private:
    BackboneConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

class Decoder {
public:
    Decoder() = default;
    Decoder(const BackboneConfig& cfg, Rng& init_rng);

    // z is [B,Z]; returns images [B,C,H,W] in (0,1) via a final sigmoid.
    Ref forward(Tape& t, Ref z, bool trainable) const;
    Tensor decode(const Tensor& latents) const;

    const BackboneConfig& config() const { return cfg_; }
    ParamStore& params() const { return *store_; }
    bool initialized() const { return store_ != nullptr; }

private:
    BackboneConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

class Critic {
public:
    Critic() = default;
    Critic(const BackboneConfig& cfg, Rng& init_rng);

    // x is [B,C,H,W]; returns [B] scalars squashed to (0,1) by sigmoid.
    Ref forward(Tape& t, Ref x, bool trainable) const;
    std::vector<double> evaluate(const Tensor& images) const;

    const BackboneConfig& config() const { return cfg_; }
    ParamStore& params() const { return *store_; }
    bool initialized() const { return store_ != nullptr; }

private:
    BackboneConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

// Builders applying cfg.validate() and optional pretrained-weight loading
// for the encoder.
Encoder build_encoder(const BackboneConfig& cfg, Rng& init_rng);
Decoder build_decoder(const BackboneConfig& cfg, Rng& init_rng);
Critic build_critic(const BackboneConfig& cfg, Rng& init_rng);

// ---------------------------------------------------------------------------
// Weight archive: "IGDW" magic, u32 version, u64 JSON header length, JSON
// header (format version, variant, latent_dim, name -> shape table, optional
// extra object), then little-endian float32 tensor data in header order.
// ---------------------------------------------------------------------------

struct WeightArchive {
    int format_version = 1;
    std::string variant;
    int latent_dim = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string extra_json;  // "{}" when absent
};

void save_weight_archive(const std::string& path, const std::string& variant, int latent_dim,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                         const std::string& extra_json = "{}");
WeightArchive load_weight_archive(const std::string& path);

// Copies archive tensors (under the given name prefix) into the store where
// names match; shapes must agree. Returns the number of parameters filled;
// throws std::invalid_argument on a shape conflict or when nothing matches.
std::size_t load_params_from_archive(ParamStore& store, const WeightArchive& archive,
                                     const std::string& prefix);

// Named views over a store, prefix prepended ("enc." etc).
std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ParamStore& store,
                                                                 const std::string& prefix);

}  // namespace igd
