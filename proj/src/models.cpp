#include "igd/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace igd {

// ---------------------------------------------------------------------------
// ParamStore / Adam
// ---------------------------------------------------------------------------

ParamStore::Entry& ParamStore::create(const std::string& name, Tensor init) {
    if (entries_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    Entry e;
    e.grad = Tensor::zeros(init.shape());
    e.m = Tensor::zeros(init.shape());
    e.v = Tensor::zeros(init.shape());
    e.value = std::move(init);
    return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, e] : entries_) e.grad.zero();
}

std::size_t ParamStore::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

double ParamStore::param_l2_norm() const {
    double s = 0.0;
    for (const auto& [name, e] : entries_)
        for (double v : e.value.vec()) s += v * v;
    return std::sqrt(s);
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.step_count += 1;
    const double t = static_cast<double>(store.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, e] : store.entries()) {
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i] + cfg.weight_decay * e.value[i];
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

Ref param_ref(Tape& t, ParamStore::Entry& e, bool trainable) {
    return trainable ? t.leaf(e.value, &e.grad) : t.constant(e.value);
}

// ---------------------------------------------------------------------------
// BackboneConfig
// ---------------------------------------------------------------------------

std::string to_string(BackboneVariant v) {
    return v == BackboneVariant::desk_cnn ? "desk_cnn" : "resnet18_like";
}

BackboneVariant backbone_variant_from_string(const std::string& s) {
    if (s == "desk_cnn") return BackboneVariant::desk_cnn;
    if (s == "resnet18_like") return BackboneVariant::resnet18_like;
    throw std::invalid_argument("unknown backbone variant: " + s);
}

void BackboneConfig::validate() const {
    if (latent_dim < 2) throw std::invalid_argument("BackboneConfig: latent_dim must be >= 2");
    if (channels < 1) throw std::invalid_argument("BackboneConfig: channels must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("BackboneConfig: base_channels must be >= 1");
    if (critic_blocks < 1) throw std::invalid_argument("BackboneConfig: critic_blocks must be >= 1");
    const int div = variant == BackboneVariant::desk_cnn ? 16 : 32;
    if (input_h < div || input_w < div || input_h % div != 0 || input_w % div != 0)
        throw std::invalid_argument("BackboneConfig: input resolution must be a multiple of " +
                                    std::to_string(div) + " for " + to_string(variant));
    if ((input_h >> critic_blocks) < 1 || (input_w >> critic_blocks) < 1)
        throw std::invalid_argument("BackboneConfig: too many critic blocks for the resolution");
}

namespace {

Tensor conv_init(Rng& rng, int oc, int ic, int kh, int kw) {
    Tensor w({oc, ic, kh, kw});
    const double std = std::sqrt(2.0 / static_cast<double>(ic * kh * kw));
    for (auto& v : w.vec()) v = rng.normal(0.0, std);
    return w;
}

Tensor deconv_init(Rng& rng, int ic, int oc, int kh, int kw) {
    Tensor w({ic, oc, kh, kw});
    const double std = std::sqrt(2.0 / static_cast<double>(ic * kh * kw));
    for (auto& v : w.vec()) v = rng.normal(0.0, std);
    return w;
}

Tensor linear_init(Rng& rng, int in, int out) {
    Tensor w({in, out});
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& v : w.vec()) v = rng.normal(0.0, std);
    return w;
}

constexpr double kLeakySlope = 0.2;

Ref maybe_bias(Tape& t, ParamStore& store, const std::string& name, bool trainable, bool enabled) {
    if (!enabled) return Ref{};
    return param_ref(t, store.entry(name), trainable);
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

Encoder::Encoder(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    ParamStore& s = *store_;
    const int C = cfg.channels, F = cfg.base_channels, Z = cfg.latent_dim;
    if (cfg.variant == BackboneVariant::desk_cnn) {
        const int chans[5] = {C, F, 2 * F, 4 * F, 8 * F};
        for (int i = 0; i < 4; ++i) {
            const std::string base = "conv" + std::to_string(i + 1);
            s.create(base + ".w", conv_init(rng, chans[i + 1], chans[i], 3, 3));
            if (cfg.encoder_bias) s.create(base + ".b", Tensor::zeros({chans[i + 1]}));
        }
        const int feat = 8 * F * (cfg.input_h / 16) * (cfg.input_w / 16);
        s.create("fc.w", linear_init(rng, feat, Z));
        if (cfg.encoder_bias) s.create("fc.b", Tensor::zeros({Z}));
    } else {
        s.create("stem.w", conv_init(rng, 64, C, 7, 7));
        if (cfg.encoder_bias) s.create("stem.b", Tensor::zeros({64}));
        int in_ch = 64;
        for (int stage = 1; stage <= 4; ++stage) {
            const int out_ch = 64 << (stage - 1);
            for (int block = 1; block <= 2; ++block) {
                const std::string base = "s" + std::to_string(stage) + "b" + std::to_string(block);
                const int bin = block == 1 ? in_ch : out_ch;
                s.create(base + ".c1.w", conv_init(rng, out_ch, bin, 3, 3));
                s.create(base + ".c2.w", conv_init(rng, out_ch, out_ch, 3, 3));
                if (cfg.encoder_bias) {
                    s.create(base + ".c1.b", Tensor::zeros({out_ch}));
                    s.create(base + ".c2.b", Tensor::zeros({out_ch}));
                }
                if (block == 1 && bin != out_ch)
                    s.create(base + ".proj.w", conv_init(rng, out_ch, bin, 1, 1));
            }
            in_ch = out_ch;
        }
        s.create("fc.w", linear_init(rng, 512, Z));
        if (cfg.encoder_bias) s.create("fc.b", Tensor::zeros({Z}));
    }
}

Ref Encoder::forward(Tape& t, Ref x, bool trainable) const {
    if (!store_) throw std::logic_error("Encoder: not initialized");
    const bool train = trainable && !cfg_.freeze_encoder;
    ParamStore& s = *store_;
    const int B = x.value().dim(0);
    if (cfg_.variant == BackboneVariant::desk_cnn) {
        Ref h = x;
        for (int i = 0; i < 4; ++i) {
            const std::string base = "conv" + std::to_string(i + 1);
            Ref w = param_ref(t, s.entry(base + ".w"), train);
            Ref b = maybe_bias(t, s, base + ".b", train, cfg_.encoder_bias);
            h = leaky_relu(conv2d(h, w, b, 2, 1), kLeakySlope);
        }
        const Tensor& hv = h.value();
        h = reshape(h, {B, hv.dim(1) * hv.dim(2) * hv.dim(3)});
        Ref w = param_ref(t, s.entry("fc.w"), train);
        Ref b = maybe_bias(t, s, "fc.b", train, cfg_.encoder_bias);
        return linear(h, w, b);
    }
    // resnet18_like
    Ref h = x;
    {
        Ref w = param_ref(t, s.entry("stem.w"), train);
        Ref b = maybe_bias(t, s, "stem.b", train, cfg_.encoder_bias);
        h = leaky_relu(conv2d(h, w, b, 2, 3), kLeakySlope);
        h = max_pool(h, 3, 2, 1);
    }
    int in_ch = 64;
    for (int stage = 1; stage <= 4; ++stage) {
        const int out_ch = 64 << (stage - 1);
        for (int block = 1; block <= 2; ++block) {
            const std::string base = "s" + std::to_string(stage) + "b" + std::to_string(block);
            const int bin = block == 1 ? in_ch : out_ch;
            const int stride = (block == 1 && stage > 1) ? 2 : 1;
            Ref w1 = param_ref(t, s.entry(base + ".c1.w"), train);
            Ref b1 = maybe_bias(t, s, base + ".c1.b", train, cfg_.encoder_bias);
            Ref w2 = param_ref(t, s.entry(base + ".c2.w"), train);
            Ref b2 = maybe_bias(t, s, base + ".c2.b", train, cfg_.encoder_bias);
            Ref y = conv2d(leaky_relu(conv2d(h, w1, b1, stride, 1), kLeakySlope), w2, b2, 1, 1);
            Ref skip = h;
            if (block == 1 && bin != out_ch) {
                Ref wp = param_ref(t, s.entry(base + ".proj.w"), train);
                skip = conv2d(h, wp, Ref{}, stride, 0);
            }
            h = leaky_relu(add(y, skip), kLeakySlope);
        }
        in_ch = out_ch;
    }
    h = global_avg_pool(h);
    Ref w = param_ref(t, s.entry("fc.w"), train);
    Ref b = maybe_bias(t, s, "fc.b", train, cfg_.encoder_bias);
    return linear(h, w, b);
}

Tensor Encoder::encode(const Tensor& images) const {
    const int N = images.dim(0);
    Tensor out({N, cfg_.latent_dim});
    const int chunk = 32;
    for (int start = 0; start < N; start += chunk) {
        const int n = std::min(chunk, N - start);
        Tensor batch({n, images.dim(1), images.dim(2), images.dim(3)});
        const std::size_t per = images.size() / static_cast<std::size_t>(N);
        std::memcpy(batch.data(), images.data() + static_cast<std::size_t>(start) * per,
                    sizeof(double) * per * static_cast<std::size_t>(n));
        Tape t;
        const Tensor& z = forward(t, t.constant(std::move(batch)), false).value();
        std::memcpy(out.data() + static_cast<std::size_t>(start) * cfg_.latent_dim, z.data(),
                    sizeof(double) * z.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

Decoder::Decoder(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    ParamStore& s = *store_;
    const int C = cfg.channels, F = cfg.base_channels, Z = cfg.latent_dim;
    if (cfg.variant == BackboneVariant::desk_cnn) {
        const int feat = 8 * F * (cfg.input_h / 16) * (cfg.input_w / 16);
        s.create("fc.w", linear_init(rng, Z, feat));
        s.create("fc.b", Tensor::zeros({feat}));
        const int chans[5] = {8 * F, 4 * F, 2 * F, F, C};
        for (int i = 0; i < 4; ++i) {
            const std::string base = "deconv" + std::to_string(i + 1);
            s.create(base + ".w", deconv_init(rng, chans[i], chans[i + 1], 3, 3));
            s.create(base + ".b", Tensor::zeros({chans[i + 1]}));
        }
    } else {
        const int feat = 512 * (cfg.input_h / 32) * (cfg.input_w / 32);
        s.create("fc.w", linear_init(rng, Z, feat));
        s.create("fc.b", Tensor::zeros({feat}));
        const int chans[6] = {512, 256, 128, 64, 32, C};
        for (int i = 0; i < 5; ++i) {
            const std::string base = "deconv" + std::to_string(i + 1);
            s.create(base + ".w", deconv_init(rng, chans[i], chans[i + 1], 3, 3));
            s.create(base + ".b", Tensor::zeros({chans[i + 1]}));
        }
    }
}

Ref Decoder::forward(Tape& t, Ref z, bool trainable) const {
    if (!store_) throw std::logic_error("Decoder: not initialized");
    ParamStore& s = *store_;
    const Tensor& zv = z.value();
    if (zv.ndim() != 2 || zv.dim(1) != cfg_.latent_dim)
        throw std::invalid_argument("Decoder: latent dimension mismatch (got " + zv.shape_str() +
                                    ", expected Z=" + std::to_string(cfg_.latent_dim) + ")");
    const int B = zv.dim(0);
    const bool desk = cfg_.variant == BackboneVariant::desk_cnn;
    const int div = desk ? 16 : 32;
    const int top_c = desk ? 8 * cfg_.base_channels : 512;
    const int n_deconv = desk ? 4 : 5;
    Ref h = linear(z, param_ref(t, s.entry("fc.w"), trainable),
                   param_ref(t, s.entry("fc.b"), trainable));
    h = leaky_relu(h, kLeakySlope);
    h = reshape(h, {B, top_c, cfg_.input_h / div, cfg_.input_w / div});
    for (int i = 0; i < n_deconv; ++i) {
        const std::string base = "deconv" + std::to_string(i + 1);
        Ref w = param_ref(t, s.entry(base + ".w"), trainable);
        Ref b = param_ref(t, s.entry(base + ".b"), trainable);
        h = conv2d_transpose(h, w, b, 2, 1, 1);
        h = (i + 1 == n_deconv) ? sigmoid(h) : leaky_relu(h, kLeakySlope);
    }
    return h;
}

Tensor Decoder::decode(const Tensor& latents) const {
    const int N = latents.dim(0);
    Tensor out({N, cfg_.channels, cfg_.input_h, cfg_.input_w});
    const std::size_t per_img = out.size() / static_cast<std::size_t>(N);
    const int chunk = 32;
    for (int start = 0; start < N; start += chunk) {
        const int n = std::min(chunk, N - start);
        Tensor batch({n, cfg_.latent_dim});
        std::memcpy(batch.data(), latents.data() + static_cast<std::size_t>(start) * cfg_.latent_dim,
                    sizeof(double) * static_cast<std::size_t>(n) * cfg_.latent_dim);
        Tape t;
        const Tensor& y = forward(t, t.constant(std::move(batch)), false).value();
        std::memcpy(out.data() + static_cast<std::size_t>(start) * per_img, y.data(),
                    sizeof(double) * y.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

Critic::Critic(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    ParamStore& s = *store_;
    const int F = cfg.base_channels;
    int in_ch = cfg.channels;
    for (int i = 0; i < cfg.critic_blocks; ++i) {
        const int out_ch = F << i;
        const std::string base = "conv" + std::to_string(i + 1);
        s.create(base + ".w", conv_init(rng, out_ch, in_ch, 3, 3));
        s.create(base + ".b", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    s.create("fc.w", linear_init(rng, in_ch, 1));
    s.create("fc.b", Tensor::zeros({1}));
}

Ref Critic::forward(Tape& t, Ref x, bool trainable) const {
    if (!store_) throw std::logic_error("Critic: not initialized");
    ParamStore& s = *store_;
    const int B = x.value().dim(0);
    Ref h = x;
    for (int i = 0; i < cfg_.critic_blocks; ++i) {
        const std::string base = "conv" + std::to_string(i + 1);
        Ref w = param_ref(t, s.entry(base + ".w"), trainable);
        Ref b = param_ref(t, s.entry(base + ".b"), trainable);
        h = leaky_relu(conv2d(h, w, b, 2, 1), kLeakySlope);
    }
    h = global_avg_pool(h);
    h = linear(h, param_ref(t, s.entry("fc.w"), trainable), param_ref(t, s.entry("fc.b"), trainable));
    return reshape(sigmoid(h), {B});
}

std::vector<double> Critic::evaluate(const Tensor& images) const {
    Tape t;
    const Tensor& y = forward(t, t.constant(images), false).value();
    return y.vec();
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

Encoder build_encoder(const BackboneConfig& cfg, Rng& rng) {
    Encoder enc(cfg, rng);
    if (!cfg.pretrained_weights.empty()) {
        WeightArchive archive = load_weight_archive(cfg.pretrained_weights);
        load_params_from_archive(enc.params(), archive, "");
    }
    return enc;
}

Decoder build_decoder(const BackboneConfig& cfg, Rng& rng) { return Decoder(cfg, rng); }

Critic build_critic(const BackboneConfig& cfg, Rng& rng) { return Critic(cfg, rng); }

// ---------------------------------------------------------------------------
// Weight archive
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'I', 'G', 'D', 'W'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

void save_weight_archive(const std::string& path, const std::string& variant, int latent_dim,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                         const std::string& extra_json) {
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["variant"] = variant;
    header["latent_dim"] = latent_dim;
    header["extra"] = nlohmann::json::parse(extra_json);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = t->shape();
        params.push_back(p);
    }
    header["params"] = params;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kMagic, 4);
    const std::uint32_t ver = kFormatVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf;
    for (const auto& [name, t] : tensors) {
        buf.resize(t->size());
        for (std::size_t i = 0; i < t->size(); ++i) buf[i] = static_cast<float>((*t)[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(sizeof(float) * buf.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

WeightArchive load_weight_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open weight archive: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a weight archive: " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (ver != kFormatVersion)
        throw std::runtime_error("unsupported archive version in " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("truncated archive header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    WeightArchive a;
    a.format_version = static_cast<int>(ver);
    a.variant = header.value("variant", "");
    a.latent_dim = header.value("latent_dim", 0);
    a.extra_json = header.contains("extra") ? header["extra"].dump() : "{}";
    for (const auto& p : header["params"]) {
        const std::string name = p["name"];
        std::vector<int> shape = p["shape"].get<std::vector<int>>();
        Tensor t(shape);
        std::vector<float> buf(t.size());
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(sizeof(float) * buf.size()));
        if (!f) throw std::runtime_error("truncated tensor data in " + path + " at " + name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(buf[i]);
        a.tensors.emplace_back(name, std::move(t));
    }
    return a;
}

std::size_t load_params_from_archive(ParamStore& store, const WeightArchive& archive,
                                     const std::string& prefix) {
    std::size_t matched = 0;
    for (const auto& [name, t] : archive.tensors) {
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string local = name.substr(prefix.size());
        if (!store.has(local)) continue;
        ParamStore::Entry& e = store.entry(local);
        if (!e.value.same_shape(t))
            throw std::invalid_argument("incompatible pretrained-weight shape for " + name +
                                        ": archive " + t.shape_str() + " vs model " +
                                        e.value.shape_str());
        e.value = t;
        ++matched;
    }
    if (matched == 0)
        throw std::invalid_argument("weight archive shares no parameter names with the model");
    return matched;
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const ParamStore& store,
                                                                 const std::string& prefix) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& [name, e] : store.entries()) out.emplace_back(prefix + name, &e.value);
    return out;
}

}  // namespace igd
