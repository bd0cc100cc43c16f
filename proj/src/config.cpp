#include "igd/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "igd/json_conv.hpp"
#include "igd/synthetic.hpp"

namespace igd {

// ---------------------------------------------------------------------------
// JSON conversions (shared with checkpoints)
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = nlohmann::json{{"variant", to_string(c.variant)},
                       {"latent_dim", c.latent_dim},
                       {"input_h", c.input_h},
                       {"input_w", c.input_w},
                       {"channels", c.channels},
                       {"base_channels", c.base_channels},
                       {"critic_blocks", c.critic_blocks},
                       {"pretrained_weights", c.pretrained_weights},
                       {"freeze_encoder", c.freeze_encoder},
                       {"encoder_bias", c.encoder_bias}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    c.variant = backbone_variant_from_string(j.value("variant", to_string(c.variant)));
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.input_h = j.value("input_h", c.input_h);
    c.input_w = j.value("input_w", c.input_w);
    c.channels = j.value("channels", c.channels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.critic_blocks = j.value("critic_blocks", c.critic_blocks);
    c.pretrained_weights = j.value("pretrained_weights", c.pretrained_weights);
    c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
    c.encoder_bias = j.value("encoder_bias", c.encoder_bias);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lambda1", c.lambda1},
                       {"lambda2", c.lambda2},
                       {"lambda3", c.lambda3},
                       {"rho", c.rho},
                       {"lr", c.lr},
                       {"weight_decay", c.weight_decay},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"seed", c.seed},
                       {"model_scope", c.model_scope},
                       {"baseline", to_string(c.baseline)},
                       {"variant", to_string(c.variant)},
                       {"patches_per_image", c.patches_per_image},
                       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lambda3 = j.value("lambda3", c.lambda3);
    c.rho = j.value("rho", c.rho);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.model_scope = j.value("model_scope", c.model_scope);
    c.baseline = baseline_from_string(j.value("baseline", to_string(c.baseline)));
    c.variant = train_variant_from_string(j.value("variant", to_string(c.variant)));
    c.patches_per_image = j.value("patches_per_image", c.patches_per_image);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

void to_json(nlohmann::json& j, const MsssimConfig& c) {
    j = nlohmann::json{{"scales", c.scales},   {"window", c.window}, {"weights", c.weights},
                       {"k1", c.k1},           {"k2", c.k2},         {"dynamic_range", c.dynamic_range},
                       {"rho", c.rho},         {"pow_floor", c.pow_floor},
                       {"var_eps", c.var_eps}};
}

void from_json(const nlohmann::json& j, MsssimConfig& c) {
    c.scales = j.value("scales", c.scales);
    c.window = j.value("window", c.window);
    c.weights = j.value("weights", c.weights);
    c.k1 = j.value("k1", c.k1);
    c.k2 = j.value("k2", c.k2);
    c.dynamic_range = j.value("dynamic_range", c.dynamic_range);
    c.rho = j.value("rho", c.rho);
    c.pow_floor = j.value("pow_floor", c.pow_floor);
    c.var_eps = j.value("var_eps", c.var_eps);
}

void to_json(nlohmann::json& j, const GaussianDescriptor& d) {
    j = nlohmann::json{{"z_dim", d.z_dim()}, {"mu", d.mu}, {"sigma", d.sigma},
                       {"n_samples", d.n_samples}};
}

void from_json(const nlohmann::json& j, GaussianDescriptor& d) {
    d.mu = j.value("mu", std::vector<double>{});
    d.sigma = j.value("sigma", 0.0);
    d.n_samples = j.value("n_samples", static_cast<std::int64_t>(0));
    if (j.contains("z_dim") && j["z_dim"].get<int>() != d.z_dim())
        throw std::invalid_argument("GaussianDescriptor: z_dim does not match mu length");
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
    j = nlohmann::json{{"path", c.path},
                       {"height", c.height},
                       {"width", c.width},
                       {"channels", c.channels},
                       {"normal_class", c.normal_class},
                       {"train_fraction", c.train_fraction},
                       {"contamination_rate", c.contamination_rate},
                       {"seed", c.seed},
                       {"synth_train", c.synth_train},
                       {"synth_test_normal", c.synth_test_normal},
                       {"synth_test_anomalous", c.synth_test_anomalous}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
    c.path = j.value("path", c.path);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.channels = j.value("channels", c.channels);
    c.normal_class = j.value("normal_class", c.normal_class);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.contamination_rate = j.value("contamination_rate", c.contamination_rate);
    c.seed = j.value("seed", c.seed);
    c.synth_train = j.value("synth_train", c.synth_train);
    c.synth_test_normal = j.value("synth_test_normal", c.synth_test_normal);
    c.synth_test_anomalous = j.value("synth_test_anomalous", c.synth_test_anomalous);
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
    j = nlohmann::json{{"local_stride", c.local_stride},
                       {"threshold", c.threshold},
                       {"use_local", c.use_local},
                       {"emit_heatmaps", c.emit_heatmaps},
                       {"smooth_heatmaps", c.smooth_heatmaps},
                       {"heatmap_limit", c.heatmap_limit}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
    c.local_stride = j.value("local_stride", c.local_stride);
    c.threshold = j.value("threshold", c.threshold);
    c.use_local = j.value("use_local", c.use_local);
    c.emit_heatmaps = j.value("emit_heatmaps", c.emit_heatmaps);
    c.smooth_heatmaps = j.value("smooth_heatmaps", c.smooth_heatmaps);
    c.heatmap_limit = j.value("heatmap_limit", c.heatmap_limit);
}

void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
    j = nlohmann::json{{"methods", c.methods},
                       {"fractions", c.fractions},
                       {"contamination_rates", c.contamination_rates},
                       {"seeds", c.seeds},
                       {"classes", c.classes},
                       {"use_local", c.use_local},
                       {"pixel_metrics", c.pixel_metrics}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
    c.methods = j.value("methods", c.methods);
    c.fractions = j.value("fractions", c.fractions);
    c.contamination_rates = j.value("contamination_rates", c.contamination_rates);
    c.seeds = j.value("seeds", c.seeds);
    c.classes = j.value("classes", c.classes);
    c.use_local = j.value("use_local", c.use_local);
    c.pixel_metrics = j.value("pixel_metrics", c.pixel_metrics);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"dataset", c.dataset},
                       {"model", nlohmann::json{{"global", c.model_global}, {"local", c.model_local}}},
                       {"train", nlohmann::json{{"global", c.train_global}, {"local", c.train_local}}},
                       {"eval", c.eval},
                       {"benchmark", c.benchmark},
                       {"output_dir", c.output_dir},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    if (j.contains("dataset")) j["dataset"].get_to(c.dataset);
    if (j.contains("model")) {
        if (j["model"].contains("global")) j["model"]["global"].get_to(c.model_global);
        if (j["model"].contains("local")) j["model"]["local"].get_to(c.model_local);
    }
    if (j.contains("train")) {
        if (j["train"].contains("global")) j["train"]["global"].get_to(c.train_global);
        if (j["train"].contains("local")) j["train"]["local"].get_to(c.train_local);
    }
    if (j.contains("eval")) j["eval"].get_to(c.eval);
    if (j.contains("benchmark")) j["benchmark"].get_to(c.benchmark);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (dataset.path.empty())
        throw std::invalid_argument("config: dataset.path must not be empty");
    if (dataset.height < 1 || dataset.width < 1)
        throw std::invalid_argument("config: dataset resolution must be positive");
    model_global.validate();
    model_local.validate();
    train_global.validate();
    train_local.validate();
    if (eval.threshold < 0.0 || eval.threshold > 1.0)
        throw std::invalid_argument("config: eval.threshold must be in [0,1]");
    for (const std::string& m : benchmark.methods)
        if (m != "igd" && m != "dsvdd" && m != "dsvdd_rec" && m != "mse" && m != "rec" &&
            m != "rec_gac")
            throw std::invalid_argument("config: unknown benchmark method " + m);
}

void ExperimentConfig::resolve() {
    // Scope wiring: the global model sees whole images, the local model sees
    // patches at its own input resolution.
    train_global.model_scope = "global";
    train_local.model_scope = "local";
    model_global.input_h = dataset.height;
    model_global.input_w = dataset.width;
    model_global.channels = dataset.channels;
    model_local.channels = dataset.channels;
    // Master seed fans out to the components.
    dataset.seed = seed;
    train_global.seed = seed + 1;
    train_local.seed = seed + 2;
}

std::string ExperimentConfig::config_hash() const {
    nlohmann::json j = *this;
    j.erase("output_dir");
    j.erase("seed");
    return fnv1a_hex(j.dump());
}

std::string ExperimentConfig::run_dir() const {
    return output_dir + "/" + config_hash() + "/" + std::to_string(seed);
}

ExperimentConfig load_experiment_config(const std::string& path, bool apply_env,
                                        const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    if (apply_env) apply_env_overrides(j);
    for (const std::string& o : overrides) apply_override(j, o);
    ExperimentConfig cfg = j.get<ExperimentConfig>();
    return cfg;
}

void save_experiment_config(const std::string& path, const ExperimentConfig& cfg) {
    nlohmann::json j = cfg;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write config: " + path);
    f << j.dump(2) << "\n";
}

namespace {

nlohmann::json parse_env_value(const std::string& v) {
    try {
        return nlohmann::json::parse(v);
    } catch (const nlohmann::json::parse_error&) {
        return nlohmann::json(v);
    }
}

void walk_env(nlohmann::json& node, const std::string& prefix) {
    if (!node.is_object()) return;
    for (auto& [key, value] : node.items()) {
        std::string name = prefix + "_" + key;
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return std::toupper(c); });
        if (value.is_object()) {
            walk_env(value, prefix + "_" + key);
        } else if (const char* env = std::getenv(name.c_str())) {
            value = parse_env_value(env);
        }
    }
}

}  // namespace

void apply_env_overrides(nlohmann::json& j) {
    walk_env(j, "IGD");
    // Fan-out forms covering both scopes.
    for (const char* section : {"train", "model"}) {
        if (!j.contains(section)) continue;
        for (auto& [scope, sub] : j[section].items()) {
            if (!sub.is_object()) continue;
            for (auto& [key, value] : sub.items()) {
                std::string name = std::string("IGD_") + section + "_" + key;
                std::transform(name.begin(), name.end(), name.begin(),
                               [](unsigned char c) { return std::toupper(c); });
                if (const char* env = std::getenv(name.c_str())) value = parse_env_value(env);
            }
        }
    }
}

void apply_override(nlohmann::json& j, const std::string& dotted_assignment) {
    const std::size_t eq = dotted_assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like section.key=value: " +
                                    dotted_assignment);
    const std::string path = dotted_assignment.substr(0, eq);
    const nlohmann::json value = parse_env_value(dotted_assignment.substr(eq + 1));
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("bad override path: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset materialization
// ---------------------------------------------------------------------------

LabeledImageSet load_dataset(const DatasetConfig& cfg) {
    if (cfg.path == "synthetic") {
        throw std::invalid_argument(
            "load_dataset: the synthetic benchmark is pre-split; use prepare_split");
    }
    if (cfg.path.rfind("mnist:", 0) == 0) {
        const std::string dir = cfg.path.substr(6);
        LabeledImageSet train = load_mnist_idx(dir, "train", cfg.height, cfg.width);
        LabeledImageSet test = load_mnist_idx(dir, "t10k", cfg.height, cfg.width);
        std::vector<int> all(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) all[i] = static_cast<int>(i);
        train.append(test, all);
        train.designated_split.clear();
        train.designated_split.resize(train.size(), 0);
        for (std::size_t i = 0; i < train.size(); ++i)
            train.designated_split[i] = train.ids[i].rfind("train/", 0) == 0 ? 1 : 2;
        return train;
    }
    return load_image_folder(cfg.path, cfg.height, cfg.width, cfg.channels);
}

std::pair<LabeledImageSet, LabeledImageSet> prepare_split(const DatasetConfig& cfg,
                                                          int normal_class, double fraction,
                                                          double contamination,
                                                          std::uint64_t seed) {
    LabeledImageSet train, test;
    if (cfg.path == "synthetic") {
        SyntheticSpec spec;
        spec.height = cfg.height;
        spec.width = cfg.width;
        spec.n_normal_train = cfg.synth_train;
        spec.n_normal_test = cfg.synth_test_normal;
        spec.n_anomalous_test = cfg.synth_test_anomalous;
        spec.seed = cfg.seed;
        SyntheticBenchmark b = make_synthetic_benchmark(spec);
        train = std::move(b.train);
        test = std::move(b.test);
    } else {
        LabeledImageSet all = load_dataset(cfg);
        auto split = make_one_class_split(all, normal_class, seed);
        train = std::move(split.first);
        test = std::move(split.second);
    }
    if (fraction < 1.0) train = subsample_train(train, fraction, seed + 0x5151);
    if (contamination > 0.0) {
        auto moved = contaminate_train(train, test, contamination, seed + 0xC0C0);
        train = std::move(moved.first);
        test = std::move(moved.second);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace igd
