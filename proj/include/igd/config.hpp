#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "igd/datasets.hpp"
#include "igd/models.hpp"
#include "igd/trainer.hpp"

namespace igd {

struct DatasetConfig {
    // A class-folder tree, "synthetic" for the procedural benchmark, or
    // "mnist:<dir>" for an IDX directory.
    std::string path = "synthetic";
    int height = 32;
    int width = 32;
    int channels = 1;
    int normal_class = 0;
    double train_fraction = 1.0;
    double contamination_rate = 0.0;
    std::uint64_t seed = 1;
    // Procedural benchmark sizes (path == "synthetic").
    int synth_train = 160;
    int synth_test_normal = 40;
    int synth_test_anomalous = 40;
};

struct EvalConfig {
    int local_stride = 0;  // 0 -> half the local patch size
    double threshold = 0.5;
    bool use_local = true;
    bool emit_heatmaps = false;
    bool smooth_heatmaps = false;
    int heatmap_limit = 16;
};

struct BenchmarkConfig {
    std::vector<std::string> methods = {"igd"};
    std::vector<double> fractions = {1.0};
    std::vector<double> contamination_rates;
    std::vector<std::uint64_t> seeds = {1};
    std::vector<int> classes;  // empty -> just dataset.normal_class
    bool use_local = false;
    bool pixel_metrics = false;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    BackboneConfig model_global;
    BackboneConfig model_local;
    TrainConfig train_global;
    TrainConfig train_local;
    EvalConfig eval;
    BenchmarkConfig benchmark;
    std::string output_dir = "out";
    std::uint64_t seed = 1;

    void validate() const;
    // Derives component seeds from the master seed and aligns model/train
    // sections (scopes, resolutions, rho copies).
    void resolve();
    // Stable hash of everything except output_dir and the master seed.
    std::string config_hash() const;

    std::string run_dir() const;  // output_dir/<hash>/<seed>
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);
void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);
void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// File + environment loading. Precedence (highest last applied): defaults,
// file, IGD_* environment variables, explicit overrides.
ExperimentConfig load_experiment_config(const std::string& path, bool apply_env = true,
                                        const std::vector<std::string>& overrides = {});
void save_experiment_config(const std::string& path, const ExperimentConfig& cfg);

// Applies IGD_<PATH>_<KEY> variables (path components joined by '_',
// uppercased; e.g. IGD_TRAIN_GLOBAL_EPOCHS, IGD_DATASET_PATH). Values are
// parsed as JSON when possible, else taken as strings. IGD_TRAIN_<KEY> and
// IGD_MODEL_<KEY> fan out to both scopes.
void apply_env_overrides(nlohmann::json& j);

// "a.b.c=value" assignment into the config tree.
void apply_override(nlohmann::json& j, const std::string& dotted_assignment);

// 64-bit FNV-1a, 16 hex chars.
std::string fnv1a_hex(const std::string& data);

// Dataset materialization per DatasetConfig.
LabeledImageSet load_dataset(const DatasetConfig& cfg);

// Full split pipeline: one-class split (or the synthetic set's native
// split), then subsampling, then contamination, all seeded.
std::pair<LabeledImageSet, LabeledImageSet> prepare_split(const DatasetConfig& cfg,
                                                          int normal_class, double fraction,
                                                          double contamination,
                                                          std::uint64_t seed);

}  // namespace igd
