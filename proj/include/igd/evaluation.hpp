#pragma once

#include <string>
#include <vector>

#include "igd/config.hpp"
#include "igd/datasets.hpp"
#include "igd/tensor.hpp"

namespace igd {

// ROC AUC with exact tie handling (the Mann-Whitney statistic computed from
// average ranks, equal to the trapezoidal integral over all distinct
// thresholds). labels are {0,1}; both classes must be present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Scores are min-max normalized over the set, then an image is predicted
// anomalous iff its normalized score >= threshold. A constant score vector
// normalizes to all 0.5.
double accuracy_at_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold = 0.5);

// Mean per-image pixel-level AUC of heatmap vs binary mask over the given
// (anomalous) images. Images whose masks are entirely positive or entirely
// negative are excluded with a logged count.
double pixel_auc(const std::vector<Tensor>& heatmaps, const std::vector<Tensor>& masks);

// ---------------------------------------------------------------------------
// Benchmark orchestration
// ---------------------------------------------------------------------------

struct BenchmarkCell {
    std::string method;  // igd | dsvdd | dsvdd_rec | mse | rec | rec_gac
    std::string axis;    // "fraction" or "contamination"
    double value = 1.0;
    std::uint64_t seed = 0;
    int normal_class = 0;
    double auc = 0.0;
    double accuracy = 0.0;
    double pixel_auc_value = -1.0;  // -1 when not computed
    double wall_seconds = 0.0;
    bool from_cache = false;
};

struct BenchmarkReport {
    std::string dataset_id;
    std::string config_hash;
    std::vector<BenchmarkCell> cells;

    // Mean AUC over seeds (and classes) for one (method, axis, value) cell
    // group; throws if the group is empty.
    double mean_auc(const std::string& method, const std::string& axis, double value) const;
};

// Runs the one-class protocol over the benchmark grid (fractions and
// contamination rates x methods x seeds x classes). Completed cells are
// cached under <run_dir>/reports/cells and reused on re-runs with the same
// config hash.
BenchmarkReport run_benchmark(const ExperimentConfig& cfg);

void write_benchmark_csv(const std::string& path, const BenchmarkReport& report);
void write_benchmark_summary(const std::string& path, const BenchmarkReport& report);

}  // namespace igd
