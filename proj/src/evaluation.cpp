#include "igd/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "igd/inference.hpp"
#include "igd/json_conv.hpp"
#include "igd/trainer.hpp"

namespace fs = std::filesystem;

namespace igd {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: scores/labels length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1 ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: need both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie blocks; the rank sum of the positive class
    // yields the Mann-Whitney U.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy_at_threshold(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold) {
    if (scores.empty()) throw std::invalid_argument("accuracy_at_threshold: empty input");
    if (scores.size() != labels.size())
        throw std::invalid_argument("accuracy_at_threshold: scores/labels length mismatch");
    const double lo = *std::min_element(scores.begin(), scores.end());
    const double hi = *std::max_element(scores.begin(), scores.end());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double norm = hi > lo ? (scores[i] - lo) / (hi - lo) : 0.5;
        const int pred = norm >= threshold ? 1 : 0;
        correct += pred == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double pixel_auc(const std::vector<Tensor>& heatmaps, const std::vector<Tensor>& masks) {
    if (heatmaps.size() != masks.size())
        throw std::invalid_argument("pixel_auc: heatmaps/masks length mismatch");
    double sum = 0.0;
    std::size_t used = 0, skipped = 0;
    for (std::size_t i = 0; i < heatmaps.size(); ++i) {
        require_same_shape(heatmaps[i], masks[i], "pixel_auc");
        std::vector<double> scores(heatmaps[i].vec());
        std::vector<int> labels(scores.size());
        std::size_t pos = 0;
        for (std::size_t p = 0; p < scores.size(); ++p) {
            labels[p] = masks[i][p] > 0.5 ? 1 : 0;
            pos += static_cast<std::size_t>(labels[p]);
        }
        if (pos == 0 || pos == scores.size()) {
            ++skipped;
            continue;
        }
        sum += roc_auc(scores, labels);
        ++used;
    }
    if (skipped > 0)
        std::cerr << "[evaluation] pixel_auc: excluded " << skipped
                  << " image(s) with single-class masks\n";
    if (used == 0) throw std::invalid_argument("pixel_auc: no image with a two-class mask");
    return sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Benchmark orchestration
// ---------------------------------------------------------------------------

namespace {

TrainConfig method_train_config(const std::string& method, const TrainConfig& base) {
    TrainConfig cfg = base;
    cfg.baseline = BaselineKind::none;
    if (method == "igd") {
        cfg.variant = TrainVariant::igd;
    } else if (method == "mse") {
        cfg.variant = TrainVariant::mse;
    } else if (method == "rec") {
        cfg.variant = TrainVariant::rec;
    } else if (method == "rec_gac") {
        cfg.variant = TrainVariant::rec_gac;
    } else if (method == "dsvdd") {
        cfg.baseline = BaselineKind::dsvdd;
    } else if (method == "dsvdd_rec") {
        cfg.baseline = BaselineKind::dsvdd_rec;
    } else {
        throw std::invalid_argument("unknown benchmark method: " + method);
    }
    return cfg;
}

std::string cell_file_name(const BenchmarkCell& c) {
    std::ostringstream os;
    os << "cell_" << c.method << "_" << c.axis << "_" << std::setprecision(4) << c.value << "_cls"
       << c.normal_class << "_seed" << c.seed << ".json";
    return os.str();
}

bool load_cached_cell(const std::string& path, const std::string& config_hash,
                      BenchmarkCell& cell) {
    std::ifstream f(path);
    if (!f) return false;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error&) {
        return false;
    }
    if (j.value("config_hash", "") != config_hash) return false;
    cell.auc = j.value("auc", 0.0);
    cell.accuracy = j.value("accuracy", 0.0);
    cell.pixel_auc_value = j.value("pixel_auc", -1.0);
    cell.wall_seconds = j.value("wall_seconds", 0.0);
    cell.from_cache = true;
    return true;
}

void save_cell(const std::string& path, const std::string& config_hash,
               const BenchmarkCell& cell) {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["method"] = cell.method;
    j["axis"] = cell.axis;
    j["value"] = cell.value;
    j["seed"] = cell.seed;
    j["normal_class"] = cell.normal_class;
    j["auc"] = cell.auc;
    j["accuracy"] = cell.accuracy;
    j["pixel_auc"] = cell.pixel_auc_value;
    j["wall_seconds"] = cell.wall_seconds;
    std::ofstream f(path, std::ios::trunc);
    f << j.dump(2) << "\n";
}

}  // namespace

double BenchmarkReport::mean_auc(const std::string& method, const std::string& axis,
                                 double value) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const BenchmarkCell& c : cells)
        if (c.method == method && c.axis == axis && std::abs(c.value - value) < 1e-12) {
            sum += c.auc;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("BenchmarkReport: no cells for " + method);
    return sum / static_cast<double>(n);
}

BenchmarkReport run_benchmark(const ExperimentConfig& cfg) {
    cfg.validate();
    BenchmarkReport report;
    report.dataset_id = cfg.dataset.path;
    report.config_hash = cfg.config_hash();

    const std::string cells_dir = cfg.run_dir() + "/reports/cells";
    fs::create_directories(cells_dir);

    std::vector<int> classes = cfg.benchmark.classes;
    if (classes.empty()) classes = {cfg.dataset.normal_class};

    struct Axis {
        std::string name;
        double value;
    };
    std::vector<Axis> grid;
    for (double f : cfg.benchmark.fractions) grid.push_back({"fraction", f});
    for (double r : cfg.benchmark.contamination_rates) grid.push_back({"contamination", r});
    if (grid.empty()) grid.push_back({"fraction", 1.0});

    for (int cls : classes) {
        for (const Axis& axis : grid) {
            for (const std::string& method : cfg.benchmark.methods) {
                for (std::uint64_t seed : cfg.benchmark.seeds) {
                    BenchmarkCell cell;
                    cell.method = method;
                    cell.axis = axis.name;
                    cell.value = axis.value;
                    cell.seed = seed;
                    cell.normal_class = cls;
                    const std::string cache_path = cells_dir + "/" + cell_file_name(cell);
                    if (load_cached_cell(cache_path, report.config_hash, cell)) {
                        report.cells.push_back(cell);
                        continue;
                    }

                    const auto t0 = std::chrono::steady_clock::now();
                    const double fraction = axis.name == "fraction" ? axis.value : 1.0;
                    const double contamination =
                        axis.name == "contamination" ? axis.value : 0.0;
                    auto [train, test] =
                        prepare_split(cfg.dataset, cls, fraction, contamination, seed);
                    write_manifest_csv(cache_path + ".manifest.csv", train, test);

                    TrainConfig tc = method_train_config(method, cfg.train_global);
                    tc.seed = seed + 1;
                    ModelBundle global_model = [&] {
                        if (tc.baseline != BaselineKind::none)
                            return train_dsvdd_baseline(train, cfg.model_global, tc).first;
                        return run_em(train, cfg.model_global, tc).first;
                    }();

                    ModelBundle local_model;
                    const bool with_local = cfg.benchmark.use_local &&
                                            tc.baseline == BaselineKind::none;
                    if (with_local) {
                        TrainConfig lc = method_train_config(method, cfg.train_local);
                        lc.seed = seed + 2;
                        local_model = run_em(train, cfg.model_local, lc).first;
                    }

                    const int stride = cfg.eval.local_stride > 0
                                           ? cfg.eval.local_stride
                                           : std::max(1, cfg.model_local.input_h / 2);
                    std::vector<double> scores =
                        score_set(global_model, with_local ? &local_model : nullptr, test, stride);
                    cell.auc = roc_auc(scores, test.labels);
                    cell.accuracy = accuracy_at_threshold(scores, test.labels, cfg.eval.threshold);

                    if (cfg.benchmark.pixel_metrics && with_local && test.has_masks()) {
                        std::vector<Tensor> maps, masks;
                        for (std::size_t i = 0; i < test.size(); ++i) {
                            if (test.labels[i] != 1) continue;
                            maps.push_back(
                                localization_map(global_model, local_model, test.images[i]));
                            masks.push_back(test.masks[i]);
                        }
                        if (!maps.empty()) cell.pixel_auc_value = pixel_auc(maps, masks);
                    }
                    cell.wall_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    save_cell(cache_path, report.config_hash, cell);
                    report.cells.push_back(cell);
                }
            }
        }
    }
    return report;
}

void write_benchmark_csv(const std::string& path, const BenchmarkReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write benchmark csv: " + path);
    f << "method,axis,value,normal_class,seed,auc,accuracy,pixel_auc,wall_seconds\n";
    f << std::setprecision(17);
    for (const BenchmarkCell& c : report.cells)
        f << c.method << "," << c.axis << "," << c.value << "," << c.normal_class << "," << c.seed
          << "," << c.auc << "," << c.accuracy << "," << c.pixel_auc_value << ","
          << c.wall_seconds << "\n";
}

void write_benchmark_summary(const std::string& path, const BenchmarkReport& report) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write benchmark summary: " + path);
    f << "dataset: " << report.dataset_id << "\n";
    f << "config_hash: " << report.config_hash << "\n\n";
    // Group means over seeds/classes.
    std::vector<std::tuple<std::string, std::string, double>> groups;
    for (const BenchmarkCell& c : report.cells) {
        const auto key = std::make_tuple(c.method, c.axis, c.value);
        if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
    }
    f << std::fixed << std::setprecision(4);
    for (const auto& [method, axis, value] : groups) {
        double sum = 0.0, asum = 0.0;
        int n = 0;
        for (const BenchmarkCell& c : report.cells)
            if (c.method == method && c.axis == axis && c.value == value) {
                sum += c.auc;
                asum += c.accuracy;
                ++n;
            }
        f << method << " " << axis << "=" << value << ": mean AUC " << sum / n << ", mean acc "
          << asum / n << " (" << n << " run" << (n > 1 ? "s" : "") << ")\n";
    }
}

}  // namespace igd
