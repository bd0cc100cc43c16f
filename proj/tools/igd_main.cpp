// Command-line entry points: train, eval, benchmark, heatmap.
//
// Exit codes: 0 success, 2 config/validation error, 3 artifact-compatibility
// error, 1 runtime failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "igd/config.hpp"
#include "igd/evaluation.hpp"
#include "igd/image_io.hpp"
#include "igd/inference.hpp"
#include "igd/json_conv.hpp"
#include "igd/trainer.hpp"

namespace fs = std::filesystem;
using namespace igd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    bool no_env = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config file (JSON)")
        ->required();
    cmd->add_option("--set", args.overrides,
                    "config override, section.key=value (repeatable; highest precedence)");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.output_dir, "output directory override");
    cmd->add_flag("--no-env", args.no_env, "ignore IGD_* environment overrides");
}

ExperimentConfig load_config_or_throw(const CommonArgs& args) {
    ExperimentConfig cfg =
        load_experiment_config(args.config_path, !args.no_env, args.overrides);
    if (args.seed) cfg.seed = *args.seed;
    if (args.output_dir) cfg.output_dir = *args.output_dir;
    cfg.resolve();
    cfg.validate();
    return cfg;
}

void prepare_run_dir(const ExperimentConfig& cfg) {
    const std::string run = cfg.run_dir();
    for (const char* sub : {"checkpoints", "reports", "heatmaps", "logs"})
        fs::create_directories(run + "/" + sub);
    save_experiment_config(run + "/resolved_config.json", cfg);
}

// The dataset has to be reachable before any training starts; a missing
// path is a config error, not a runtime failure.
void check_dataset_reachable(const DatasetConfig& d) {
    if (d.path == "synthetic") return;
    const std::string fs_path = d.path.rfind("mnist:", 0) == 0 ? d.path.substr(6) : d.path;
    if (!fs::exists(fs_path))
        throw std::invalid_argument("dataset.path: not found: " + fs_path);
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg;
    try {
        cfg = load_config_or_throw(args);
        check_dataset_reachable(cfg.dataset);
    } catch (const std::exception& e) {
        std::cerr << "[config error] " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        prepare_run_dir(cfg);
        const std::string run = cfg.run_dir();
        const std::string hash = cfg.config_hash();
        auto [train, test] = prepare_split(cfg.dataset, cfg.dataset.normal_class,
                                           cfg.dataset.train_fraction,
                                           cfg.dataset.contamination_rate, cfg.dataset.seed);
        write_manifest_csv(run + "/reports/split_manifest.csv", train, test);
        std::cout << "train images: " << train.size() << ", test images: " << test.size()
                  << "\n";

        TrainConfig tg = cfg.train_global;
        fs::create_directories(run + "/checkpoints/global");
        tg.checkpoint_dir = run + "/checkpoints/global";
        auto [global_model, gstate] = [&] {
            if (tg.baseline != BaselineKind::none)
                return train_dsvdd_baseline(train, cfg.model_global, tg);
            return run_em(train, cfg.model_global, tg);
        }();
        write_loss_csv(run + "/logs/loss_global.csv", gstate.loss_history);
        save_checkpoint(run + "/checkpoints/global_final.igdc", global_model, gstate, hash);
        std::cout << "global model trained (" << gstate.loss_history.size() << " epochs)\n";

        if (cfg.eval.use_local && cfg.train_global.baseline == BaselineKind::none) {
            TrainConfig tl = cfg.train_local;
            fs::create_directories(run + "/checkpoints/local");
            tl.checkpoint_dir = run + "/checkpoints/local";
            auto [local_model, lstate] = run_em(train, cfg.model_local, tl);
            write_loss_csv(run + "/logs/loss_local.csv", lstate.loss_history);
            save_checkpoint(run + "/checkpoints/local_final.igdc", local_model, lstate, hash);
            std::cout << "local model trained (" << lstate.loss_history.size() << " epochs)\n";
        }
        std::cout << "artifacts under " << run << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "[train failed] " << e.what() << "\n";
        return kExitRuntime;
    }
}

struct EvalArgs {
    CommonArgs common;
    std::string global_ckpt;
    std::string local_ckpt;
    bool force = false;
    bool emit_heatmaps = false;
};

int cmd_eval(const EvalArgs& args) {
    ExperimentConfig cfg;
    try {
        cfg = load_config_or_throw(args.common);
        check_dataset_reachable(cfg.dataset);
    } catch (const std::exception& e) {
        std::cerr << "[config error] " << e.what() << "\n";
        return kExitConfig;
    }
    const std::string run = cfg.run_dir();
    const std::string global_path =
        args.global_ckpt.empty() ? run + "/checkpoints/global_final.igdc" : args.global_ckpt;
    const std::string local_path =
        args.local_ckpt.empty() ? run + "/checkpoints/local_final.igdc" : args.local_ckpt;

    ModelBundle global_model, local_model;
    bool have_local = false;
    try {
        std::string ghash;
        global_model = load_checkpoint(global_path, nullptr, &ghash);
        if (!args.force && !ghash.empty() && ghash != cfg.config_hash())
            throw std::runtime_error("config hash mismatch for " + global_path + " (checkpoint " +
                                     ghash + " vs config " + cfg.config_hash() +
                                     "); pass --force to override");
        if (cfg.eval.use_local && fs::exists(local_path)) {
            std::string lhash;
            local_model = load_checkpoint(local_path, nullptr, &lhash);
            if (!args.force && !lhash.empty() && lhash != cfg.config_hash())
                throw std::runtime_error("config hash mismatch for " + local_path +
                                         "; pass --force to override");
            have_local = true;
        }
    } catch (const std::exception& e) {
        std::cerr << "[artifact error] " << e.what() << "\n";
        return kExitArtifact;
    }

    try {
        prepare_run_dir(cfg);
        auto [train, test] = prepare_split(cfg.dataset, cfg.dataset.normal_class,
                                           cfg.dataset.train_fraction,
                                           cfg.dataset.contamination_rate, cfg.dataset.seed);
        const int stride = cfg.eval.local_stride > 0 ? cfg.eval.local_stride
                                                     : std::max(1, cfg.model_local.input_h / 2);

        std::ofstream scores_csv(run + "/reports/scores.csv", std::ios::trunc);
        scores_csv << "id,label,s_total,s_global,s_local,recon_g,gac_g,recon_l,gac_l,"
                      "argmax_y,argmax_x\n";
        scores_csv << std::setprecision(17);
        std::vector<double> scores;
        scores.reserve(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            ScoreBreakdown b;
            if (global_model.is_baseline()) {
                b.s_global = b.s_total = baseline_score(global_model, test.images[i]);
            } else if (have_local) {
                b = detection_score(global_model, local_model, test.images[i], stride);
            } else {
                GlobalScore g = global_score(global_model, test.images[i]);
                b.s_global = b.s_total = g.total;
                b.recon_term_g = g.recon;
                b.gac_term_g = g.gac;
            }
            scores.push_back(b.s_total);
            scores_csv << test.ids[i] << "," << test.labels[i] << "," << b.s_total << ","
                       << b.s_global << "," << b.s_local << "," << b.recon_term_g << ","
                       << b.gac_term_g << "," << b.recon_term_l << "," << b.gac_term_l << ","
                       << b.argmax_cy << "," << b.argmax_cx << "\n";
        }

        const double auc = roc_auc(scores, test.labels);
        const double acc = accuracy_at_threshold(scores, test.labels, cfg.eval.threshold);
        double pauc = -1.0;
        const bool emit_maps = args.emit_heatmaps || cfg.eval.emit_heatmaps;
        if (have_local && test.has_masks()) {
            std::vector<Tensor> maps, masks;
            int emitted = 0;
            for (std::size_t i = 0; i < test.size(); ++i) {
                if (test.labels[i] != 1) continue;
                Tensor map = localization_map(global_model, local_model, test.images[i]);
                if (cfg.eval.smooth_heatmaps) map = box_blur(map, 3);
                if (emit_maps && emitted < cfg.eval.heatmap_limit) {
                    std::string stem = test.ids[i];
                    for (char& ch : stem)
                        if (ch == '/') ch = '_';
                    export_heatmap(run + "/heatmaps/" + stem, map);
                    ++emitted;
                }
                maps.push_back(std::move(map));
                masks.push_back(test.masks[i]);
            }
            if (!maps.empty()) pauc = pixel_auc(maps, masks);
        }

        std::ofstream summary(run + "/reports/metrics.txt", std::ios::trunc);
        summary << std::fixed << std::setprecision(6);
        summary << "auc " << auc << "\naccuracy " << acc << "\n";
        if (pauc >= 0.0) summary << "pixel_auc " << pauc << "\n";
        std::cout << std::fixed << std::setprecision(4) << "AUC " << auc << "  accuracy " << acc;
        if (pauc >= 0.0) std::cout << "  pixel AUC " << pauc;
        std::cout << "\nreports under " << run << "/reports\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "[eval failed] " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_benchmark(const CommonArgs& args) {
    ExperimentConfig cfg;
    try {
        cfg = load_config_or_throw(args);
        check_dataset_reachable(cfg.dataset);
    } catch (const std::exception& e) {
        std::cerr << "[config error] " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        prepare_run_dir(cfg);
        BenchmarkReport report = run_benchmark(cfg);
        const std::string run = cfg.run_dir();
        write_benchmark_csv(run + "/reports/benchmark.csv", report);
        write_benchmark_summary(run + "/reports/benchmark_summary.txt", report);
        std::ifstream summary(run + "/reports/benchmark_summary.txt");
        std::cout << summary.rdbuf();
        std::cout << "reports under " << run << "/reports\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "[benchmark failed] " << e.what() << "\n";
        return kExitRuntime;
    }
}

struct HeatmapArgs {
    CommonArgs common;
    std::string global_ckpt;
    std::string local_ckpt;
    std::string image_path;
    int test_index = -1;
    std::string out_base;
    bool force = false;
};

int cmd_heatmap(const HeatmapArgs& args) {
    ExperimentConfig cfg;
    try {
        cfg = load_config_or_throw(args.common);
        if (args.image_path.empty() && args.test_index < 0)
            throw std::invalid_argument("heatmap: give --image or --test-index");
    } catch (const std::exception& e) {
        std::cerr << "[config error] " << e.what() << "\n";
        return kExitConfig;
    }
    const std::string run = cfg.run_dir();
    ModelBundle global_model, local_model;
    try {
        std::string ghash, lhash;
        global_model = load_checkpoint(
            args.global_ckpt.empty() ? run + "/checkpoints/global_final.igdc" : args.global_ckpt,
            nullptr, &ghash);
        local_model = load_checkpoint(
            args.local_ckpt.empty() ? run + "/checkpoints/local_final.igdc" : args.local_ckpt,
            nullptr, &lhash);
        if (!args.force && !ghash.empty() && ghash != cfg.config_hash())
            throw std::runtime_error("config hash mismatch; pass --force to override");
    } catch (const std::exception& e) {
        std::cerr << "[artifact error] " << e.what() << "\n";
        return kExitArtifact;
    }
    try {
        Tensor image;
        std::string stem;
        if (!args.image_path.empty()) {
            image = load_image_file(args.image_path, cfg.dataset.height, cfg.dataset.width,
                                    cfg.dataset.channels);
            stem = fs::path(args.image_path).stem().string();
        } else {
            auto [train, test] = prepare_split(cfg.dataset, cfg.dataset.normal_class,
                                               cfg.dataset.train_fraction,
                                               cfg.dataset.contamination_rate, cfg.dataset.seed);
            if (args.test_index >= static_cast<int>(test.size()))
                throw std::invalid_argument("--test-index out of range");
            image = test.images[static_cast<std::size_t>(args.test_index)];
            stem = "test_" + std::to_string(args.test_index);
        }
        Tensor map = localization_map(global_model, local_model, image);
        if (cfg.eval.smooth_heatmaps) map = box_blur(map, 3);
        const std::string base =
            args.out_base.empty() ? run + "/heatmaps/" + stem : args.out_base;
        fs::create_directories(fs::path(base).parent_path());
        export_heatmap(base, map);
        std::cout << "wrote " << base << ".png and " << base << ".f32\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "[heatmap failed] " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interpolated Gaussian descriptor anomaly detection"};
    app.require_subcommand(1);

    CommonArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train global and local models");
    add_common(train, train_args);

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score a test split with trained checkpoints");
    add_common(eval, eval_args.common);
    eval->add_option("--global", eval_args.global_ckpt, "global checkpoint path");
    eval->add_option("--local", eval_args.local_ckpt, "local checkpoint path");
    eval->add_flag("--force", eval_args.force, "skip the config-hash compatibility check");
    eval->add_flag("--emit-heatmaps", eval_args.emit_heatmaps,
                   "write per-image heatmap files for anomalous test images");

    CommonArgs bench_args;
    CLI::App* bench = app.add_subcommand("benchmark", "robustness sweep over the benchmark grid");
    add_common(bench, bench_args);

    HeatmapArgs heat_args;
    CLI::App* heat = app.add_subcommand("heatmap", "localization heatmap for one image");
    add_common(heat, heat_args.common);
    heat->add_option("--global", heat_args.global_ckpt, "global checkpoint path");
    heat->add_option("--local", heat_args.local_ckpt, "local checkpoint path");
    heat->add_option("--image", heat_args.image_path, "image file to score");
    heat->add_option("--test-index", heat_args.test_index, "index into the config's test split");
    heat->add_option("--out-base", heat_args.out_base, "output base path (.png/.f32 appended)");
    heat->add_flag("--force", heat_args.force, "skip the config-hash compatibility check");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (bench->parsed()) return cmd_benchmark(bench_args);
    if (heat->parsed()) return cmd_heatmap(heat_args);
    return kExitConfig;
}
