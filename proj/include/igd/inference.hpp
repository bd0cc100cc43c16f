#pragma once

#include <vector>

#include "igd/datasets.hpp"
#include "igd/tensor.hpp"
#include "igd/trainer.hpp"

namespace igd {

// Global anomaly score: reconstruction loss plus classifier loss of the
// whole-image model (the classifier term is active for the rec_gac and igd
// variants; reconstruction follows the bundle's objective).
struct GlobalScore {
    double total = 0.0;
    double recon = 0.0;
    double gac = 0.0;
};
GlobalScore global_score(const ModelBundle& global_model, const Tensor& image);

// Local anomaly score: max over the patch-center grid of the patch-level
// reconstruction + classifier losses under the local model.
struct LocalScore {
    double total = 0.0;
    double recon = 0.0;  // components of the argmax patch
    double gac = 0.0;
    int center_y = -1;
    int center_x = -1;
};
LocalScore local_score(const ModelBundle& local_model, const Tensor& image, int stride);

struct ScoreBreakdown {
    double s_global = 0.0;
    double s_local = 0.0;
    double s_total = 0.0;
    double recon_term_g = 0.0;
    double gac_term_g = 0.0;
    double recon_term_l = 0.0;
    double gac_term_l = 0.0;
    int argmax_cy = -1;
    int argmax_cx = -1;
};
// s_total = s_global + s_local; higher means more anomalous.
ScoreBreakdown detection_score(const ModelBundle& global_model, const ModelBundle& local_model,
                               const Tensor& image, int local_stride);

// Per-pixel anomaly map: the global per-pixel reconstruction error plus the
// patch reconstruction loss of the stride-1 patch centered at each pixel.
Tensor localization_map(const ModelBundle& global_model, const ModelBundle& local_model,
                        const Tensor& image);

// Hypersphere baseline score: squared latent distance to the fixed center.
double baseline_score(const ModelBundle& baseline, const Tensor& image);

// Scores a whole set: baselines use baseline_score, everything else uses
// global_score plus (optionally) local_score at the given stride.
std::vector<double> score_set(const ModelBundle& global_model, const ModelBundle* local_model,
                              const LabeledImageSet& set, int local_stride);

// Optional heatmap post-process (disabled by default in the pipeline).
Tensor box_blur(const Tensor& map, int k);

// Writes `<base>.png` (8-bit, min-max normalized) and `<base>.f32` (raw
// float container) for a heat map.
void export_heatmap(const std::string& base_path, const Tensor& map);

}  // namespace igd
