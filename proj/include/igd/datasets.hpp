#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "igd/rng.hpp"
#include "igd/tensor.hpp"

namespace igd {

// A set of images with labels, optional ground-truth masks, and stable ids.
// Read-only after construction; all split operations below return new sets.
struct LabeledImageSet {
    std::vector<Tensor> images;  // each [C,H,W], values in [0,1]
    std::vector<int> labels;     // class ids before a one-class split, {0,1} after
    std::vector<Tensor> masks;   // empty, or one [H,W] binary map per image
    std::vector<std::string> ids;
    // Audit-only ground truth; differs from labels for contaminated images.
    // Never read by any trainer.
    std::vector<int> true_labels;
    // 0 = unassigned, 1 = official train partition, 2 = official test partition.
    std::vector<int> designated_split;

    std::size_t size() const { return images.size(); }
    bool has_masks() const { return !masks.empty(); }
    // Throws std::invalid_argument when an invariant is broken (alignment,
    // pixel range, nonzero mask on a normal image).
    void validate() const;

    LabeledImageSet subset(const std::vector<int>& indices) const;
    void append(const LabeledImageSet& other, const std::vector<int>& indices);
};

struct SplitSpec {
    int normal_class = 0;
    double train_fraction = 1.0;       // benchmark presets: 0.2, 0.6, 1.0
    double contamination_rate = 0.0;   // benchmark presets: 0, 0.01, 0.05, 0.10
    std::uint64_t seed = 1;
    void validate() const;
};

// Ingests `root/<class>/<image files>` (optionally `root/train/<class>/...`
// plus `root/test/<class>/...` for datasets with official partitions) and an
// optional sibling `<root>_masks/<class>/<same names>` tree. Images are
// decoded, bilinearly resized and scaled to [0,1]; ordering is by class
// name, then file name.
LabeledImageSet load_image_folder(const std::string& path, int height, int width,
                                  int channels = 1);

// One-class protocol: train = the designated-train images of normal_class
// relabeled 0; test = held-out normals (0) plus every other class (1).
// Official partitions are honored when present, otherwise normals are split
// 80/20 by a seeded shuffle.
std::pair<LabeledImageSet, LabeledImageSet> make_one_class_split(const LabeledImageSet& data,
                                                                 int normal_class,
                                                                 std::uint64_t seed);

// floor(fraction * N) images sampled uniformly without replacement.
LabeledImageSet subsample_train(const LabeledImageSet& train, double fraction,
                                std::uint64_t seed);

// Moves floor(rate * A) anomalous test images into the training set with
// their labels discarded (train stays nominally normal); the moved images
// keep true_labels == 1 for audit reporting.
std::pair<LabeledImageSet, LabeledImageSet> contaminate_train(const LabeledImageSet& train,
                                                              const LabeledImageSet& test,
                                                              double rate, std::uint64_t seed);

// Sliding-window patches. The center grid is {0, stride, 2*stride, ...} on
// each axis (ceil(H/stride) rows), the patch top-left is
// center - floor((size-1)/2), and out-of-image samples are reflected, so at
// stride 1 every pixel is a valid center.
struct Patch {
    Tensor data;  // [C,h,w]
    int center_y = 0;
    int center_x = 0;
};
std::vector<Patch> extract_patches(const Tensor& image, int patch_h, int patch_w, int stride_h,
                                   int stride_w);
// Single patch centered at (cy, cx) with reflect padding.
Tensor extract_patch_at(const Tensor& image, int patch_h, int patch_w, int cy, int cx);

// `id,label,split,contaminated` rows for both sets.
void write_manifest_csv(const std::string& path, const LabeledImageSet& train,
                        const LabeledImageSet& test);

// Stacks images [i] for i in indices (all of them when empty) into [N,C,H,W].
Tensor stack_images(const LabeledImageSet& set, const std::vector<int>& indices = {});

// MNIST-style IDX pair (images + labels, unsigned byte pixels). `stem` is
// e.g. "train" or "t10k"; files <stem>-images-idx3-ubyte and
// <stem>-labels-idx1-ubyte must exist under dir. Images are resized to
// (height, width) and scaled to [0,1].
LabeledImageSet load_mnist_idx(const std::string& dir, const std::string& stem, int height,
                               int width);

}  // namespace igd
