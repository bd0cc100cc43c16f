#include "igd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "igd/image_io.hpp"

namespace fs = std::filesystem;

namespace igd {

void LabeledImageSet::validate() const {
    if (labels.size() != images.size())
        throw std::invalid_argument("LabeledImageSet: labels/images length mismatch");
    if (ids.size() != images.size())
        throw std::invalid_argument("LabeledImageSet: ids/images length mismatch");
    if (!masks.empty() && masks.size() != images.size())
        throw std::invalid_argument("LabeledImageSet: masks do not align with images");
    if (!true_labels.empty() && true_labels.size() != images.size())
        throw std::invalid_argument("LabeledImageSet: true_labels do not align with images");
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (double v : images[i].vec())
            if (v < 0.0 || v > 1.0)
                throw std::invalid_argument("LabeledImageSet: pixel outside [0,1] in " + ids[i]);
        if (!masks.empty() && labels[i] == 0) {
            for (double v : masks[i].vec())
                if (v != 0.0)
                    throw std::invalid_argument(
                        "LabeledImageSet: nonzero mask on normal image " + ids[i]);
        }
    }
}

LabeledImageSet LabeledImageSet::subset(const std::vector<int>& indices) const {
    LabeledImageSet out;
    out.images.reserve(indices.size());
    for (int i : indices) {
        out.images.push_back(images[static_cast<std::size_t>(i)]);
        out.labels.push_back(labels[static_cast<std::size_t>(i)]);
        out.ids.push_back(ids[static_cast<std::size_t>(i)]);
        if (!masks.empty()) out.masks.push_back(masks[static_cast<std::size_t>(i)]);
        if (!true_labels.empty())
            out.true_labels.push_back(true_labels[static_cast<std::size_t>(i)]);
        if (!designated_split.empty())
            out.designated_split.push_back(designated_split[static_cast<std::size_t>(i)]);
    }
    return out;
}

void LabeledImageSet::append(const LabeledImageSet& other, const std::vector<int>& indices) {
    for (int i : indices) {
        images.push_back(other.images[static_cast<std::size_t>(i)]);
        labels.push_back(other.labels[static_cast<std::size_t>(i)]);
        ids.push_back(other.ids[static_cast<std::size_t>(i)]);
        if (!masks.empty() || !other.masks.empty()) {
            if (masks.size() < images.size() - 1) masks.resize(images.size() - 1, Tensor());
            masks.push_back(other.masks.empty() ? Tensor()
                                                : other.masks[static_cast<std::size_t>(i)]);
        }
        if (!true_labels.empty() || !other.true_labels.empty()) {
            if (true_labels.size() < images.size() - 1)
                true_labels.resize(images.size() - 1, 0);
            true_labels.push_back(other.true_labels.empty()
                                      ? other.labels[static_cast<std::size_t>(i)]
                                      : other.true_labels[static_cast<std::size_t>(i)]);
        }
    }
}

void SplitSpec::validate() const {
    if (train_fraction <= 0.0 || train_fraction > 1.0)
        throw std::invalid_argument("SplitSpec: train_fraction must be in (0,1]");
    if (contamination_rate < 0.0 || contamination_rate >= 1.0)
        throw std::invalid_argument("SplitSpec: contamination_rate must be in [0,1)");
}

namespace {

bool is_image_file(const fs::path& p) {
    static const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".bmp",
                                               ".tif", ".tiff", ".pgm", ".ppm"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return exts.count(e) > 0;
}

std::vector<fs::path> sorted_subdirs(const fs::path& root) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

// Loads one `<tree>/<class>/<files>` layout into `out`, assigning labels by
// the caller-provided class-name -> id map (extended on first sight).
void load_class_tree(const fs::path& tree, const fs::path& mask_tree, int height, int width,
                     int channels, int split_tag, std::vector<std::string>& class_names,
                     LabeledImageSet& out) {
    for (const fs::path& cls_dir : sorted_subdirs(tree)) {
        const std::string cls = cls_dir.filename().string();
        auto it = std::find(class_names.begin(), class_names.end(), cls);
        int label;
        if (it == class_names.end()) {
            class_names.push_back(cls);
            label = static_cast<int>(class_names.size()) - 1;
        } else {
            label = static_cast<int>(it - class_names.begin());
        }
        const fs::path mask_dir = mask_tree / cls;
        const bool have_masks = !mask_tree.empty() && fs::is_directory(mask_dir);
        for (const fs::path& f : sorted_files(cls_dir)) {
            out.images.push_back(load_image_file(f.string(), height, width, channels));
            out.labels.push_back(label);
            out.ids.push_back(cls + "/" + f.filename().string());
            out.designated_split.push_back(split_tag);
            if (have_masks) {
                const fs::path mf = mask_dir / f.filename();
                if (!fs::exists(mf))
                    throw std::runtime_error("mask/image name mismatch: no mask for " +
                                             f.string() + " (expected " + mf.string() + ")");
                out.masks.push_back(load_mask_file(mf.string(), height, width));
            } else if (!out.masks.empty()) {
                out.masks.push_back(Tensor({height, width}));
            }
        }
        if (have_masks && out.masks.size() < out.images.size()) {
            // Earlier classes had no mask folder; backfill zeros.
            std::vector<Tensor> filled(out.images.size() - out.masks.size(),
                                       Tensor({height, width}));
            out.masks.insert(out.masks.begin(), filled.begin(), filled.end());
        }
    }
}

}  // namespace

LabeledImageSet load_image_folder(const std::string& path, int height, int width, int channels) {
    const fs::path root(path);
    if (!fs::is_directory(root))
        throw std::runtime_error("dataset directory does not exist: " + path);
    const fs::path mask_root = root.parent_path() / (root.filename().string() + "_masks");
    const bool official = fs::is_directory(root / "train") && fs::is_directory(root / "test");

    LabeledImageSet out;
    std::vector<std::string> class_names;
    if (official) {
        load_class_tree(root / "train", mask_root / "train", height, width, channels, 1,
                        class_names, out);
        load_class_tree(root / "test", mask_root / "test", height, width, channels, 2,
                        class_names, out);
    } else {
        load_class_tree(root, fs::is_directory(mask_root) ? mask_root : fs::path(), height,
                        width, channels, 0, class_names, out);
    }
    out.true_labels = out.labels;
    return out;
}

std::pair<LabeledImageSet, LabeledImageSet> make_one_class_split(const LabeledImageSet& data,
                                                                 int normal_class,
                                                                 std::uint64_t seed) {
    std::vector<int> normal_idx, other_idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        (data.labels[i] == normal_class ? normal_idx : other_idx).push_back(static_cast<int>(i));
    if (normal_idx.empty())
        throw std::invalid_argument("make_one_class_split: class " +
                                    std::to_string(normal_class) + " has no images");

    const bool official = !data.designated_split.empty() &&
                          std::any_of(data.designated_split.begin(), data.designated_split.end(),
                                      [](int s) { return s != 0; });
    std::vector<int> train_idx, test_normal_idx;
    if (official) {
        // Official partitions: train on the designated-train normals, test on
        // the designated-test partition only (other-class train images are
        // unused by the one-class protocol).
        for (int i : normal_idx)
            if (data.designated_split[static_cast<std::size_t>(i)] == 1)
                train_idx.push_back(i);
            else if (data.designated_split[static_cast<std::size_t>(i)] == 2)
                test_normal_idx.push_back(i);
        std::vector<int> other_test;
        for (int i : other_idx)
            if (data.designated_split[static_cast<std::size_t>(i)] == 2) other_test.push_back(i);
        other_idx = std::move(other_test);
    } else {
        std::vector<int> shuffled = normal_idx;
        Rng rng(seed);
        rng.shuffle(shuffled);
        const std::size_t n_train =
            std::max<std::size_t>(1, static_cast<std::size_t>(shuffled.size() * 8 / 10));
        train_idx.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n_train));
        test_normal_idx.assign(shuffled.begin() + static_cast<long>(n_train), shuffled.end());
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(test_normal_idx.begin(), test_normal_idx.end());
    }

    LabeledImageSet train = data.subset(train_idx);
    for (auto& l : train.labels) l = 0;
    train.true_labels.assign(train.size(), 0);

    std::vector<int> test_idx = test_normal_idx;
    test_idx.insert(test_idx.end(), other_idx.begin(), other_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    LabeledImageSet test = data.subset(test_idx);
    for (std::size_t i = 0; i < test.size(); ++i)
        test.labels[i] = test.labels[i] == normal_class ? 0 : 1;
    test.true_labels = test.labels;

    if (other_idx.empty())
        std::cerr << "[datasets] warning: single-class dataset, test set has no anomalies\n";
    return {std::move(train), std::move(test)};
}

LabeledImageSet subsample_train(const LabeledImageSet& train, double fraction,
                                std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("subsample_train: fraction must be in (0,1]");
    const int n = static_cast<int>(train.size());
    const int k = static_cast<int>(std::floor(fraction * n));
    if (k == n) return train;
    Rng rng(seed);
    return train.subset(rng.sample_without_replacement(n, k));
}

std::pair<LabeledImageSet, LabeledImageSet> contaminate_train(const LabeledImageSet& train,
                                                              const LabeledImageSet& test,
                                                              double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("contaminate_train: rate must be in [0,1)");
    if (rate == 0.0) return {train, test};
    std::vector<int> anomalous_idx;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test.labels[i] == 1) anomalous_idx.push_back(static_cast<int>(i));
    if (anomalous_idx.empty())
        throw std::invalid_argument("contaminate_train: test set has no anomalous images");
    const int a = static_cast<int>(anomalous_idx.size());
    const int k = static_cast<int>(std::floor(rate * a));

    Rng rng(seed);
    std::vector<int> picked_pos = rng.sample_without_replacement(a, k);
    std::vector<int> moved;
    std::set<int> moved_set;
    for (int p : picked_pos) {
        moved.push_back(anomalous_idx[static_cast<std::size_t>(p)]);
        moved_set.insert(anomalous_idx[static_cast<std::size_t>(p)]);
    }

    LabeledImageSet new_train = train;
    if (new_train.true_labels.empty()) new_train.true_labels = new_train.labels;
    for (int i : moved) {
        const Tensor& img = test.images[static_cast<std::size_t>(i)];
        new_train.images.push_back(img);
        new_train.labels.push_back(0);  // label discarded: nominally normal
        new_train.true_labels.push_back(1);
        new_train.ids.push_back(test.ids[static_cast<std::size_t>(i)]);
        // The moved image is nominally normal in train', so its mask is
        // dropped; only the audit field remembers the truth.
        if (!new_train.masks.empty())
            new_train.masks.push_back(Tensor({img.dim(1), img.dim(2)}));
    }
    std::vector<int> keep;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (!moved_set.count(static_cast<int>(i))) keep.push_back(static_cast<int>(i));
    LabeledImageSet new_test = test.subset(keep);
    return {std::move(new_train), std::move(new_test)};
}

namespace {

// Reflect index into [0, n) (mirror without repeating the border pixel,
// falling back to clamping for very small n).
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

Tensor extract_patch_at(const Tensor& image, int patch_h, int patch_w, int cy, int cx) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const int top = cy - (patch_h - 1) / 2;
    const int left = cx - (patch_w - 1) / 2;
    Tensor out({c, patch_h, patch_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < patch_h; ++y) {
            const int sy = reflect_index(top + y, h);
            for (int x = 0; x < patch_w; ++x) {
                const int sx = reflect_index(left + x, w);
                out[(static_cast<std::size_t>(ch) * patch_h + y) * patch_w + x] =
                    image[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
            }
        }
    return out;
}

std::vector<Patch> extract_patches(const Tensor& image, int patch_h, int patch_w, int stride_h,
                                   int stride_w) {
    if (image.ndim() != 3) throw std::invalid_argument("extract_patches: need [C,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    if (patch_h > h || patch_w > w)
        throw std::invalid_argument("extract_patches: patch larger than image");
    if (stride_h < 1 || stride_w < 1)
        throw std::invalid_argument("extract_patches: stride must be >= 1");
    std::vector<Patch> out;
    for (int cy = 0; cy < h; cy += stride_h)
        for (int cx = 0; cx < w; cx += stride_w) {
            Patch p;
            p.data = extract_patch_at(image, patch_h, patch_w, cy, cx);
            p.center_y = cy;
            p.center_x = cx;
            out.push_back(std::move(p));
        }
    return out;
}

void write_manifest_csv(const std::string& path, const LabeledImageSet& train,
                        const LabeledImageSet& test) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << "id,label,split,contaminated\n";
    auto put = [&f](const LabeledImageSet& s, const char* split) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const int truth = s.true_labels.empty() ? s.labels[i] : s.true_labels[i];
            f << s.ids[i] << "," << s.labels[i] << "," << split << ","
              << (truth != s.labels[i] ? 1 : 0) << "\n";
        }
    };
    put(train, "train");
    put(test, "test");
}

Tensor stack_images(const LabeledImageSet& set, const std::vector<int>& indices) {
    std::vector<int> idx = indices;
    if (idx.empty()) {
        idx.resize(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) idx[i] = static_cast<int>(i);
    }
    if (idx.empty()) throw std::invalid_argument("stack_images: empty set");
    const Tensor& first = set.images[static_cast<std::size_t>(idx[0])];
    Tensor out({static_cast<int>(idx.size()), first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t per = first.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& img = set.images[static_cast<std::size_t>(idx[i])];
        if (img.size() != per) throw std::invalid_argument("stack_images: inhomogeneous shapes");
        std::memcpy(out.data() + i * per, img.data(), sizeof(double) * per);
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX loader
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw std::runtime_error("truncated IDX file: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

LabeledImageSet load_mnist_idx(const std::string& dir, const std::string& stem, int height,
                               int width) {
    const std::string img_path = dir + "/" + stem + "-images-idx3-ubyte";
    const std::string lab_path = dir + "/" + stem + "-labels-idx1-ubyte";
    std::ifstream fi(img_path, std::ios::binary), fl(lab_path, std::ios::binary);
    if (!fi) throw std::runtime_error("cannot open IDX images: " + img_path);
    if (!fl) throw std::runtime_error("cannot open IDX labels: " + lab_path);
    if (read_be32(fi, img_path) != 2051) throw std::runtime_error("bad IDX image magic: " + img_path);
    if (read_be32(fl, lab_path) != 2049) throw std::runtime_error("bad IDX label magic: " + lab_path);
    const std::uint32_t n = read_be32(fi, img_path);
    const std::uint32_t rows = read_be32(fi, img_path);
    const std::uint32_t cols = read_be32(fi, img_path);
    const std::uint32_t nl = read_be32(fl, lab_path);
    if (n != nl) throw std::runtime_error("IDX image/label count mismatch in " + dir);

    std::vector<unsigned char> raw(rows * cols);
    LabeledImageSet out;
    out.images.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        fi.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        unsigned char lab = 0;
        fl.read(reinterpret_cast<char*>(&lab), 1);
        if (!fi || !fl) throw std::runtime_error("truncated IDX data in " + dir);
        Tensor src({1, static_cast<int>(rows), static_cast<int>(cols)});
        for (std::size_t p = 0; p < raw.size(); ++p) src[p] = raw[p] / 255.0;
        if (static_cast<int>(rows) != height || static_cast<int>(cols) != width) {
            // Bilinear resize via the shared path (align-corners-free).
            Tensor dst({1, height, width});
            const double sy = static_cast<double>(rows) / height;
            const double sx = static_cast<double>(cols) / width;
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double fy = (y + 0.5) * sy - 0.5;
                    const double fx = (x + 0.5) * sx - 0.5;
                    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0,
                                              static_cast<int>(rows) - 1);
                    const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0,
                                              static_cast<int>(cols) - 1);
                    const int y1 = std::min(y0 + 1, static_cast<int>(rows) - 1);
                    const int x1 = std::min(x0 + 1, static_cast<int>(cols) - 1);
                    const double wy = std::clamp(fy - y0, 0.0, 1.0);
                    const double wx = std::clamp(fx - x0, 0.0, 1.0);
                    const double v =
                        (1 - wy) * ((1 - wx) * src[static_cast<std::size_t>(y0) * cols + x0] +
                                    wx * src[static_cast<std::size_t>(y0) * cols + x1]) +
                        wy * ((1 - wx) * src[static_cast<std::size_t>(y1) * cols + x0] +
                              wx * src[static_cast<std::size_t>(y1) * cols + x1]);
                    dst[static_cast<std::size_t>(y) * width + x] = v;
                }
            out.images.push_back(std::move(dst));
        } else {
            out.images.push_back(std::move(src));
        }
        out.labels.push_back(static_cast<int>(lab));
        out.ids.push_back(stem + "/" + std::to_string(i));
        out.designated_split.push_back(stem == "train" ? 1 : 2);
    }
    out.true_labels = out.labels;
    return out;
}

}  // namespace igd
