#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "doctest.h"

#include "igd/datasets.hpp"
#include "igd/image_io.hpp"
#include "igd/synthetic.hpp"

using namespace igd;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("datasets");

namespace {

// Writes a small class-folder tree of gray PNGs; class c pixel value is
// 40*c + index, so loads can be value-checked.
struct TempDataset {
    fs::path root;
    TempDataset(int classes, int per_class, bool with_masks, const std::string& name) {
        root = fs::temp_directory_path() / name;
        fs::remove_all(root);
        for (int c = 0; c < classes; ++c) {
            const fs::path dir = root / ("class" + std::to_string(c));
            fs::create_directories(dir);
            for (int i = 0; i < per_class; ++i) {
                Tensor img({1, 8, 8}, (40.0 * c + i) / 255.0);
                save_image_01((dir / (std::string(1, char('a' + i)) + ".png")).string(), img);
                if (with_masks && c > 0) {
                    const fs::path mdir =
                        root.parent_path() / (root.filename().string() + "_masks") /
                        ("class" + std::to_string(c));
                    fs::create_directories(mdir);
                    Tensor mask({8, 8});
                    mask[0] = 1.0;
                    save_image_01((mdir / (std::string(1, char('a' + i)) + ".png")).string(),
                                  mask.reshaped({1, 8, 8}));
                }
            }
        }
    }
    ~TempDataset() {
        fs::remove_all(root);
        fs::remove_all(root.parent_path() / (root.filename().string() + "_masks"));
    }
};

}  // namespace

TEST_CASE("empty folder loads as an empty set") {
    const fs::path dir = fs::temp_directory_path() / "igd_empty_ds";
    fs::create_directories(dir);
    LabeledImageSet s = load_image_folder(dir.string(), 8, 8, 1);
    CHECK(s.size() == 0);
    fs::remove_all(dir);
    CHECK_THROWS_AS((void)load_image_folder("/nonexistent/igd/path", 8, 8, 1),
                    std::runtime_error);
}

TEST_CASE("deterministic lexicographic ordering and 8-bit scaling") {
    TempDataset ds(1, 10, false, "igd_order_ds");
    LabeledImageSet s = load_image_folder(ds.root.string(), 8, 8, 1);
    REQUIRE(s.size() == 10);
    for (int i = 0; i < 10; ++i)
        CHECK(s.ids[static_cast<std::size_t>(i)] ==
              "class0/" + std::string(1, char('a' + i)) + ".png");
    // Pixel value 255 decodes to exactly 1.0.
    Tensor white({1, 4, 4}, 1.0);
    const fs::path p = fs::temp_directory_path() / "igd_white.png";
    save_image_01(p.string(), white);
    Tensor loaded = load_image_file(p.string(), 4, 4, 1);
    CHECK(loaded.max() == 1.0);
    fs::remove(p);
}

TEST_CASE("mask alignment and name mismatch errors") {
    TempDataset ds(2, 3, true, "igd_mask_ds");
    LabeledImageSet s = load_image_folder(ds.root.string(), 8, 8, 1);
    REQUIRE(s.size() == 6);
    REQUIRE(s.has_masks());
    s.validate();
    // Break the mask tree: remove one mask file.
    fs::remove(ds.root.parent_path() / "igd_mask_ds_masks" / "class1" / "a.png");
    CHECK_THROWS_WITH_AS((void)load_image_folder(ds.root.string(), 8, 8, 1),
                         doctest::Contains("a.png"), std::runtime_error);
}

TEST_CASE("one-class split follows the protocol") {
    TempDataset ds(4, 10, false, "igd_split_ds");
    LabeledImageSet data = load_image_folder(ds.root.string(), 8, 8, 1);
    auto [train, test] = make_one_class_split(data, 3, 7);
    // 80/20 of the 10 normals.
    CHECK(train.size() == 8);
    for (int l : train.labels) CHECK(l == 0);
    CHECK(test.size() == 2 + 30);
    int anomalies = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.labels[i] == 1) ++anomalies;
        const bool is_cls3 = test.ids[i].rfind("class3/", 0) == 0;
        CHECK(test.labels[i] == (is_cls3 ? 0 : 1));
    }
    CHECK(anomalies == 30);
    // Determinism.
    auto [train2, test2] = make_one_class_split(data, 3, 7);
    CHECK(train2.ids == train.ids);
    CHECK(test2.ids == test.ids);
    // Different seed moves the held-out normals.
    auto [train3, test3] = make_one_class_split(data, 3, 8);
    CHECK(train3.ids != train.ids);
    CHECK_THROWS_AS((void)make_one_class_split(data, 9, 7), std::invalid_argument);
}

TEST_CASE("official train/test partitions are honored") {
    const fs::path root = fs::temp_directory_path() / "igd_official_ds";
    fs::remove_all(root);
    for (const char* part : {"train", "test"})
        for (int c = 0; c < 2; ++c) {
            const fs::path dir = root / part / ("class" + std::to_string(c));
            fs::create_directories(dir);
            for (int i = 0; i < 3; ++i) {
                Tensor img({1, 8, 8}, 0.5);
                save_image_01((dir / (std::to_string(i) + ".png")).string(), img);
            }
        }
    LabeledImageSet data = load_image_folder(root.string(), 8, 8, 1);
    auto [train, test] = make_one_class_split(data, 0, 1);
    CHECK(train.size() == 3);   // only designated-train normals
    CHECK(test.size() == 6);    // designated-test normals + anomalies of both partitions? no:
    // test = designated-test normals (3) + all class1 images in the test tree (3)
    fs::remove_all(root);
}

TEST_CASE("subsampling size, subset property and determinism") {
    SyntheticSpec spec;
    spec.n_normal_train = 50;
    spec.n_normal_test = 4;
    spec.n_anomalous_test = 4;
    SyntheticBenchmark b = make_synthetic_benchmark(spec);
    LabeledImageSet sub = subsample_train(b.train, 1.0, 3);
    CHECK(sub.size() == 50);
    for (double f : {0.2, 0.6}) {
        LabeledImageSet s = subsample_train(b.train, f, 3);
        CHECK(s.size() == static_cast<std::size_t>(50 * f));
        std::set<std::string> orig(b.train.ids.begin(), b.train.ids.end());
        for (const std::string& id : s.ids) CHECK(orig.count(id) == 1);
    }
    LabeledImageSet s1 = subsample_train(b.train, 0.2, 3);
    LabeledImageSet s2 = subsample_train(b.train, 0.2, 4);
    CHECK(s1.size() == s2.size());
    CHECK(s1.ids != s2.ids);
    CHECK(subsample_train(b.train, 0.2, 3).ids == s1.ids);
    CHECK_THROWS_AS((void)subsample_train(b.train, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)subsample_train(b.train, 1.5, 1), std::invalid_argument);
}

TEST_CASE("contamination moves anomalies and conserves the union") {
    SyntheticSpec spec;
    spec.n_normal_train = 30;
    spec.n_normal_test = 10;
    spec.n_anomalous_test = 100;
    SyntheticBenchmark b = make_synthetic_benchmark(spec);

    auto [t0, e0] = contaminate_train(b.train, b.test, 0.0, 5);
    CHECK(t0.size() == b.train.size());
    CHECK(e0.size() == b.test.size());

    auto [t1, e1] = contaminate_train(b.train, b.test, 0.10, 5);
    CHECK(t1.size() == b.train.size() + 10);
    CHECK(e1.size() == b.test.size() - 10);
    int anomalies_left = 0;
    for (int l : e1.labels) anomalies_left += l;
    CHECK(anomalies_left == 90);
    // Moved images are nominally normal but keep audit truth.
    int contaminated = 0;
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1.labels[i] == 0);
        contaminated += t1.true_labels[i] != t1.labels[i] ? 1 : 0;
    }
    CHECK(contaminated == 10);
    // Union conservation: every id appears exactly once across train'+test'.
    std::set<std::string> all;
    for (const auto& id : t1.ids) CHECK(all.insert(id).second);
    for (const auto& id : e1.ids) CHECK(all.insert(id).second);
    CHECK(all.size() == b.train.size() + b.test.size());

    LabeledImageSet no_anom = b.test.subset([&] {
        std::vector<int> idx;
        for (std::size_t i = 0; i < b.test.size(); ++i)
            if (b.test.labels[i] == 0) idx.push_back(static_cast<int>(i));
        return idx;
    }());
    CHECK_THROWS_AS((void)contaminate_train(b.train, no_anom, 0.1, 5), std::invalid_argument);
    CHECK_THROWS_AS((void)contaminate_train(b.train, b.test, 1.0, 5), std::invalid_argument);
}

TEST_CASE("patch grid conventions") {
    Tensor img({1, 5, 5});
    for (int i = 0; i < 25; ++i) img[static_cast<std::size_t>(i)] = i / 25.0;
    // 3x3 patches at stride 1: one per pixel center.
    std::vector<Patch> p = extract_patches(img, 3, 3, 1, 1);
    CHECK(p.size() == 25);
    CHECK(p[0].center_y == 0);
    CHECK(p[24].center_x == 4);
    // The central patch of an exact-fit extraction equals the image.
    Tensor whole = extract_patch_at(img, 5, 5, 2, 2);
    for (std::size_t i = 0; i < whole.size(); ++i) CHECK(whole[i] == img[i]);
    // 8x8 image, 4x4 patches, stride 4: 4 patches covering the image.
    Tensor img8({1, 8, 8}, 0.25);
    std::vector<Patch> p8 = extract_patches(img8, 4, 4, 4, 4);
    CHECK(p8.size() == 4);
    // Patch larger than the image errors.
    CHECK_THROWS_AS((void)extract_patches(img, 6, 6, 1, 1), std::invalid_argument);
}

TEST_CASE("reflect padding matches a hand-reflected border patch") {
    Tensor img({1, 4, 4});
    for (int i = 0; i < 16; ++i) img[static_cast<std::size_t>(i)] = static_cast<double>(i);
    // 3x3 patch centered at (0,0): top-left sample reflects row 1 / col 1.
    Tensor patch = extract_patch_at(img, 3, 3, 0, 0);
    CHECK(patch[0] == img[static_cast<std::size_t>(1) * 4 + 1]);  // (-1,-1) -> (1,1)
    CHECK(patch[1] == img[static_cast<std::size_t>(1) * 4 + 0]);  // (-1,0) -> (1,0)
    CHECK(patch[4] == img[0]);                                    // (0,0)
}

TEST_CASE("manifest records labels, split and contamination") {
    SyntheticSpec spec;
    spec.n_normal_train = 5;
    spec.n_normal_test = 3;
    spec.n_anomalous_test = 20;
    SyntheticBenchmark b = make_synthetic_benchmark(spec);
    auto [train, test] = contaminate_train(b.train, b.test, 0.1, 3);
    const std::string path = (fs::temp_directory_path() / "igd_manifest.csv").string();
    write_manifest_csv(path, train, test);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "id,label,split,contaminated");
    int contaminated = 0, rows = 0;
    for (std::string line; std::getline(f, line);) {
        ++rows;
        if (line.find(",1\n") != std::string::npos || line.substr(line.size() - 2) == ",1")
            ++contaminated;
    }
    CHECK(rows == static_cast<int>(train.size() + test.size()));
    CHECK(contaminated == 2);  // floor(0.1 * 20)
    fs::remove(path);
}

TEST_SUITE_END();
