#include <stdexcept>
#include <filesystem>

#include "doctest.h"

#include "igd/models.hpp"
#include "igd/rng.hpp"
#include "test_support.hpp"

using namespace igd;
using igd_testing::random_tensor;

TEST_SUITE_BEGIN("models");

namespace {

BackboneConfig desk_config() {
    BackboneConfig cfg;
    cfg.variant = BackboneVariant::desk_cnn;
    cfg.latent_dim = 16;
    cfg.input_h = 32;
    cfg.input_w = 32;
    cfg.channels = 1;
    cfg.base_channels = 4;
    return cfg;
}

}  // namespace

TEST_CASE("encoder and decoder shape contracts") {
    Rng rng(60);
    BackboneConfig cfg = desk_config();
    Encoder enc = build_encoder(cfg, rng);
    Decoder dec = build_decoder(cfg, rng);
    Tensor x = random_tensor({3, 1, 32, 32}, rng);
    Tape t;
    Ref z = enc.forward(t, t.constant(x), false);
    CHECK(z.value().shape() == std::vector<int>{3, 16});
    Ref y = dec.forward(t, z, false);
    CHECK(y.value().shape() == std::vector<int>{3, 1, 32, 32});
    CHECK(y.value().min() >= 0.0);
    CHECK(y.value().max() <= 1.0);
    CHECK(y.value().all_finite());
}

TEST_CASE("decoder maps the zero latent to a finite valid image") {
    Rng rng(61);
    BackboneConfig cfg = desk_config();
    Decoder dec = build_decoder(cfg, rng);
    Tensor y = dec.decode(Tensor({1, 16}));
    CHECK(y.all_finite());
    CHECK(y.min() >= 0.0);
    CHECK(y.max() <= 1.0);
}

TEST_CASE("eval-mode forward is bit-deterministic") {
    Rng rng(62);
    BackboneConfig cfg = desk_config();
    Encoder enc = build_encoder(cfg, rng);
    Tensor x = random_tensor({2, 1, 32, 32}, rng);
    Tensor z1 = enc.encode(x);
    Tensor z2 = enc.encode(x);
    for (std::size_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);
}

TEST_CASE("critic output range and gradient existence") {
    Rng rng(63);
    BackboneConfig cfg = desk_config();
    Critic critic = build_critic(cfg, rng);
    Tensor x = random_tensor({4, 1, 32, 32}, rng);
    std::vector<double> out = critic.evaluate(x);
    REQUIRE(out.size() == 4);
    for (double v : out) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    // Gradient w.r.t. the input image exists and is nonzero somewhere.
    Tensor sink({1, 1, 32, 32});
    Tape t;
    Ref xr = t.leaf(random_tensor({1, 1, 32, 32}, rng), &sink);
    t.backward(mean_all(critic.forward(t, xr, false)));
    CHECK(l2_norm(sink) > 0.0);
}

TEST_CASE("invalid configurations are rejected") {
    Rng rng(64);
    BackboneConfig cfg = desk_config();
    cfg.latent_dim = 1;
    CHECK_THROWS_AS(Encoder(cfg, rng), std::invalid_argument);
    cfg = desk_config();
    cfg.input_h = 20;  // not a multiple of 16
    CHECK_THROWS_AS(Encoder(cfg, rng), std::invalid_argument);
    cfg = desk_config();
    cfg.variant = BackboneVariant::resnet18_like;
    cfg.input_h = cfg.input_w = 48;  // not a multiple of 32
    CHECK_THROWS_AS(Encoder(cfg, rng), std::invalid_argument);
}

TEST_CASE("latent dimension mismatch is reported") {
    Rng rng(65);
    Decoder dec = build_decoder(desk_config(), rng);
    Tape t;
    CHECK_THROWS_AS((void)dec.forward(t, t.constant(Tensor({2, 8})), false),
                    std::invalid_argument);
}

TEST_CASE("parameter counts match the documented architecture table") {
    Rng rng(66);
    // desk_cnn at base=16, Z=128, 32x32x3 input (the reference configuration
    // in docs/architectures.md).
    BackboneConfig cfg;
    cfg.variant = BackboneVariant::desk_cnn;
    cfg.latent_dim = 128;
    cfg.input_h = cfg.input_w = 32;
    cfg.channels = 3;
    cfg.base_channels = 16;
    CHECK(Encoder(cfg, rng).params().param_count() == 163104);
    CHECK(Decoder(cfg, rng).params().param_count() == 163363);
    CHECK(Critic(cfg, rng).params().param_count() == 23649);
    // resnet18_like at Z=128, 64x64x3.
    BackboneConfig rn;
    rn.variant = BackboneVariant::resnet18_like;
    rn.latent_dim = 128;
    rn.input_h = rn.input_w = 64;
    rn.channels = 3;
    CHECK(Encoder(rn, rng).params().param_count() == 11236480);
    CHECK(Decoder(rn, rng).params().param_count() == 1832259);
}

TEST_CASE("weight archive round trip preserves values to f32") {
    Rng rng(67);
    BackboneConfig cfg = desk_config();
    Encoder enc = build_encoder(cfg, rng);
    const std::string path = "/tmp/igd_test_weights.igdw";
    save_weight_archive(path, to_string(cfg.variant), cfg.latent_dim,
                        named_tensors(enc.params(), ""), R"({"note":"test"})");
    WeightArchive a = load_weight_archive(path);
    CHECK(a.variant == "desk_cnn");
    CHECK(a.latent_dim == 16);
    CHECK(a.tensors.size() == enc.params().entries().size());

    Encoder enc2 = build_encoder(cfg, rng);  // different init
    load_params_from_archive(enc2.params(), a, "");
    for (const auto& [name, e] : enc.params().entries()) {
        const Tensor& restored = enc2.params().entry(name).value;
        for (std::size_t i = 0; i < e.value.size(); ++i)
            CHECK(restored[i] ==
                  doctest::Approx(e.value[i]).epsilon(1e-6));  // f32 quantization
    }
    std::filesystem::remove(path);
}

TEST_CASE("incompatible pretrained shapes are rejected with the offending name") {
    Rng rng(68);
    BackboneConfig cfg = desk_config();
    Encoder enc = build_encoder(cfg, rng);
    const std::string path = "/tmp/igd_test_badweights.igdw";
    save_weight_archive(path, "desk_cnn", 16, named_tensors(enc.params(), ""));

    BackboneConfig other = cfg;
    other.base_channels = 8;  // conv shapes now differ
    Encoder enc2(other, rng);
    WeightArchive a = load_weight_archive(path);
    CHECK_THROWS_WITH_AS(load_params_from_archive(enc2.params(), a, ""),
                         doctest::Contains("conv1"), std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("pretrained encoder weights load through the builder") {
    Rng rng(69);
    BackboneConfig cfg = desk_config();
    Encoder enc = build_encoder(cfg, rng);
    const std::string path = "/tmp/igd_test_pretrained.igdw";
    save_weight_archive(path, "desk_cnn", 16, named_tensors(enc.params(), ""));
    BackboneConfig loaded_cfg = cfg;
    loaded_cfg.pretrained_weights = path;
    Encoder enc2 = build_encoder(loaded_cfg, rng);
    Tensor x = random_tensor({1, 1, 32, 32}, rng);
    Tensor z1 = enc.encode(x);
    Tensor z2 = enc2.encode(x);
    for (std::size_t i = 0; i < z1.size(); ++i)
        CHECK(z1[i] == doctest::Approx(z2[i]).epsilon(1e-5));
    std::filesystem::remove(path);
}

TEST_CASE("resnet18_like forward pass shapes") {
    Rng rng(70);
    BackboneConfig cfg;
    cfg.variant = BackboneVariant::resnet18_like;
    cfg.latent_dim = 32;
    cfg.input_h = cfg.input_w = 32;
    cfg.channels = 1;
    Encoder enc(cfg, rng);
    Decoder dec(cfg, rng);
    Tensor x = random_tensor({2, 1, 32, 32}, rng);
    Tape t;
    Ref z = enc.forward(t, t.constant(x), false);
    CHECK(z.value().shape() == std::vector<int>{2, 32});
    Ref y = dec.forward(t, z, false);
    CHECK(y.value().shape() == std::vector<int>{2, 1, 32, 32});
    CHECK(y.value().all_finite());
}

TEST_SUITE_END();
