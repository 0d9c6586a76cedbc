// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>

#include <doctest.h>

#include "nbfusion/errors.hpp"
#include "nbfusion/synthdata.hpp"

#include "support/oracles.hpp"

using namespace nbf;

namespace {

bool records_equal(const EmbeddingRecord& a, const EmbeddingRecord& b) {
    return a.label == b.label && a.noisy == b.noisy &&
           std::memcmp(a.image_vec.data(), b.image_vec.data(), a.image_vec.size() * sizeof(float)) ==
               0 &&
           std::memcmp(a.text_vec.data(), b.text_vec.data(), a.text_vec.size() * sizeof(float)) == 0;
}

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.samples_per_class = 50;
    cfg.d_i = 32;
    cfg.d_t = 48;
    cfg.seed = 9;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("synthdata");

TEST_CASE("generation is bitwise deterministic under a seed") {
    const SynthConfig cfg = small_config();
    const SynthDataset a = generate(cfg);
    const SynthDataset b = generate(cfg);
    REQUIRE(a.train.size() == b.train.size());
    REQUIRE(a.val.size() == b.val.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(records_equal(a.train[i], b.train[i]));
    for (std::size_t i = 0; i < a.val.size(); ++i) CHECK(records_equal(a.val[i], b.val[i]));
}

TEST_CASE("class counts and stratified split proportions") {
    SynthConfig cfg = small_config();
    cfg.samples_per_class = 53;  // odd count exercises the +-1 tolerance
    const SynthDataset ds = generate(cfg);
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t train_c = 0, val_c = 0;
        for (const auto& r : ds.train) train_c += r.label == c ? 1 : 0;
        for (const auto& r : ds.val) val_c += r.label == c ? 1 : 0;
        CHECK(train_c + val_c == 53);
        const double target = 0.8 * 53.0;
        CHECK(std::fabs(static_cast<double>(train_c) - target) <= 1.0);
    }
}

TEST_CASE("noise rate marks exactly the corrupted fraction") {
    SynthConfig cfg = small_config();
    cfg.noise_rate = 0.25;
    const SynthDataset ds = generate(cfg);
    std::size_t noisy = 0;
    for (const auto* split : {&ds.train, &ds.val}) {
        for (const auto& r : *split) noisy += r.noisy ? 1 : 0;
    }
    CHECK(noisy == static_cast<std::size_t>(std::llround(0.25 * 150.0)));
    cfg.noise_rate = 1.5;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("corrupt_text identity, determinism and norm preservation") {
    Rng rng(3);
    std::vector<float> t(64);
    for (float& v : t) v = static_cast<float>(rng.normal());

    Rng r1(5);
    const std::vector<float> same = corrupt_text(t, 0.0, r1);
    CHECK(std::memcmp(same.data(), t.data(), t.size() * sizeof(float)) == 0);

    Rng r2(5), r3(5);
    const std::vector<float> c1 = corrupt_text(t, 0.7, r2);
    const std::vector<float> c2 = corrupt_text(t, 0.7, r3);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);

    Rng r4(6);
    const std::vector<float> full = corrupt_text(t, 1.0, r4);
    double nt = 0.0, nf = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        nt += static_cast<double>(t[i]) * t[i];
        nf += static_cast<double>(full[i]) * full[i];
    }
    CHECK(std::sqrt(nf) == doctest::Approx(std::sqrt(nt)).epsilon(1e-5));

    Rng r5(7);
    CHECK_THROWS_AS(corrupt_text(t, -0.1, r5), ValueError);
    CHECK_THROWS_AS(corrupt_text(t, 1.01, r5), ValueError);
}

TEST_CASE("image modality separates class 0 but not classes 1 and 2") {
    SynthConfig cfg;  // default separations, reduced size for speed
    cfg.samples_per_class = 250;
    cfg.seed = 42;
    const SynthDataset ds = generate(cfg);

    // Probe: class 0 vs rest on image vectors.
    std::vector<const std::vector<float>*> train_x, val_x;
    std::vector<std::size_t> train_y, val_y;
    for (const auto& r : ds.train) {
        train_x.push_back(&r.image_vec);
        train_y.push_back(r.label == 0 ? 0 : 1);
    }
    for (const auto& r : ds.val) {
        val_x.push_back(&r.image_vec);
        val_y.push_back(r.label == 0 ? 0 : 1);
    }
    const double ud_acc = oracles::linear_probe_accuracy(train_x, train_y, val_x, val_y, 2, 300, 8.0);
    CHECK(ud_acc > 0.99);

    // Probe: class 1 vs class 2 on image vectors stays near chance.
    train_x.clear();
    train_y.clear();
    val_x.clear();
    val_y.clear();
    for (const auto& r : ds.train) {
        if (r.label == 0) continue;
        train_x.push_back(&r.image_vec);
        train_y.push_back(r.label == 1 ? 0 : 1);
    }
    for (const auto& r : ds.val) {
        if (r.label == 0) continue;
        val_x.push_back(&r.image_vec);
        val_y.push_back(r.label == 1 ? 0 : 1);
    }
    const double pd_d_acc = oracles::linear_probe_accuracy(train_x, train_y, val_x, val_y, 2);
    CHECK(pd_d_acc <= 0.60);
}

TEST_CASE("fully corrupted text is class-independent") {
    SynthConfig cfg;
    cfg.samples_per_class = 500;
    cfg.noise_rate = 1.0;
    cfg.noise_level = 1.0;
    cfg.seed = 42;
    const SynthDataset ds = generate(cfg);
    std::vector<const std::vector<float>*> train_x, val_x;
    std::vector<std::size_t> train_y, val_y;
    for (const auto& r : ds.train) {
        train_x.push_back(&r.text_vec);
        train_y.push_back(r.label);
    }
    for (const auto& r : ds.val) {
        val_x.push_back(&r.text_vec);
        val_y.push_back(r.label);
    }
    const double acc = oracles::linear_probe_accuracy(train_x, train_y, val_x, val_y, 3);
    CHECK(acc > 1.0 / 3.0 - 0.05);
    CHECK(acc < 1.0 / 3.0 + 0.05);
}

TEST_CASE("manifest records the full configuration") {
    const SynthConfig cfg = small_config();
    const std::string manifest = render_manifest(cfg, 120, 30, 0);
    CHECK(manifest.find("samples_per_class = 50") != std::string::npos);
    CHECK(manifest.find("d_i = 32") != std::string::npos);
    CHECK(manifest.find("synth_seed = 9") != std::string::npos);
    CHECK(manifest.find("train_count = 120") != std::string::npos);
}

TEST_CASE("toy samples are deterministic and standardized") {
    ConvEncoderConfig conv_cfg;
    conv_cfg.height = 8;
    conv_cfg.width = 8;
    TextEncoderConfig text_cfg;
    const auto a = generate_toy_samples(5, 3, conv_cfg, text_cfg, 77);
    const auto b = generate_toy_samples(5, 3, conv_cfg, text_cfg, 77);
    REQUIRE(a.size() == 15);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].tokens == b[i].tokens);
        CHECK(std::memcmp(a[i].image.data(), b[i].image.data(),
                          a[i].image.size() * sizeof(double)) == 0);
    }
    double mean = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : a) {
        for (double v : s.image.vec()) {
            mean += v;
            sq += v * v;
            ++n;
        }
    }
    mean /= static_cast<double>(n);
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_SUITE_END();
