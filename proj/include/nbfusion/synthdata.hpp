// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbfusion/encoders.hpp"
#include "nbfusion/rng.hpp"

namespace nbf {

// Two-modality Gaussian mixture with controllable per-modality separability.
// Class 0 is far from classes 1 and 2 in image space while 1 and 2 sit at
// near-identical image means; text separates all three. A common text-mean
// offset direction makes corrupted text linearly detectable.
struct SynthConfig {
    std::size_t samples_per_class = 500;
    std::size_t classes = 3;
    std::size_t d_i = 512;
    std::size_t d_t = 768;
    double delta_img = 8.0;   // class-0 vs rest separation in image space
    double pd_d_gap = 0.1;    // residual class-1 vs class-2 image separation
    double delta_txt = 1.1;   // pairwise text separation scale
    double text_offset = 1.5; // shared text-mean offset magnitude
    double sigma = 1.0;       // within-class standard deviation
    double noise_rate = 0.0;  // fraction of samples with corrupted text
    double noise_level = 1.0; // corruption strength applied to that fraction
    double train_fraction = 0.8;
    std::uint64_t seed = 42;

    void validate() const;
};

struct SynthDataset {
    SynthConfig config;
    std::vector<EmbeddingRecord> train;
    std::vector<EmbeddingRecord> val;
};

// (1 - level) * T + level * Z with Z an isotropic Gaussian draw rescaled to
// T's norm. level 0 returns T bitwise unchanged; level 1 is class-independent.
std::vector<float> corrupt_text(const std::vector<float>& text, double noise_level, Rng& rng);

// Deterministic under config.seed; stratified 80/20 split per class.
SynthDataset generate(const SynthConfig& config);

// Manifest text (key = value lines) recording the full config.
std::string render_manifest(const SynthConfig& config, std::size_t train_count, std::size_t val_count,
                            std::size_t corrupted_count);

// Samples for the end-to-end toy pipeline: class-patterned images and
// class-segregated token streams. Images are standardized over the set.
struct ToySample {
    Tensor image;
    std::vector<std::size_t> tokens;
    std::size_t label = 0;
};

std::vector<ToySample> generate_toy_samples(std::size_t per_class, std::size_t classes,
                                            const ConvEncoderConfig& conv_cfg,
                                            const TextEncoderConfig& text_cfg, std::uint64_t seed);

}  // namespace nbf
