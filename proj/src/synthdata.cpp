// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nbfusion/errors.hpp"

namespace nbf {

void SynthConfig::validate() const {
    if (classes != 3) throw ConfigError("synth: exactly three classes supported");
    if (samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("synth: sigma must be positive");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("synth: noise_rate outside [0,1]");
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw ConfigError("synth: noise_level outside [0,1]");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("synth: train_fraction outside (0,1)");
    }
    if (d_i < 2 || d_t < 2) throw ConfigError("synth: modality dims must be >= 2");
}

namespace {

std::vector<double> unit_direction(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

}  // namespace

std::vector<float> corrupt_text(const std::vector<float>& text, double noise_level, Rng& rng) {
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) {
        throw ValueError("corrupt_text: noise_level " + std::to_string(noise_level) + " outside [0,1]");
    }
    if (noise_level == 0.0) return text;
    std::vector<double> z(text.size());
    double norm_t = 0.0, norm_z = 0.0;
    for (float v : text) norm_t += static_cast<double>(v) * static_cast<double>(v);
    for (double& v : z) {
        v = rng.normal();
        norm_z += v * v;
    }
    const double scale = norm_z > 0.0 ? std::sqrt(norm_t / norm_z) : 0.0;
    std::vector<float> out(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        out[i] = static_cast<float>((1.0 - noise_level) * static_cast<double>(text[i]) +
                                    noise_level * z[i] * scale);
    }
    return out;
}

SynthDataset generate(const SynthConfig& config) {
    config.validate();
    Rng root(config.seed);
    Rng dir_rng = root.spawn(1);
    Rng sample_rng = root.spawn(2);
    Rng pick_rng = root.spawn(3);
    Rng corrupt_rng = root.spawn(4);
    Rng split_rng = root.spawn(5);

    // Class-mean geometry. Image space: class 0 sits delta_img away from the
    // shared mean of classes 1/2, which differ only by pd_d_gap. Text space:
    // all classes share a common offset plus per-class directions.
    const std::vector<double> u_main = unit_direction(config.d_i, dir_rng);
    const std::vector<double> u_ambig = unit_direction(config.d_i, dir_rng);
    const std::vector<double> g = unit_direction(config.d_t, dir_rng);
    std::vector<std::vector<double>> f;
    for (std::size_t c = 0; c < config.classes; ++c) f.push_back(unit_direction(config.d_t, dir_rng));

    std::vector<std::vector<double>> img_means(config.classes, std::vector<double>(config.d_i, 0.0));
    for (std::size_t j = 0; j < config.d_i; ++j) {
        img_means[0][j] = config.delta_img * u_main[j];
        img_means[1][j] = -0.5 * config.pd_d_gap * u_ambig[j];
        img_means[2][j] = 0.5 * config.pd_d_gap * u_ambig[j];
    }
    std::vector<std::vector<double>> txt_means(config.classes, std::vector<double>(config.d_t, 0.0));
    for (std::size_t c = 0; c < config.classes; ++c) {
        for (std::size_t j = 0; j < config.d_t; ++j) {
            txt_means[c][j] = config.text_offset * g[j] + config.delta_txt * f[c][j];
        }
    }

    const std::size_t total = config.samples_per_class * config.classes;
    std::vector<EmbeddingRecord> records;
    records.reserve(total);
    for (std::size_t c = 0; c < config.classes; ++c) {
        for (std::size_t s = 0; s < config.samples_per_class; ++s) {
            EmbeddingRecord rec;
            rec.label = static_cast<std::uint8_t>(c);
            rec.image_vec.resize(config.d_i);
            rec.text_vec.resize(config.d_t);
            for (std::size_t j = 0; j < config.d_i; ++j) {
                rec.image_vec[j] = static_cast<float>(img_means[c][j] + config.sigma * sample_rng.normal());
            }
            for (std::size_t j = 0; j < config.d_t; ++j) {
                rec.text_vec[j] = static_cast<float>(txt_means[c][j] + config.sigma * sample_rng.normal());
            }
            records.push_back(std::move(rec));
        }
    }

    // Corrupt a uniform noise_rate fraction, class-independent.
    const std::size_t n_corrupt =
        static_cast<std::size_t>(std::llround(config.noise_rate * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    pick_rng.shuffle(order);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + n_corrupt);
    std::sort(chosen.begin(), chosen.end());  // corruption draws in stable index order
    for (std::size_t idx : chosen) {
        records[idx].text_vec = corrupt_text(records[idx].text_vec, config.noise_level, corrupt_rng);
        records[idx].noisy = true;
    }

    // Stratified split, per-class proportions within one sample of the target.
    SynthDataset ds;
    ds.config = config;
    for (std::size_t c = 0; c < config.classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < total; ++i) {
            if (records[i].label == c) idx.push_back(i);
        }
        split_rng.shuffle(idx);
        const std::size_t n_train = static_cast<std::size_t>(
            std::llround(config.train_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? ds.train : ds.val).push_back(records[idx[i]]);
        }
    }
    return ds;
}

std::string render_manifest(const SynthConfig& c, std::size_t train_count, std::size_t val_count,
                            std::size_t corrupted_count) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "samples_per_class = %zu\n"
                  "classes = %zu\n"
                  "d_i = %zu\n"
                  "d_t = %zu\n"
                  "delta_img = %.6f\n"
                  "pd_d_gap = %.6f\n"
                  "delta_txt = %.6f\n"
                  "text_offset = %.6f\n"
                  "sigma = %.6f\n"
                  "noise_rate = %.6f\n"
                  "noise_level = %.6f\n"
                  "train_fraction = %.6f\n"
                  "synth_seed = %llu\n"
                  "train_count = %zu\n"
                  "val_count = %zu\n"
                  "corrupted_count = %zu\n"
                  "fusion_margin_pp = 5\n",
                  c.samples_per_class, c.classes, c.d_i, c.d_t, c.delta_img, c.pd_d_gap, c.delta_txt,
                  c.text_offset, c.sigma, c.noise_rate, c.noise_level, c.train_fraction,
                  static_cast<unsigned long long>(c.seed), train_count, val_count, corrupted_count);
    return buf;
}

std::vector<ToySample> generate_toy_samples(std::size_t per_class, std::size_t classes,
                                            const ConvEncoderConfig& conv_cfg,
                                            const TextEncoderConfig& text_cfg, std::uint64_t seed) {
    if (per_class < 1 || classes < 2) throw ConfigError("toy samples: per_class >= 1, classes >= 2");
    Rng rng(seed);
    std::vector<ToySample> samples;
    samples.reserve(per_class * classes);
    const std::size_t token_span = std::max<std::size_t>(1, text_cfg.vocab / classes);
    const std::size_t seq_len = std::min<std::size_t>(text_cfg.max_len - 1, 6);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            ToySample sample;
            sample.label = c;
            sample.image = Tensor({conv_cfg.in_channels, conv_cfg.height, conv_cfg.width});
            // Class-dependent stripe pattern plus pixel noise.
            for (std::size_t ch = 0; ch < conv_cfg.in_channels; ++ch) {
                for (std::size_t i = 0; i < conv_cfg.height; ++i) {
                    for (std::size_t j = 0; j < conv_cfg.width; ++j) {
                        const double stripe = ((i / (c + 1)) % 2 == 0) ? 1.0 : -1.0;
                        sample.image.at(ch, i, j) = 0.6 * stripe + 0.5 * rng.normal();
                    }
                }
            }
            // Tokens drawn from the class's band of the vocabulary.
            sample.tokens.resize(seq_len);
            for (std::size_t t = 0; t < seq_len; ++t) {
                sample.tokens[t] = (c * token_span + rng.index(token_span)) % text_cfg.vocab;
            }
            samples.push_back(std::move(sample));
        }
    }
    // Per-dataset standardization of pixels.
    double mean = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const ToySample& s : samples) {
        for (double v : s.image.vec()) {
            mean += v;
            sq += v * v;
            ++count;
        }
    }
    mean /= static_cast<double>(count);
    const double var = sq / static_cast<double>(count) - mean * mean;
    const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (ToySample& s : samples) {
        for (double& v : s.image.vec()) v = (v - mean) * inv_std;
    }
    return samples;
}

}  // namespace nbf
