// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/encoders.hpp"

#include <cmath>

#include "nbfusion/errors.hpp"

namespace nbf {

Tensor init_conv_weights(std::vector<std::size_t> shape, std::size_t c_in, Rng& rng) {
    if (c_in < 1) throw ConfigError("init_conv_weights: C_in must be >= 1");
    const double stddev = std::sqrt(2.0 / (9.0 * static_cast<double>(c_in)));
    Tensor w(std::move(shape));
    for (double& v : w.vec()) v = rng.normal(0.0, stddev);
    return w;
}

Tensor init_conv_weights(std::vector<std::size_t> shape, std::size_t c_in, std::uint64_t seed) {
    Rng rng(seed);
    return init_conv_weights(std::move(shape), c_in, rng);
}

ToyConvEncoder ToyConvEncoder::init(const ConvEncoderConfig& cfg, Rng& rng) {
    if (cfg.height < 4 || cfg.width < 4) {
        throw ShapeError("conv encoder: image must be at least 4x4");
    }
    if (cfg.channels.empty()) throw ConfigError("conv encoder: at least one stage required");
    ToyConvEncoder enc;
    enc.cfg = cfg;
    std::size_t c_in = cfg.in_channels;
    for (std::size_t c_out : cfg.channels) {
        enc.kernels.push_back(init_conv_weights({c_out, c_in, 3, 3}, c_in, rng));
        enc.biases.push_back(Tensor({c_out}));
        c_in = c_out;
    }
    const double head_std = std::sqrt(1.0 / static_cast<double>(c_in));
    enc.head_w = Tensor({cfg.out_dim, c_in});
    for (double& v : enc.head_w.vec()) v = rng.normal(0.0, head_std);
    enc.head_b = Tensor({cfg.out_dim});
    return enc;
}

ConvEncoderVars bind_conv_encoder(Tape& tape, const ToyConvEncoder& enc, const std::string& prefix,
                                  const ParamMap* override) {
    const auto pick = [&](const std::string& name, const Tensor& def) {
        const bool hit = override && override->count(name) > 0;
            return tape.param(name, hit ? override->at(name) : def);
    };
    ConvEncoderVars vars;
    for (std::size_t s = 0; s < enc.kernels.size(); ++s) {
        vars.kernels.push_back(pick(prefix + ".conv" + std::to_string(s) + ".kernel", enc.kernels[s]));
        vars.biases.push_back(pick(prefix + ".conv" + std::to_string(s) + ".bias", enc.biases[s]));
    }
    vars.head_w = pick(prefix + ".head.w", enc.head_w);
    vars.head_b = pick(prefix + ".head.b", enc.head_b);
    return vars;
}

Tape::Var conv_encode(Tape& tape, const ConvEncoderVars& vars, Tape::Var image) {
    const Tensor& img = tape.value(image);
    if (img.rank() != 3) throw ShapeError("conv_encode: image must be [C,H,W]");
    if (img.dim(1) < 4 || img.dim(2) < 4) {
        throw ShapeError("conv_encode: image must be at least 4x4, got " + shape_str(img.shape()));
    }
    Tape::Var h = image;
    for (std::size_t s = 0; s < vars.kernels.size(); ++s) {
        h = tape.maxpool2x2(tape.relu(tape.conv2d_3x3_same(h, vars.kernels[s], vars.biases[s])));
    }
    return tape.affine(tape.global_avg_pool(h), vars.head_w, vars.head_b);
}

Tensor conv_encode(const ToyConvEncoder& enc, const Tensor& image) {
    Tape tape;
    ConvEncoderVars vars = bind_conv_encoder(tape, enc, "visual");
    return tape.value(conv_encode(tape, vars, tape.input(image)));
}

ToyTextEncoder ToyTextEncoder::init(const TextEncoderConfig& cfg, Rng& rng) {
    if (cfg.vocab < 1 || cfg.d_t < 1 || cfg.max_len < 2) {
        throw ConfigError("text encoder: vocab >= 1, d_t >= 1, max_len >= 2 required");
    }
    ToyTextEncoder enc;
    enc.cfg = cfg;
    enc.token_embed = Tensor({cfg.vocab + 1, cfg.d_t});
    for (double& v : enc.token_embed.vec()) v = rng.normal(0.0, 0.1);
    enc.pos_embed = Tensor({cfg.max_len, cfg.d_t});
    for (double& v : enc.pos_embed.vec()) v = rng.normal(0.0, 0.1);
    enc.seg_embed = Tensor({cfg.d_t});
    const double wstd = 1.0 / std::sqrt(static_cast<double>(cfg.d_t));
    for (Tensor* w : {&enc.wq, &enc.wk, &enc.wv, &enc.out_w}) {
        *w = Tensor({cfg.d_t, cfg.d_t});
        for (double& v : w->vec()) v = rng.normal(0.0, wstd);
    }
    enc.out_b = Tensor({cfg.d_t});
    return enc;
}

TextEncoderVars bind_text_encoder(Tape& tape, const ToyTextEncoder& enc, const std::string& prefix,
                                  const ParamMap* override) {
    const auto pick = [&](const std::string& name, const Tensor& def) {
        const bool hit = override && override->count(name) > 0;
            return tape.param(name, hit ? override->at(name) : def);
    };
    TextEncoderVars vars;
    vars.token_embed = pick(prefix + ".token_embed", enc.token_embed);
    vars.pos_embed = pick(prefix + ".pos_embed", enc.pos_embed);
    vars.seg_embed = pick(prefix + ".seg_embed", enc.seg_embed);
    vars.wq = pick(prefix + ".wq", enc.wq);
    vars.wk = pick(prefix + ".wk", enc.wk);
    vars.wv = pick(prefix + ".wv", enc.wv);
    vars.out_w = pick(prefix + ".out.w", enc.out_w);
    vars.out_b = pick(prefix + ".out.b", enc.out_b);
    return vars;
}

Tape::Var text_encode(Tape& tape, const TextEncoderConfig& cfg, const TextEncoderVars& vars,
                      const std::vector<std::size_t>& tokens) {
    if (tokens.empty()) throw ShapeError("text_encode: sequence must contain at least one token");
    if (tokens.size() + 1 > cfg.max_len) {
        throw ShapeError("text_encode: sequence of " + std::to_string(tokens.size()) +
                         " tokens exceeds max_len " + std::to_string(cfg.max_len));
    }
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size() + 1);
    ids.push_back(0);  // CLS row
    for (std::size_t t : tokens) {
        if (t >= cfg.vocab) {
            throw IndexError("text_encode: unknown token id " + std::to_string(t) + " (vocab " +
                             std::to_string(cfg.vocab) + ")");
        }
        ids.push_back(t + 1);
    }
    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;

    Tape::Var tok = tape.embed_rows(vars.token_embed, ids);
    Tape::Var pos = tape.embed_rows(vars.pos_embed, positions);
    Tape::Var states = tape.add_row_vector(tape.add(tok, pos), vars.seg_embed);

    Tape::Var q = tape.matmul_nt(states, vars.wq);
    Tape::Var k = tape.matmul_nt(states, vars.wk);
    Tape::Var v = tape.matmul_nt(states, vars.wv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.d_t));
    Tape::Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt));
    Tape::Var ctx = tape.matmul(attn, v);
    return tape.affine(tape.take_row(ctx, 0), vars.out_w, vars.out_b);
}

Tensor text_encode(const ToyTextEncoder& enc, const std::vector<std::size_t>& tokens) {
    Tape tape;
    TextEncoderVars vars = bind_text_encoder(tape, enc, "text");
    return tape.value(text_encode(tape, enc.cfg, vars, tokens));
}

}  // namespace nbf
