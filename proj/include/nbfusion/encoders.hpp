// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbfusion/rng.hpp"
#include "nbfusion/tape.hpp"
#include "nbfusion/tensor.hpp"

namespace nbf {

// One sample's modality vectors plus label; unit of ingestion and generation.
// Vectors are kept in float32, matching the on-disk embedding format exactly.
struct EmbeddingRecord {
    std::uint8_t label = 0;
    bool noisy = false;  // synthetic provenance marker
    std::vector<float> image_vec;
    std::vector<float> text_vec;
};

// Gaussian conv-kernel init with zero mean and variance 2 / (3*3*C_in).
Tensor init_conv_weights(std::vector<std::size_t> shape, std::size_t c_in, std::uint64_t seed);
Tensor init_conv_weights(std::vector<std::size_t> shape, std::size_t c_in, Rng& rng);

struct ConvEncoderConfig {
    std::size_t in_channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    std::vector<std::size_t> channels = {8, 16};  // conv3x3+relu+maxpool2x2 per stage
    std::size_t out_dim = 512;
};

// Small conv stack standing in for a deep visual backbone: per stage a 3x3
// same-padded convolution, ReLU and 2x2 max-pool, then global average pool
// and an affine head to out_dim.
struct ToyConvEncoder {
    ConvEncoderConfig cfg;
    std::vector<Tensor> kernels;  // [Co,Ci,3,3] per stage
    std::vector<Tensor> biases;   // [Co] per stage
    Tensor head_w;                // [out_dim x C_last]
    Tensor head_b;                // [out_dim]

    static ToyConvEncoder init(const ConvEncoderConfig& cfg, Rng& rng);
};

struct ConvEncoderVars {
    std::vector<Tape::Var> kernels;
    std::vector<Tape::Var> biases;
    Tape::Var head_w;
    Tape::Var head_b;
};

ConvEncoderVars bind_conv_encoder(Tape& tape, const ToyConvEncoder& enc, const std::string& prefix,
                                  const ParamMap* override = nullptr);
Tape::Var conv_encode(Tape& tape, const ConvEncoderVars& vars, Tape::Var image);

// Value-only forward.
Tensor conv_encode(const ToyConvEncoder& enc, const Tensor& image);

struct TextEncoderConfig {
    std::size_t vocab = 64;   // ids 0..vocab-1; a CLS row is reserved internally
    std::size_t d_t = 768;
    std::size_t max_len = 16;  // including the prepended CLS position
};

// Token + positional + segment embeddings, one self-attention layer, and an
// affine output head read off the CLS position.
struct ToyTextEncoder {
    TextEncoderConfig cfg;
    Tensor token_embed;  // [(vocab+1) x d_t]; row 0 is CLS
    Tensor pos_embed;    // [max_len x d_t]
    Tensor seg_embed;    // [d_t], single segment
    Tensor wq, wk, wv;   // [d_t x d_t]
    Tensor out_w;        // [d_t x d_t]
    Tensor out_b;        // [d_t]

    static ToyTextEncoder init(const TextEncoderConfig& cfg, Rng& rng);
};

struct TextEncoderVars {
    Tape::Var token_embed;
    Tape::Var pos_embed;
    Tape::Var seg_embed;
    Tape::Var wq, wk, wv;
    Tape::Var out_w, out_b;
};

TextEncoderVars bind_text_encoder(Tape& tape, const ToyTextEncoder& enc, const std::string& prefix,
                                  const ParamMap* override = nullptr);
Tape::Var text_encode(Tape& tape, const TextEncoderConfig& cfg, const TextEncoderVars& vars,
                      const std::vector<std::size_t>& tokens);

Tensor text_encode(const ToyTextEncoder& enc, const std::vector<std::size_t>& tokens);

}  // namespace nbf
