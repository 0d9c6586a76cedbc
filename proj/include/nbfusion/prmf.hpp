// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "nbfusion/rng.hpp"
#include "nbfusion/tape.hpp"
#include "nbfusion/tensor.hpp"

namespace nbf {

struct PrmfConfig {
    std::size_t d_i = 512;
    std::size_t d_t = 768;
    std::size_t classes = 3;
    // When set, image logits come from a separate auxiliary head on the
    // projected image feature instead of the shared classifier.
    bool separate_image_head = false;
};

// Learnable image-to-text projection, text-confidence gate and classifier.
struct PrmfParams {
    PrmfConfig cfg;
    Tensor w_proj;  // [d_t x d_i]
    Tensor b_proj;  // [d_t]
    Tensor w_conf;  // [1 x (d_i + d_t)]
    Tensor b_conf;  // [1]
    Tensor w_cls;   // [K x d_t]
    Tensor b_cls;   // [K]
    Tensor w_img_cls;  // [K x d_t], only with separate_image_head
    Tensor b_img_cls;  // [K]

    static PrmfParams init(const PrmfConfig& cfg, Rng& rng);
};

struct PrmfOutput {
    Tensor projected;     // I' in text space
    double alpha = 0.0;   // text confidence, strictly in (0,1)
    Tensor fused;         // F = alpha T + (1 - alpha) I'
    Tensor fused_logits;
    Tensor image_logits;
};

// I' = W_proj I + b_proj
Tensor project_image(const PrmfParams& params, const Tensor& image_feat);

// alpha = sigmoid(W_conf [I; T] + b_conf), raw image feature concatenated with T.
double confidence(const PrmfParams& params, const Tensor& image_feat, const Tensor& text_feat);

// Componentwise convex combination; alpha outside [0,1] is a domain error.
Tensor fuse(const Tensor& text_feat, const Tensor& projected, double alpha);

PrmfOutput forward_prmf(const PrmfParams& params, const Tensor& image_feat, const Tensor& text_feat);

struct PrmfVars {
    Tape::Var w_proj, b_proj;
    Tape::Var w_conf, b_conf;
    Tape::Var w_cls, b_cls;
    Tape::Var w_img_cls, b_img_cls;
    bool separate_image_head = false;
};

PrmfVars bind_prmf(Tape& tape, const PrmfParams& params, const std::string& prefix,
                   const ParamMap* override = nullptr);

// Batched fusion graph over rows of I [B x d_i] and T [B x d_t].
struct PrmfGraph {
    Tape::Var projected;     // [B x d_t]
    Tape::Var alpha;         // [B]
    Tape::Var fused;         // [B x d_t]
    Tape::Var fused_logits;  // [B x K]
    Tape::Var image_logits;  // [B x K]
};

PrmfGraph prmf_graph(Tape& tape, const PrmfVars& vars, Tape::Var image_rows, Tape::Var text_rows);

// Same graph with the confidence gate pinned to a constant (fixed weighting).
PrmfGraph prmf_graph_fixed_alpha(Tape& tape, const PrmfVars& vars, Tape::Var image_rows,
                                 Tape::Var text_rows, double alpha);

}  // namespace nbf
