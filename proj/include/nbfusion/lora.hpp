// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbfusion/rng.hpp"
#include "nbfusion/tape.hpp"
#include "nbfusion/tensor.hpp"

namespace nbf {

// Low-rank adaptation of a frozen weight matrix: effective weight W0 + B.A
// with trainable factors B [d x r], A [r x k]. W0 is never touched by
// training; rank 0 means no trainable update at all.
struct LoraAdapter {
    Tensor w0;  // frozen [d x k]
    Tensor b;   // [d x r], zero-initialized
    Tensor a;   // [r x k], small uniform
    std::size_t rank = 0;

    std::size_t d() const { return w0.dim(0); }
    std::size_t k() const { return w0.dim(1); }

    static LoraAdapter create(Tensor w0, std::size_t rank, Rng& rng);
};

// (trainable, full) = (r(d + k), d.k)
std::pair<std::size_t, std::size_t> lora_param_count(std::size_t d, std::size_t k, std::size_t r);

// (W0 + B.A).x without materializing the dense sum.
Tensor lora_apply(const LoraAdapter& adapter, const Tensor& x);

// Dense W0 + B.A; the adapter is left untouched.
Tensor merge_adapter(const LoraAdapter& adapter);

// Tape-bound adapter: W0 enters as a plain input so gradients reach B and A only.
struct LoraVars {
    Tape::Var w0;
    Tape::Var b;
    Tape::Var a;
    std::size_t rank = 0;
};

LoraVars bind_lora(Tape& tape, const LoraAdapter& adapter, const std::string& prefix,
                   const ParamMap* override = nullptr);

Tape::Var lora_apply(Tape& tape, const LoraVars& vars, Tape::Var x);

// Rows of x mapped through the adapted weight: x.(W0 + B.A)^T.
Tape::Var lora_apply_rows(Tape& tape, const LoraVars& vars, Tape::Var x);

// Cross-modal attention with LoRA-adapted q/k/v projections over a shared
// width d: queries from the visual rows, keys and values from the text rows.
struct CrossModalAttentionParams {
    LoraAdapter q;
    LoraAdapter k;
    LoraAdapter v;
    std::size_t dim = 0;    // d; head_dim = dim / heads
    std::size_t heads = 1;

    static CrossModalAttentionParams create(std::size_t dim, std::size_t rank, std::size_t heads,
                                            Rng& rng);
};

struct CrossModalAttentionResult {
    Tensor output;               // [n_v x d]
    std::vector<Tensor> attn;    // per head [n_v x n_t]
};

CrossModalAttentionResult cross_modal_attention(const CrossModalAttentionParams& params,
                                                const Tensor& visual, const Tensor& text);

struct CrossModalVars {
    LoraVars q;
    LoraVars k;
    LoraVars v;
    std::size_t dim = 0;
    std::size_t heads = 1;
};

CrossModalVars bind_cross_modal(Tape& tape, const CrossModalAttentionParams& params,
                                const std::string& prefix, const ParamMap* override = nullptr);

Tape::Var cross_modal_attention(Tape& tape, const CrossModalVars& vars, Tape::Var visual,
                                Tape::Var text);

}  // namespace nbf
