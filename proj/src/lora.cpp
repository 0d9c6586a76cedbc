// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/lora.hpp"

#include <cmath>

#include "nbfusion/errors.hpp"
#include "nbfusion/kernels.hpp"

namespace nbf {

LoraAdapter LoraAdapter::create(Tensor w0, std::size_t rank, Rng& rng) {
    if (w0.rank() != 2) throw ShapeError("lora: base weight must be rank-2, got " + shape_str(w0.shape()));
    const std::size_t d = w0.dim(0), k = w0.dim(1);
    if (rank > std::min(d, k)) {
        throw ConfigError("lora: rank " + std::to_string(rank) + " exceeds min(d,k) = " +
                          std::to_string(std::min(d, k)));
    }
    LoraAdapter adapter;
    adapter.w0 = std::move(w0);
    adapter.rank = rank;
    if (rank > 0) {
        // B starts at zero so training begins exactly at the frozen model;
        // A gets a small uniform spread to break symmetry.
        adapter.b = Tensor({d, rank});
        adapter.a = Tensor({rank, k});
        const double bound = 1.0 / std::sqrt(static_cast<double>(k));
        for (double& v : adapter.a.vec()) v = rng.uniform(-bound, bound);
    }
    return adapter;
}

std::pair<std::size_t, std::size_t> lora_param_count(std::size_t d, std::size_t k, std::size_t r) {
    if (d < 1 || k < 1) throw ConfigError("lora_param_count: d and k must be >= 1");
    if (r > std::min(d, k)) {
        throw ConfigError("lora_param_count: rank " + std::to_string(r) + " exceeds min(d,k)");
    }
    return {r * (d + k), d * k};
}

Tensor lora_apply(const LoraAdapter& adapter, const Tensor& x) {
    if (adapter.rank == 0) {
        throw ConfigError("lora_apply: rank-0 adapter carries no trainable update");
    }
    if (x.rank() != 1 || x.dim(0) != adapter.k()) {
        throw ShapeError("lora_apply: input " + shape_str(x.shape()) + " does not match base cols " +
                         std::to_string(adapter.k()));
    }
    const std::size_t d = adapter.d(), k = adapter.k(), r = adapter.rank;
    Tensor y({d});
    kernels::matvec_acc(adapter.w0.data(), x.data(), y.data(), d, k);
    Tensor t({r});
    kernels::matvec_acc(adapter.a.data(), x.data(), t.data(), r, k);
    kernels::matvec_acc(adapter.b.data(), t.data(), y.data(), d, r);
    return y;
}

Tensor merge_adapter(const LoraAdapter& adapter) {
    Tensor dense(adapter.w0.shape(), std::vector<double>(adapter.w0.vec()));
    if (adapter.rank > 0) {
        kernels::gemm_acc(adapter.b.data(), adapter.a.data(), dense.data(), adapter.d(), adapter.rank,
                          adapter.k());
    }
    return dense;
}

LoraVars bind_lora(Tape& tape, const LoraAdapter& adapter, const std::string& prefix,
                   const ParamMap* override) {
    LoraVars vars;
    vars.rank = adapter.rank;
    vars.w0 = tape.input(adapter.w0);  // frozen: plain input, not a parameter
    if (adapter.rank > 0) {
        const auto pick = [&](const std::string& name, const Tensor& def) {
            const bool hit = override && override->count(name) > 0;
            return tape.param(name, hit ? override->at(name) : def);
        };
        vars.b = pick(prefix + ".b", adapter.b);
        vars.a = pick(prefix + ".a", adapter.a);
    }
    return vars;
}

Tape::Var lora_apply(Tape& tape, const LoraVars& vars, Tape::Var x) {
    if (vars.rank == 0) {
        throw ConfigError("lora_apply: rank-0 adapter carries no trainable update");
    }
    const std::size_t d = tape.value(vars.w0).dim(0);
    Tape::Var zero_d = tape.input(Tensor({d}));
    Tape::Var base = tape.affine(x, vars.w0, zero_d);
    const std::size_t r = vars.rank;
    Tape::Var zero_r = tape.input(Tensor({r}));
    Tape::Var mid = tape.affine(x, vars.a, zero_r);
    Tape::Var update = tape.affine(mid, vars.b, zero_d);
    return tape.add(base, update);
}

Tape::Var lora_apply_rows(Tape& tape, const LoraVars& vars, Tape::Var x) {
    Tape::Var base = tape.matmul_nt(x, vars.w0);
    if (vars.rank == 0) return base;
    Tape::Var mid = tape.matmul_nt(x, vars.a);
    Tape::Var update = tape.matmul_nt(mid, vars.b);
    return tape.add(base, update);
}

CrossModalAttentionParams CrossModalAttentionParams::create(std::size_t dim, std::size_t rank,
                                                            std::size_t heads, Rng& rng) {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw ConfigError("cross_modal_attention: width " + std::to_string(dim) +
                          " not divisible into " + std::to_string(heads) + " heads");
    }
    const auto frozen = [&](double scale) {
        Tensor w({dim, dim});
        for (double& v : w.vec()) v = rng.normal(0.0, scale);
        return w;
    };
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    CrossModalAttentionParams params;
    params.dim = dim;
    params.heads = heads;
    params.q = LoraAdapter::create(frozen(scale), rank, rng);
    params.k = LoraAdapter::create(frozen(scale), rank, rng);
    params.v = LoraAdapter::create(frozen(scale), rank, rng);
    return params;
}

CrossModalVars bind_cross_modal(Tape& tape, const CrossModalAttentionParams& params,
                                const std::string& prefix, const ParamMap* override) {
    CrossModalVars vars;
    vars.dim = params.dim;
    vars.heads = params.heads;
    vars.q = bind_lora(tape, params.q, prefix + ".q", override);
    vars.k = bind_lora(tape, params.k, prefix + ".k", override);
    vars.v = bind_lora(tape, params.v, prefix + ".v", override);
    return vars;
}

Tape::Var cross_modal_attention(Tape& tape, const CrossModalVars& vars, Tape::Var visual,
                                Tape::Var text) {
    const Tensor& vis = tape.value(visual);
    const Tensor& txt = tape.value(text);
    if (vis.rank() != 2 || vis.dim(1) != vars.dim) {
        throw ShapeError("cross_modal_attention: visual rows must have width " + std::to_string(vars.dim));
    }
    if (txt.rank() != 2 || txt.dim(1) != vars.dim) {
        throw ShapeError("cross_modal_attention: text rows must have width " + std::to_string(vars.dim));
    }
    if (txt.dim(0) == 0) throw ValueError("cross_modal_attention: empty text context");

    Tape::Var q = lora_apply_rows(tape, vars.q, visual);
    Tape::Var k = lora_apply_rows(tape, vars.k, text);
    Tape::Var v = lora_apply_rows(tape, vars.v, text);

    const std::size_t head_dim = vars.dim / vars.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tape::Var out;
    for (std::size_t h = 0; h < vars.heads; ++h) {
        Tape::Var qh = vars.heads == 1 ? q : tape.slice_cols(q, h * head_dim, head_dim);
        Tape::Var kh = vars.heads == 1 ? k : tape.slice_cols(k, h * head_dim, head_dim);
        Tape::Var vh = vars.heads == 1 ? v : tape.slice_cols(v, h * head_dim, head_dim);
        Tape::Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        Tape::Var attn = tape.softmax_rows(scores);
        Tape::Var ctx = tape.matmul(attn, vh);
        out = h == 0 ? ctx : tape.concat_cols(out, ctx);
    }
    return out;
}

CrossModalAttentionResult cross_modal_attention(const CrossModalAttentionParams& params,
                                                const Tensor& visual, const Tensor& text) {
    Tape tape;
    CrossModalVars vars = bind_cross_modal(tape, params, "cross");
    Tape::Var out = cross_modal_attention(tape, vars, tape.input(visual), tape.input(text));

    CrossModalAttentionResult result;
    result.output = tape.value(out);

    // Recompute the per-head attention maps for inspection.
    const std::size_t head_dim = params.dim / params.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor wq = merge_adapter(params.q), wk = merge_adapter(params.k);
    Tensor q = kernels::affine(visual, wq, Tensor({params.dim}));
    Tensor k = kernels::affine(text, wk, Tensor({params.dim}));
    const std::size_t nv = visual.dim(0), nt = text.dim(0);
    for (std::size_t h = 0; h < params.heads; ++h) {
        Tensor attn({nv, nt});
        for (std::size_t i = 0; i < nv; ++i) {
            for (std::size_t j = 0; j < nt; ++j) {
                attn.at(i, j) = inv_sqrt * kernels::dot(q.data() + i * params.dim + h * head_dim,
                                                        k.data() + j * params.dim + h * head_dim,
                                                        head_dim);
            }
            kernels::softmax_inplace(attn.data() + i * nt, nt);
        }
        result.attn.push_back(std::move(attn));
    }
    return result;
}

}  // namespace nbf
