// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/prmf.hpp"

#include <cmath>

#include "nbfusion/errors.hpp"
#include "nbfusion/kernels.hpp"

namespace nbf {

PrmfParams PrmfParams::init(const PrmfConfig& cfg, Rng& rng) {
    if (cfg.classes < 2) throw ConfigError("prmf: at least two classes required");
    PrmfParams p;
    p.cfg = cfg;
    // Projection follows the conv-init scheme with fan-in d_i; confidence
    // starts at zero so alpha = 0.5 at step 0 (unbiased modality weighting).
    const double proj_std = std::sqrt(2.0 / static_cast<double>(cfg.d_i));
    p.w_proj = Tensor({cfg.d_t, cfg.d_i});
    for (double& v : p.w_proj.vec()) v = rng.normal(0.0, proj_std);
    p.b_proj = Tensor({cfg.d_t});
    p.w_conf = Tensor({1, cfg.d_i + cfg.d_t});
    p.b_conf = Tensor({1});
    const double cls_std = std::sqrt(2.0 / static_cast<double>(cfg.d_t));
    p.w_cls = Tensor({cfg.classes, cfg.d_t});
    for (double& v : p.w_cls.vec()) v = rng.normal(0.0, cls_std);
    p.b_cls = Tensor({cfg.classes});
    if (cfg.separate_image_head) {
        p.w_img_cls = Tensor({cfg.classes, cfg.d_t});
        for (double& v : p.w_img_cls.vec()) v = rng.normal(0.0, cls_std);
        p.b_img_cls = Tensor({cfg.classes});
    }
    return p;
}

Tensor project_image(const PrmfParams& params, const Tensor& image_feat) {
    if (image_feat.rank() != 1 || image_feat.dim(0) != params.cfg.d_i) {
        throw ShapeError("project_image: expected image feature of length " +
                         std::to_string(params.cfg.d_i) + ", got " + shape_str(image_feat.shape()));
    }
    return kernels::affine(image_feat, params.w_proj, params.b_proj);
}

double confidence(const PrmfParams& params, const Tensor& image_feat, const Tensor& text_feat) {
    if (image_feat.rank() != 1 || image_feat.dim(0) != params.cfg.d_i) {
        throw ShapeError("confidence: bad image feature shape " + shape_str(image_feat.shape()));
    }
    if (text_feat.rank() != 1 || text_feat.dim(0) != params.cfg.d_t) {
        throw ShapeError("confidence: bad text feature shape " + shape_str(text_feat.shape()));
    }
    double z = params.b_conf[0];
    z += kernels::dot(params.w_conf.data(), image_feat.data(), params.cfg.d_i);
    z += kernels::dot(params.w_conf.data() + params.cfg.d_i, text_feat.data(), params.cfg.d_t);
    return kernels::sigmoid(z);
}

Tensor fuse(const Tensor& text_feat, const Tensor& projected, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ValueError("fuse: alpha " + std::to_string(alpha) + " outside [0,1]");
    }
    if (!text_feat.same_shape(projected)) {
        throw ShapeError("fuse: shapes " + shape_str(text_feat.shape()) + " and " +
                         shape_str(projected.shape()) + " differ");
    }
    Tensor fused(text_feat.shape());
    const double beta = 1.0 - alpha;
    for (std::size_t j = 0; j < fused.size(); ++j) {
        fused[j] = alpha * text_feat[j] + beta * projected[j];
    }
    return fused;
}

PrmfOutput forward_prmf(const PrmfParams& params, const Tensor& image_feat, const Tensor& text_feat) {
    PrmfOutput out;
    out.projected = project_image(params, image_feat);
    out.alpha = confidence(params, image_feat, text_feat);
    out.fused = fuse(text_feat, out.projected, out.alpha);
    out.fused_logits = kernels::affine(out.fused, params.w_cls, params.b_cls);
    if (params.cfg.separate_image_head) {
        out.image_logits = kernels::affine(out.projected, params.w_img_cls, params.b_img_cls);
    } else {
        out.image_logits = kernels::affine(out.projected, params.w_cls, params.b_cls);
    }
    return out;
}

PrmfVars bind_prmf(Tape& tape, const PrmfParams& params, const std::string& prefix,
                   const ParamMap* override) {
    const auto pick = [&](const std::string& name, const Tensor& def) {
        const bool hit = override && override->count(name) > 0;
            return tape.param(name, hit ? override->at(name) : def);
    };
    PrmfVars vars;
    vars.separate_image_head = params.cfg.separate_image_head;
    vars.w_proj = pick(prefix + ".proj.w", params.w_proj);
    vars.b_proj = pick(prefix + ".proj.b", params.b_proj);
    vars.w_conf = pick(prefix + ".conf.w", params.w_conf);
    vars.b_conf = pick(prefix + ".conf.b", params.b_conf);
    vars.w_cls = pick(prefix + ".cls.w", params.w_cls);
    vars.b_cls = pick(prefix + ".cls.b", params.b_cls);
    if (params.cfg.separate_image_head) {
        vars.w_img_cls = pick(prefix + ".img_cls.w", params.w_img_cls);
        vars.b_img_cls = pick(prefix + ".img_cls.b", params.b_img_cls);
    }
    return vars;
}

namespace {

PrmfGraph finish_graph(Tape& tape, const PrmfVars& vars, PrmfGraph g, Tape::Var text_rows) {
    Tape::Var gated_text = tape.row_scale(text_rows, g.alpha);
    Tape::Var gated_image = tape.row_scale(g.projected, tape.one_minus(g.alpha));
    g.fused = tape.add(gated_text, gated_image);
    g.fused_logits = tape.affine(g.fused, vars.w_cls, vars.b_cls);
    if (vars.separate_image_head) {
        g.image_logits = tape.affine(g.projected, vars.w_img_cls, vars.b_img_cls);
    } else {
        g.image_logits = tape.affine(g.projected, vars.w_cls, vars.b_cls);
    }
    return g;
}

}  // namespace

PrmfGraph prmf_graph(Tape& tape, const PrmfVars& vars, Tape::Var image_rows, Tape::Var text_rows) {
    PrmfGraph g;
    g.projected = tape.affine(image_rows, vars.w_proj, vars.b_proj);
    Tape::Var cat = tape.concat_cols(image_rows, text_rows);
    Tape::Var logit = tape.affine(cat, vars.w_conf, vars.b_conf);  // [B x 1]
    const std::size_t rows = tape.value(logit).dim(0);
    g.alpha = tape.sigmoid(tape.reshape(logit, {rows}));
    return finish_graph(tape, vars, g, text_rows);
}

PrmfGraph prmf_graph_fixed_alpha(Tape& tape, const PrmfVars& vars, Tape::Var image_rows,
                                 Tape::Var text_rows, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ValueError("prmf_graph_fixed_alpha: alpha outside [0,1]");
    }
    PrmfGraph g;
    g.projected = tape.affine(image_rows, vars.w_proj, vars.b_proj);
    const std::size_t rows = tape.value(image_rows).dim(0);
    g.alpha = tape.input(Tensor::full({rows}, alpha));
    return finish_graph(tape, vars, g, text_rows);
}

}  // namespace nbf
