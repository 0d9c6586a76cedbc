// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/optim.hpp"

#include <cmath>

#include "nbfusion/errors.hpp"

namespace nbf {

const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::visual_encoder: return "visual_encoder";
        case ParamGroup::text_encoder: return "text_encoder";
        case ParamGroup::projection: return "projection";
        case ParamGroup::confidence: return "confidence";
        case ParamGroup::classifier: return "classifier";
    }
    return "?";
}

bool FreezeMask::trainable(ParamGroup g) const {
    switch (g) {
        case ParamGroup::visual_encoder: return visual_encoder;
        case ParamGroup::text_encoder: return text_encoder;
        case ParamGroup::projection: return projection;
        case ParamGroup::confidence: return confidence;
        case ParamGroup::classifier: return classifier;
    }
    return false;
}

std::size_t FreezeMask::trainable_count() const {
    return static_cast<std::size_t>(visual_encoder) + text_encoder + projection + confidence +
           classifier;
}

void Adam::step(const std::vector<ParamRef>& params, const GradMap& grads, const FreezeMask& mask) {
    for (const ParamRef& p : params) {
        if (!mask.trainable(p.group)) continue;
        const auto git = grads.find(p.name);
        if (git == grads.end()) {
            throw Error("adam: no gradient for parameter '" + p.name + "'");
        }
        const Tensor& g = git->second;
        if (!g.same_shape(*p.tensor)) {
            throw ShapeError("adam: gradient shape mismatch for '" + p.name + "'");
        }
        State& s = state_[p.name];
        if (s.t == 0) {
            s.m = Tensor(p.tensor->shape());
            s.v = Tensor(p.tensor->shape());
        }
        s.t += 1;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
        Tensor& theta = *p.tensor;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = s.m[i] / c1;
            const double vhat = s.v[i] / c2;
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

}  // namespace nbf
