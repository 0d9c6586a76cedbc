// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nbfusion/tape.hpp"
#include "nbfusion/tensor.hpp"

namespace nbf {

enum class ParamGroup {
    visual_encoder,
    text_encoder,
    projection,
    confidence,
    classifier,
};

const char* to_string(ParamGroup g);

// Named, group-tagged view of a parameter tensor owned by a model.
struct ParamRef {
    std::string name;
    ParamGroup group;
    Tensor* tensor;
};

// Per-group trainable flags for the staged freeze/unfreeze controller.
struct FreezeMask {
    bool visual_encoder = true;
    bool text_encoder = true;
    bool projection = true;
    bool confidence = true;
    bool classifier = true;

    bool trainable(ParamGroup g) const;
    std::size_t trainable_count() const;
    bool operator==(const FreezeMask&) const = default;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with per-parameter moments and step counts. Frozen parameters are
// skipped entirely: no moment update, no step, bitwise-unchanged values.
class Adam {
public:
    explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

    void step(const std::vector<ParamRef>& params, const GradMap& grads, const FreezeMask& mask);

    const AdamConfig& config() const { return cfg_; }

private:
    struct State {
        Tensor m, v;
        std::size_t t = 0;
    };
    AdamConfig cfg_;
    std::unordered_map<std::string, State> state_;
};

}  // namespace nbf
