// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbfusion/optim.hpp"
#include "nbfusion/tape.hpp"

namespace nbf {

// Epoch-indexed loss weighting plus three-phase freeze boundaries.
struct CurriculumSchedule {
    std::size_t total_epochs = 150;
    double lambda_start = 0.3;
    double lambda_end = 1.0;
    enum class Shape { linear } shape = Shape::linear;
    std::size_t p1_end = 50;   // first epoch of phase 2
    std::size_t p2_end = 100;  // first epoch of phase 3

    // Phase boundaries at thirds of the horizon.
    static CurriculumSchedule defaults(std::size_t epochs);

    void validate() const;
};

// lambda(e): linear from lambda_start at epoch 0 to lambda_end at epoch E-1.
double lambda_at(const CurriculumSchedule& schedule, std::size_t epoch);

// 1-based phase index for an epoch.
int phase_for_epoch(const CurriculumSchedule& schedule, std::size_t epoch);

// Phase 1: text encoder frozen. Phase 2: everything trainable.
// Phase 3: both encoders frozen, fusion and classifier layers trainable.
FreezeMask stage_for_epoch(const CurriculumSchedule& schedule, std::size_t epoch);

// lambda * CE(fused, y) + (1 - lambda) * CE(image, y), batched mean form.
Tape::Var total_loss(Tape& tape, Tape::Var fused_logits, Tape::Var image_logits,
                     const std::vector<std::size_t>& labels, double lambda);

// Single-sample form.
Tape::Var total_loss(Tape& tape, Tape::Var fused_logits, Tape::Var image_logits, std::size_t label,
                     double lambda);

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs = 150;
    std::uint64_t seed = 42;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }
};

// One line of the training log, fixed field order.
struct EpochRecord {
    std::size_t epoch = 0;
    double lambda = 0.0;
    int phase = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;

    std::string to_line() const;
};

}  // namespace nbf
