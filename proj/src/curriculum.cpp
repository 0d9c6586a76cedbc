// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/curriculum.hpp"

#include <algorithm>
#include <cstdio>

#include "nbfusion/errors.hpp"

namespace nbf {

CurriculumSchedule CurriculumSchedule::defaults(std::size_t epochs) {
    CurriculumSchedule s;
    s.total_epochs = epochs;
    s.p1_end = std::max<std::size_t>(1, epochs / 3);
    s.p2_end = std::max(s.p1_end + 1, 2 * epochs / 3);
    s.p2_end = std::min(s.p2_end, epochs);
    s.validate();
    return s;
}

void CurriculumSchedule::validate() const {
    if (total_epochs < 2) throw ConfigError("schedule: at least two epochs required");
    if (!(p1_end > 0 && p1_end < p2_end && p2_end <= total_epochs)) {
        throw ConfigError("schedule: phase boundaries must satisfy 0 < p1_end < p2_end <= epochs");
    }
    if (!(lambda_start >= 0.0 && lambda_start <= lambda_end && lambda_end <= 1.0)) {
        throw ConfigError("schedule: need 0 <= lambda_start <= lambda_end <= 1");
    }
}

double lambda_at(const CurriculumSchedule& schedule, std::size_t epoch) {
    if (epoch >= schedule.total_epochs) {
        throw IndexError("lambda_at: epoch " + std::to_string(epoch) + " out of range [0, " +
                         std::to_string(schedule.total_epochs) + ")");
    }
    // Exact anchors at both ends of the horizon.
    if (epoch == 0) return schedule.lambda_start;
    if (epoch == schedule.total_epochs - 1) return schedule.lambda_end;
    const double t = static_cast<double>(epoch) / static_cast<double>(schedule.total_epochs - 1);
    const double v = schedule.lambda_start + (schedule.lambda_end - schedule.lambda_start) * t;
    return std::clamp(v, schedule.lambda_start, schedule.lambda_end);
}

int phase_for_epoch(const CurriculumSchedule& schedule, std::size_t epoch) {
    if (epoch >= schedule.total_epochs) {
        throw IndexError("phase_for_epoch: epoch " + std::to_string(epoch) + " out of range");
    }
    if (epoch < schedule.p1_end) return 1;
    if (epoch < schedule.p2_end) return 2;
    return 3;
}

FreezeMask stage_for_epoch(const CurriculumSchedule& schedule, std::size_t epoch) {
    FreezeMask mask;
    switch (phase_for_epoch(schedule, epoch)) {
        case 1:
            mask.text_encoder = false;
            break;
        case 2:
            break;
        case 3:
            mask.visual_encoder = false;
            mask.text_encoder = false;
            break;
    }
    // Invariant: fusion/classifier layers never freeze, so some group trains.
    if (mask.trainable_count() == 0) throw Error("stage_for_epoch: no trainable group");
    return mask;
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ValueError("total_loss: lambda " + std::to_string(lambda) + " outside [0,1]");
    }
}

}  // namespace

Tape::Var total_loss(Tape& tape, Tape::Var fused_logits, Tape::Var image_logits,
                     const std::vector<std::size_t>& labels, double lambda) {
    check_lambda(lambda);
    Tape::Var ce_fused = tape.softmax_cross_entropy_mean(fused_logits, labels);
    Tape::Var ce_image = tape.softmax_cross_entropy_mean(image_logits, labels);
    return tape.add(tape.scale(ce_fused, lambda), tape.scale(ce_image, 1.0 - lambda));
}

Tape::Var total_loss(Tape& tape, Tape::Var fused_logits, Tape::Var image_logits, std::size_t label,
                     double lambda) {
    check_lambda(lambda);
    Tape::Var ce_fused = tape.softmax_cross_entropy(fused_logits, label);
    Tape::Var ce_image = tape.softmax_cross_entropy(image_logits, label);
    return tape.add(tape.scale(ce_fused, lambda), tape.scale(ce_image, 1.0 - lambda));
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (epochs < 2) throw ConfigError("train: at least two epochs required");
}

std::string EpochRecord::to_line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch=%zu lambda=%.6f phase=%d train_loss=%.6f val_acc=%.6f",
                  epoch, lambda, phase, train_loss, val_acc);
    return buf;
}

}  // namespace nbf
