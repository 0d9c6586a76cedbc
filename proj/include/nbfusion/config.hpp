// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "nbfusion/curriculum.hpp"
#include "nbfusion/synthdata.hpp"

namespace nbf {

// Model-variant switches mirroring the ablation rows.
struct AblationFlags {
    bool disable_text_branch = false;
    bool disable_visual_branch = false;
    bool disable_prmf = false;        // concatenation + affine instead of gated fusion
    bool disable_curriculum = false;  // lambda = 1 and no staged freezing
    bool disable_confidence = false;  // fixed alpha = 0.5
    // Pre-corrupts every text embedding before training/eval; stands in for
    // a weaker text source. 0 = off.
    double precorrupt_text_level = 0.0;

    void validate() const;
    bool operator==(const AblationFlags&) const = default;
};

// Everything a run needs: training, schedule, data generation, ablation
// switches and paths. Parsed from flat `key = value` files; unknown keys are
// hard errors.
struct RunConfig {
    TrainConfig train;
    SynthConfig synth;
    AblationFlags ablation;
    double lambda_start = 0.3;
    double lambda_end = 1.0;
    std::size_t p1_end = 0;  // 0 = epochs/3
    std::size_t p2_end = 0;  // 0 = 2*epochs/3
    bool separate_image_head = false;
    std::string data_dir;
    std::string out_dir;

    CurriculumSchedule resolved_schedule() const;
    void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Fully resolved `key = value` rendering; reparsing it reproduces the config.
std::string render_config(const RunConfig& config);

}  // namespace nbf
