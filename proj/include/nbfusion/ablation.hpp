// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nbfusion/config.hpp"
#include "nbfusion/metrics.hpp"

namespace nbf {

// Fixed row set of the ablation table, leave-one-out variants first.
std::vector<std::string> ablation_row_names();

// Flags for one named row applied on top of a base configuration.
AblationFlags ablation_flags_for(const std::string& row_name, const AblationFlags& base);

struct AblationRow {
    std::string name;
    MetricsReport metrics;  // averaged over seeds
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::size_t seeds = 0;
    std::string table_text;
};

// Trains and evaluates every row on freshly generated data, one dataset and
// model per (row, seed), averaging metrics across seeds. Runs are mutually
// independent and may execute on several threads; results do not depend on
// the job count.
AblationResult run_ablation_suite(const RunConfig& base, std::size_t n_seeds, std::size_t jobs = 1);

std::string format_ablation_table(const AblationResult& result);

}  // namespace nbf
