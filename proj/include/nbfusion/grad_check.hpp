// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nbfusion/tape.hpp"

namespace nbf {

// Builds the scalar loss on the given tape, binding each entry of the map
// as a parameter (same names). The harness perturbs the map between calls.
using TapeFn = std::function<Tape::Var(Tape&, const ParamMap&)>;

struct GradCheckOptions {
    double eps = 1e-5;
    double tolerance = 1e-4;
    // 0 = check every coordinate. Otherwise a seeded subset per parameter,
    // for models too large to sweep exhaustively.
    std::size_t max_coords_per_param = 0;
    std::uint64_t coord_seed = 0x5eed;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    double eps = 0.0;
    double tolerance = 0.0;
    double max_rel_err = 0.0;
    bool pass = false;

    std::string to_string() const;
};

// Central-difference verification of tape gradients:
//   numeric = (f(theta + eps) - f(theta - eps)) / (2 eps)
// with relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const TapeFn& fn, const ParamMap& params,
                           const GradCheckOptions& opts = {});

}  // namespace nbf
