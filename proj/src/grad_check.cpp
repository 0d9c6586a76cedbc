// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nbfusion/errors.hpp"
#include "nbfusion/rng.hpp"

namespace nbf {

namespace {

double eval(const TapeFn& fn, const ParamMap& params) {
    Tape tape;
    const Tape::Var loss = fn(tape, params);
    const Tensor& v = tape.value(loss);
    if (v.size() != 1) throw ShapeError("grad_check: function must produce a scalar");
    if (!std::isfinite(v[0])) throw EvalError("grad_check: non-finite function value");
    return v[0];
}

}  // namespace

GradCheckReport grad_check(const TapeFn& fn, const ParamMap& params, const GradCheckOptions& opts) {
    if (opts.eps <= 0.0) throw ValueError("grad_check: eps must be positive");

    // Analytic pass.
    Tape tape;
    const Tape::Var loss = fn(tape, params);
    const Tensor& lv = tape.value(loss);
    if (lv.size() != 1) throw ShapeError("grad_check: function must produce a scalar");
    if (!std::isfinite(lv[0])) throw EvalError("grad_check: non-finite function value");
    const GradMap analytic = tape.backward(loss);

    GradCheckReport report;
    report.eps = opts.eps;
    report.tolerance = opts.tolerance;

    ParamMap work = params;
    for (const auto& [name, value] : params) {
        const auto it = analytic.find(name);
        if (it == analytic.end()) {
            throw Error("grad_check: function never bound parameter '" + name + "'");
        }
        const Tensor& grad = it->second;

        std::vector<std::size_t> coords(value.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (opts.max_coords_per_param > 0 && coords.size() > opts.max_coords_per_param) {
            Rng rng(mix64(opts.coord_seed) ^ mix64(std::hash<std::string>{}(name)));
            rng.shuffle(coords);
            coords.resize(opts.max_coords_per_param);
            std::sort(coords.begin(), coords.end());
        }

        GradCheckEntry entry;
        entry.name = name;
        entry.coords_checked = coords.size();
        Tensor& theta = work[name];
        for (std::size_t c : coords) {
            const double saved = theta[c];
            theta[c] = saved + opts.eps;
            const double fp = eval(fn, work);
            theta[c] = saved - opts.eps;
            const double fm = eval(fn, work);
            theta[c] = saved;
            const double numeric = (fp - fm) / (2.0 * opts.eps);
            const double denom = std::max({std::fabs(grad[c]), std::fabs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(grad[c] - numeric) / denom);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_param.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < opts.tolerance;
    return report;
}

std::string GradCheckReport::to_string() const {
    std::string out;
    char line[256];
    for (const auto& e : per_param) {
        std::snprintf(line, sizeof(line), "%-28s coords=%-6zu max_rel_err=%.3e\n", e.name.c_str(),
                      e.coords_checked, e.max_rel_err);
        out += line;
    }
    std::snprintf(line, sizeof(line), "eps=%.1e tolerance=%.1e max_rel_err=%.3e -> %s\n", eps, tolerance,
                  max_rel_err, pass ? "PASS" : "FAIL");
    out += line;
    return out;
}

}  // namespace nbf
