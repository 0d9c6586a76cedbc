// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/rng.hpp"

#include <cmath>

namespace nbf {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // Box-Muller on (0,1] x [0,1) uniforms.
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
    // Rejection sampling over the widest multiple of n; unbiased and portable.
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

Rng Rng::spawn(std::uint64_t stream_id) const {
    std::mt19937_64 probe = engine_;  // copy; do not disturb the parent stream
    const std::uint64_t base = probe();
    return Rng(mix64(base ^ mix64(stream_id + 0x9e3779b97f4a7c15ull)));
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace nbf
