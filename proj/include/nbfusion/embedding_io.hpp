// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nbfusion/encoders.hpp"

namespace nbf {

// NBEMB, little-endian:
//   magic "NBEM" | version u32 = 1 | count u32 | d_i u32 | d_t u32
//   per record: label u8 | noisy u8 | d_i float32 | d_t float32
// No padding. Unknown versions are rejected.
inline constexpr std::uint32_t kNbembVersion = 1;

void save_embeddings(const std::string& path, const std::vector<EmbeddingRecord>& records,
                     std::uint32_t d_i, std::uint32_t d_t);

struct EmbeddingDims {
    std::uint32_t d_i = 0;
    std::uint32_t d_t = 0;
};

// expected, when given, is validated against the header (config mismatch error).
std::vector<EmbeddingRecord> load_embeddings(const std::string& path,
                                             std::optional<EmbeddingDims> expected = std::nullopt,
                                             EmbeddingDims* dims_out = nullptr);

}  // namespace nbf
