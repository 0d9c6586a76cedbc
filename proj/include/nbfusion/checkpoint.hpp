// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nbfusion/tensor.hpp"

namespace nbf {

// NBCK, little-endian:
//   magic "NBCK" | metadata length u32 | metadata (JSON) | raw float64 payload
// Metadata lists tensor names and shapes in payload order, the precision,
// and a digest of the run configuration.
using MetaMap = std::map<std::string, std::string>;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const MetaMap& info, const std::string& config_digest);

struct LoadedCheckpoint {
    std::string precision;
    std::string config_digest;
    MetaMap info;
    std::vector<std::pair<std::string, Tensor>> tensors;  // payload order

    const Tensor* find(const std::string& name) const;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a digest used to tie checkpoints to their resolved configuration.
std::string digest_hex(const std::string& text);

}  // namespace nbf
