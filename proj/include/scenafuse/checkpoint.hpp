// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scenafuse/tensor.hpp"

namespace scenafuse {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// "SCNF" container: magic, version u32, count u32, then per entry
/// (name length u16, UTF-8 name, rank u8, extents u64, f64 data), all
/// little-endian. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::string& path);

/// Copies checkpoint values into matching destination tensors in place.
/// Throws if a name is missing or a shape differs.
void restore_into(const NamedTensors& loaded, const NamedTensors& dest);

}  // namespace scenafuse
