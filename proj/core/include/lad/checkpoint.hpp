#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lad/nn.hpp"
#include "lad/tensor.hpp"

namespace lad {

// Binary tensor container. Layout: 8-byte magic "LADCKPT1", entry count,
// then per entry: name length, UTF-8 name, rank, extents, raw values.
// All integers are unsigned 64-bit little-endian; values are 64-bit floats.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

void save_params(const std::string& path, const ParamSet& params);

// Overwrites values of an existing ParamSet; names and shapes must match
// exactly in both directions.
void load_params(const std::string& path, ParamSet& params);

}  // namespace lad
