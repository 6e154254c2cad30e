#pragma once

#include <string>
#include <vector>

#include "vtr/tensor.hpp"

namespace vtr::core {

// Single-file binary container of named float64 tensors.
//
// Layout (all integers little-endian):
//   magic   4 bytes  "VTCK"
//   version u8       currently 1
//   count   u32      number of entries
//   entry*  count times:
//     name_len u16, name bytes (no terminator)
//     ndim     u8,  extents ndim x u32
//     payload  product(extents) x f64 little-endian
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace vtr::core
