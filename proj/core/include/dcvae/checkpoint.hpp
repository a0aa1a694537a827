#pragma once

#include <map>
#include <string>

#include "dcvae/autodiff.hpp"

namespace dcvae {

// Checkpoint container: named tensors, bit-exact round trip.
// File layout: magic "DCVK1\0", u32 tensor count (LE), then per tensor:
// u16 name length, UTF-8 name, u8 rank, u32 extents, raw LE f32 data.
using TensorMap = std::map<std::string, Tensor>;

void save_tensors(const std::string& path, const TensorMap& tensors);
TensorMap load_tensors(const std::string& path);

// Replace values of `params` from the file; every parameter name must be
// present with a matching shape. Extra file entries are ignored.
void load_into_params(const TensorMap& tensors, ParamMap& params);

TensorMap params_to_tensors(const ParamMap& params);

}  // namespace dcvae
