#pragma once

#include <string>

#include "model/model.hpp"

namespace sgsln::train {

// Checkpoint wire format (all integers little-endian):
//   magic "SGLN"
//   u32 version (currently 1)
//   u32 length + UTF-8 model-config echo (key = value lines)
//   u32 tensor count
//   per tensor: u32 name length + name bytes, u32 rank, u64 extents...,
//               raw little-endian f32 payload
// Loading rebuilds the model from the echoed config and verifies every
// tensor's name and shape before replacing any state, so a truncated or
// mismatched file leaves nothing partially applied.

void save_checkpoint(const std::string& path, const model::Model& m);

model::Model load_checkpoint(const std::string& path);

}  // namespace sgsln::train
