#pragma once

#include <cstdint>
#include <string>

#include "config.hpp"
#include "tensor.hpp"

namespace ocor {

// Binary weight container: magic, format version, config hash, optimizer
// step count, the canonical model-config text, then each parameter as
// name + shape + 32-bit little-endian values, in store order.
struct CheckpointHeader {
  uint64_t config_hash = 0;
  int64_t step_count = 0;
  std::string config_text;
};

void save_checkpoint(const std::string &path, const ModelConfig &config,
                     const ParamStore &params, int64_t step_count);

// Reads the header and fills `params` (which must already hold tensors of
// the recorded names and shapes). Throws std::runtime_error on a bad magic,
// unsupported version, hash mismatch, or shape mismatch.
CheckpointHeader load_checkpoint_header(const std::string &path);
CheckpointHeader load_checkpoint(const std::string &path, ParamStore &params);

}  // namespace ocor
