#pragma once

#include <string>

#include "json.hpp"
#include "mgtr/optim.hpp"

namespace mgtr {

// Single-file checkpoint: "MGTR" magic, u32 version, u64 manifest length, a
// JSON manifest (schema_version, config hash, epoch, metric snapshot, array
// directory), then the concatenated little-endian float32 payload.
struct CheckpointInfo {
  int epoch = 0;
  std::string config_hash;
  nlohmann::json metrics = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const CheckpointInfo& info);

// The store must already hold parameters with matching names and shapes;
// values are replaced by the stored float32 arrays widened to double.
CheckpointInfo load_checkpoint(const std::string& path, ParameterStore& params);

CheckpointInfo peek_checkpoint(const std::string& path);

// Rounds every parameter through float32, the precision checkpoints persist.
void round_params_to_f32(ParameterStore& params);

}  // namespace mgtr
