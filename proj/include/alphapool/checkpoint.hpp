#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "alphapool/tensor.hpp"

namespace alphapool {

// Everything needed to resume training exactly: the run config, epochs
// completed, serialized RNG engines, parameter values and momentum buffers.
struct CheckpointData {
  std::string config_text;
  int epochs_done = 0;
  std::array<std::string, 3> rng_states;  // init, shuffle, augment
  std::vector<std::pair<std::string, std::vector<float>>> params;
  std::vector<std::pair<std::string, std::vector<float>>> velocities;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace alphapool
