#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace rdi {

// Single-file archive: magic + version, JSON header (configs, tensor table,
// RNG streams, power-iteration vectors), raw little-endian double payload.
struct CheckpointData {
  std::string model_config_json;
  std::string train_config_json;  // empty when absent
  int64_t iteration = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<double> opt_generator, opt_disc_image, opt_disc_depth;
  std::vector<std::vector<double>> power_disc_image, power_disc_depth;
  std::string rng_state;  // serialized engine streams
  std::vector<int> cursor_positions;
};

inline constexpr char kCheckpointMagic[8] = {'R', 'D', 'I', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData checkpoint_resume(const std::filesystem::path& path);

}  // namespace rdi
