#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm {

// Versioned flat binary container: a config blob plus named tensors.
// Round trips are bit-exact (raw IEEE-754 doubles, little-endian hosts).
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsfm
