#pragma once

// Checkpoint file layout (little-endian):
//
//   "NDL1"                         magic
//   u32 entry count
//   entry count x {
//     u32 name length, name bytes
//     u32 rank, rank x u32 dims
//     u64 element count            (must equal the product of dims)
//   }
//   payloads: f32 values of every entry, in manifest order
//
// Model checkpoints hold the eight tensors of ModelParams under their
// kNames; the architecture is recovered from the tensor shapes.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lungfpr/model.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::train {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
/// Throws CheckpointError("bad magic" / "shape manifest mismatch" / "truncated payload").
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

void save_checkpoint(const nn::ModelParams<float>& params, const std::filesystem::path& path);
nn::ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace lungfpr::train
