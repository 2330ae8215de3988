#pragma once

// Resampling, candidate-centred patch extraction, HU normalisation and the
// 16-fold flip/rotation augmentation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungfpr/ct_ingest.hpp"
#include "lungfpr/geometry.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::preprocess {

inline constexpr Spacing kTargetSpacing{0.7, 0.7, 1.0};
inline constexpr double kAirHu = -1000.0;
inline constexpr double kWindowLowHu = -1000.0;
inline constexpr double kWindowHighHu = 400.0;

/// Candidate-centred patch. `data` has shape {D, H, W} with values in [0, 1].
struct Patch {
  Tensor data;
  int label = 0;
  std::int64_t candidate_id = 0;
  std::optional<std::int64_t> nodule_id;  // present iff label == 1
  std::string series_id;
};

/// round-half-away-from-zero(dims * spacing_in / spacing_out) per axis, at least 1.
GridDims resampled_dims(const GridDims& dims, const Spacing& spacing_in, const Spacing& spacing_out);

/// Trilinear resampling onto `target_spacing`, keeping the origin. Output
/// sample i sits at input index i * target / input; positions past the last
/// input voxel take the edge value.
ingest::CtVolume resample(const ingest::CtVolume& volume, const Spacing& target_spacing);

/// Raw HU window of `size` voxels around round(center). For even extents the
/// centre voxel lands at index size/2. Voxels outside the volume read -1000 HU.
Tensor extract_patch(const ingest::CtVolume& volume, const VoxelPoint& center, Extent3 size);

/// Clamp to [-1000, 400] HU and map affinely onto [0, 1].
Tensor normalize_hu(Tensor raw);
float normalize_hu(double hu);

// Geometric transforms on a {D, H, W} tensor. rotate_z requires H == W.
Tensor rotate_z(const Tensor& patch, int quarter_turns);
Tensor flip_x(const Tensor& patch);
Tensor flip_z(const Tensor& patch);

/// R_z^k applied after F, for k = 0..3 (outer) and
/// F in {identity, flip_x, flip_z, flip_x*flip_z} (inner). Element 0 is the input.
std::vector<Tensor> augment16(const Tensor& patch);

// On-disk patch cache: one file per scan. Layout (little-endian):
//   "NDP1" | u32 series-id length | series id | u32 D | u32 H | u32 W | u32 count
//   count x { i64 candidate_id | u8 label | i64 nodule_id (-1 = none) }
//   count x D*H*W f32 values
struct PatchCache {
  std::string series_id;
  Extent3 extent;
  std::vector<Patch> patches;
};

void write_patch_cache(const std::filesystem::path& path, const std::string& series_id, Extent3 extent,
                       std::span<const Patch> patches);
PatchCache read_patch_cache(const std::filesystem::path& path);

}  // namespace lungfpr::preprocess
