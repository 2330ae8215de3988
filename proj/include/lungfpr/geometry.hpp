#pragma once

#include <cstddef>

namespace lungfpr {

// World and voxel coordinates are carried in (x, y, z) order, matching the
// MetaImage header and the candidate CSV columns. Grids are stored
// slice-major and indexed (z, y, x); conversion happens only where a
// coordinate is turned into a grid index.

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const WorldPoint&) const = default;
};

/// Continuous voxel coordinate; integer values fall on voxel centres.
struct VoxelPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const VoxelPoint&) const = default;
};

/// Per-axis millimetre spacing, (x, y, z).
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  bool operator==(const Spacing&) const = default;
};

/// Grid size in voxels, (x, y, z).
struct GridDims {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;

  std::size_t count() const { return x * y * z; }
  bool operator==(const GridDims&) const = default;
};

/// Patch / network input extent in tensor order: depth (z), height (y), width (x).
struct Extent3 {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const { return depth * height * width; }
  bool operator==(const Extent3&) const = default;
};

}  // namespace lungfpr
