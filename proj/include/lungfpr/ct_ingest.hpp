#pragma once

// MetaImage (.mhd/.raw) volumes and LUNA16-style candidate/annotation lists.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lungfpr/geometry.hpp"

namespace lungfpr::ingest {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ElementType { Short, Float };  // MET_SHORT, MET_FLOAT
enum class ByteOrder { Little, Big };

std::size_t element_width(ElementType type);

struct VolumeMeta {
  GridDims dims;
  Spacing spacing_mm;
  WorldPoint origin_mm;
  ElementType element_type = ElementType::Short;
  ByteOrder byte_order = ByteOrder::Little;
  std::string data_file;

  std::size_t voxel_count() const { return dims.count(); }
  bool operator==(const VolumeMeta&) const = default;
};

/// Throws IngestError if dims or spacing are non-positive.
void validate(const VolumeMeta& meta);

/// CT raster in Hounsfield units, stored slice-major and indexed (z, y, x).
class CtVolume {
 public:
  CtVolume(VolumeMeta meta, std::vector<double> voxels);
  CtVolume(VolumeMeta meta, double fill);

  const VolumeMeta& meta() const { return meta_; }
  std::size_t nx() const { return meta_.dims.x; }
  std::size_t ny() const { return meta_.dims.y; }
  std::size_t nz() const { return meta_.dims.z; }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * ny() + y) * nx() + x; }
  double at(std::size_t z, std::size_t y, std::size_t x) const { return voxels_[index(z, y, x)]; }
  double& at(std::size_t z, std::size_t y, std::size_t x) { return voxels_[index(z, y, x)]; }

  std::span<const double> voxels() const { return voxels_; }
  std::span<double> voxels() { return voxels_; }

 private:
  VolumeMeta meta_;
  std::vector<double> voxels_;
};

struct CandidateRecord {
  std::string series_id;
  WorldPoint world_mm;
  int label = 0;  // 1 = nodule mark, 0 = false positive
  std::int64_t candidate_id = 0;

  bool operator==(const CandidateRecord&) const = default;
};

struct AnnotationRecord {
  std::string series_id;
  WorldPoint world_mm;
  double diameter_mm = 0.0;
  std::int64_t nodule_id = 0;

  bool operator==(const AnnotationRecord&) const = default;
};

// Header parsing. Required keys: NDims (= 3), DimSize, ElementSpacing,
// Offset (or Origin/Position), ElementType, ElementDataFile. Unknown keys
// are ignored.
VolumeMeta parse_mhd_header(std::string_view text);
std::string format_mhd_header(const VolumeMeta& meta);

/// Decodes a raw payload into HU values. `raw` must hold exactly
/// voxel_count * element_width bytes.
CtVolume load_volume(const VolumeMeta& meta, std::span<const std::byte> raw);

/// Reads `<name>.mhd` and the payload file it names (relative to the header).
CtVolume read_metaimage(const std::filesystem::path& header_path);
/// Writes header and payload side by side; the payload name comes from meta.data_file.
void write_metaimage(const std::filesystem::path& header_path, const CtVolume& volume);

/// Header `seriesuid,coordX,coordY,coordZ,class`; ids follow row order from 0.
std::vector<CandidateRecord> parse_candidates_csv(std::string_view text);

/// Header `seriesuid,coordX,coordY,coordZ,diameter_mm`; ids follow row order
/// from 0. Diameters outside [3, 34] mm are accepted and reported through
/// `warnings` when it is non-null.
std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text,
                                                    std::vector<std::string>* warnings = nullptr);

/// (world - origin) / spacing per axis, no clamping.
VoxelPoint world_to_voxel(const VolumeMeta& meta, const WorldPoint& world_mm);

/// Nodule id for every candidate: the nearest same-series annotation whose
/// radius covers the candidate; label-0 candidates get -1. Positive marks
/// with no covering annotation get a fresh id above every annotation id.
std::vector<std::int64_t> assign_nodule_ids(std::span<const CandidateRecord> candidates,
                                            std::span<const AnnotationRecord> annotations);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace lungfpr::ingest
