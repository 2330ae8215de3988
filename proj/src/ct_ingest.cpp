#include "lungfpr/ct_ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "binary_io.hpp"
#include "text_util.hpp"

namespace lungfpr::ingest {

using detail::parse_double;
using detail::parse_int;
using detail::trim;

std::size_t element_width(ElementType type) {
  switch (type) {
    case ElementType::Short: return 2;
    case ElementType::Float: return 4;
  }
  throw IngestError("unsupported ElementType");
}

void validate(const VolumeMeta& meta) {
  if (meta.dims.x < 1 || meta.dims.y < 1 || meta.dims.z < 1) {
    throw IngestError("volume dims must be >= 1 on every axis");
  }
  if (!(meta.spacing_mm.x > 0.0) || !(meta.spacing_mm.y > 0.0) || !(meta.spacing_mm.z > 0.0)) {
    throw IngestError("volume spacing must be > 0 on every axis");
  }
}

CtVolume::CtVolume(VolumeMeta meta, std::vector<double> voxels) : meta_(std::move(meta)), voxels_(std::move(voxels)) {
  validate(meta_);
  if (voxels_.size() != meta_.voxel_count()) {
    throw IngestError("voxel count " + std::to_string(voxels_.size()) + " does not match dims (" +
                      std::to_string(meta_.voxel_count()) + ")");
  }
  if (!std::all_of(voxels_.begin(), voxels_.end(), [](double v) { return std::isfinite(v); })) {
    throw IngestError("volume contains non-finite values");
  }
}

CtVolume::CtVolume(VolumeMeta meta, double fill) : meta_(std::move(meta)) {
  validate(meta_);
  if (!std::isfinite(fill)) throw IngestError("volume contains non-finite values");
  voxels_.assign(meta_.voxel_count(), fill);
}

namespace {

template <typename T, std::size_t N>
std::array<T, N> parse_triple(const std::string& key, std::string_view value) {
  const auto tokens = detail::split_whitespace(value);
  if (tokens.size() != N) {
    throw IngestError("malformed numeric token in " + key + ": expected " + std::to_string(N) + " values");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if constexpr (std::is_integral_v<T>) {
      const auto v = parse_int(tokens[i]);
      if (!v || *v < 1) throw IngestError("malformed numeric token in " + key + ": '" + std::string(tokens[i]) + "'");
      out[i] = static_cast<T>(*v);
    } else {
      const auto v = parse_double(tokens[i]);
      if (!v || !std::isfinite(*v)) {
        throw IngestError("malformed numeric token in " + key + ": '" + std::string(tokens[i]) + "'");
      }
      out[i] = *v;
    }
  }
  return out;
}

bool parse_bool_token(const std::string& key, std::string_view value) {
  const std::string v(trim(value));
  if (v == "True" || v == "true" || v == "1") return true;
  if (v == "False" || v == "false" || v == "0") return false;
  throw IngestError("invalid " + key + " token: '" + v + "'");
}

}  // namespace

VolumeMeta parse_mhd_header(std::string_view text) {
  std::map<std::string, std::string> fields;
  for (const auto line : detail::lines(text)) {
    const auto stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos) throw IngestError("header line is not 'Key = Value': '" + std::string(stripped) + "'");
    fields[std::string(trim(stripped.substr(0, eq)))] = std::string(trim(stripped.substr(eq + 1)));
  }

  const auto require = [&](std::initializer_list<const char*> names) -> std::pair<std::string, std::string> {
    for (const char* name : names) {
      if (auto it = fields.find(name); it != fields.end()) return *it;
    }
    throw IngestError(std::string("missing required key: ") + *names.begin());
  };

  if (auto it = fields.find("CompressedData"); it != fields.end() && parse_bool_token(it->first, it->second)) {
    throw IngestError("compressed MetaImage payloads are not supported");
  }

  VolumeMeta meta;
  {
    const auto [key, value] = require({"NDims"});
    const auto n = parse_int(value);
    if (!n) throw IngestError("malformed numeric token in NDims: '" + value + "'");
    if (*n != 3) throw IngestError("NDims must be 3, got " + value);
  }
  {
    const auto [key, value] = require({"DimSize"});
    const auto d = parse_triple<std::size_t, 3>(key, value);
    meta.dims = {d[0], d[1], d[2]};
  }
  {
    const auto [key, value] = require({"ElementSpacing"});
    const auto s = parse_triple<double, 3>(key, value);
    if (s[0] <= 0 || s[1] <= 0 || s[2] <= 0) throw IngestError("ElementSpacing must be positive: '" + value + "'");
    meta.spacing_mm = {s[0], s[1], s[2]};
  }
  {
    const auto [key, value] = require({"Offset", "Origin", "Position"});
    const auto o = parse_triple<double, 3>(key, value);
    meta.origin_mm = {o[0], o[1], o[2]};
  }
  {
    const auto [key, value] = require({"ElementType"});
    if (value == "MET_SHORT") {
      meta.element_type = ElementType::Short;
    } else if (value == "MET_FLOAT") {
      meta.element_type = ElementType::Float;
    } else {
      throw IngestError("unsupported ElementType: " + value);
    }
  }
  {
    const auto [key, value] = require({"ElementDataFile"});
    if (value.empty()) throw IngestError("missing required key: ElementDataFile");
    if (value == "LOCAL" || value == "LIST" || value.find('%') != std::string::npos) {
      throw IngestError("unsupported ElementDataFile: " + value);
    }
    meta.data_file = value;
  }
  // Either key set to True selects big-endian.
  for (const char* key : {"ElementByteOrderMSB", "BinaryDataByteOrderMSB"}) {
    if (auto it = fields.find(key); it != fields.end() && parse_bool_token("byte-order", it->second)) {
      meta.byte_order = ByteOrder::Big;
    }
  }
  return meta;
}

std::string format_mhd_header(const VolumeMeta& meta) {
  using detail::format_double;
  std::ostringstream os;
  os << "ObjectType = Image\n"
     << "NDims = 3\n"
     << "BinaryData = True\n"
     << "BinaryDataByteOrderMSB = " << (meta.byte_order == ByteOrder::Big ? "True" : "False") << "\n"
     << "CompressedData = False\n"
     << "Offset = " << format_double(meta.origin_mm.x) << ' ' << format_double(meta.origin_mm.y) << ' '
     << format_double(meta.origin_mm.z) << "\n"
     << "ElementSpacing = " << format_double(meta.spacing_mm.x) << ' ' << format_double(meta.spacing_mm.y) << ' '
     << format_double(meta.spacing_mm.z) << "\n"
     << "DimSize = " << meta.dims.x << ' ' << meta.dims.y << ' ' << meta.dims.z << "\n"
     << "ElementType = " << (meta.element_type == ElementType::Short ? "MET_SHORT" : "MET_FLOAT") << "\n"
     << "ElementDataFile = " << meta.data_file << "\n";
  return os.str();
}

namespace {

template <typename T>
T decode(const std::byte* p, ByteOrder order) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  const bool native_big = std::endian::native == std::endian::big;
  if ((order == ByteOrder::Big) != native_big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

template <typename T>
void encode(std::ostream& os, T v, ByteOrder order) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  const bool native_big = std::endian::native == std::endian::big;
  if ((order == ByteOrder::Big) != native_big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

}  // namespace

CtVolume load_volume(const VolumeMeta& meta, std::span<const std::byte> raw) {
  validate(meta);
  const std::size_t width = element_width(meta.element_type);
  const std::size_t expected = meta.voxel_count() * width;
  if (raw.size() != expected) {
    throw IngestError("length mismatch: payload has " + std::to_string(raw.size()) + " bytes, expected " +
                      std::to_string(expected));
  }
  std::vector<double> voxels(meta.voxel_count());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const std::byte* p = raw.data() + i * width;
    voxels[i] = meta.element_type == ElementType::Short ? static_cast<double>(decode<std::int16_t>(p, meta.byte_order))
                                                        : static_cast<double>(decode<float>(p, meta.byte_order));
  }
  return CtVolume(meta, std::move(voxels));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CtVolume read_metaimage(const std::filesystem::path& header_path) {
  const VolumeMeta meta = parse_mhd_header(read_text_file(header_path));
  const auto raw_path = header_path.parent_path() / meta.data_file;
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IngestError("cannot open payload " + raw_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_volume(meta, std::as_bytes(std::span<const char>(bytes)));
}

void write_metaimage(const std::filesystem::path& header_path, const CtVolume& volume) {
  const VolumeMeta& meta = volume.meta();
  if (meta.data_file.empty()) throw IngestError("meta.data_file is empty");
  {
    std::ofstream out(header_path, std::ios::binary);
    if (!out) throw IngestError("cannot write " + header_path.string());
    out << format_mhd_header(meta);
  }
  const auto raw_path = header_path.parent_path() / meta.data_file;
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + raw_path.string());
  for (double v : volume.voxels()) {
    if (meta.element_type == ElementType::Short) {
      const double r = std::clamp(std::round(v), double(std::numeric_limits<std::int16_t>::min()),
                                  double(std::numeric_limits<std::int16_t>::max()));
      encode(out, static_cast<std::int16_t>(r), meta.byte_order);
    } else {
      encode(out, static_cast<float>(v), meta.byte_order);
    }
  }
  if (!out) throw IngestError("short write to " + raw_path.string());
}

namespace {

struct CsvRow {
  std::size_t line_no;
  std::vector<std::string_view> cells;
};

std::vector<CsvRow> read_csv(std::string_view text, std::string_view expected_header) {
  const auto rows = detail::lines(text);
  if (rows.empty() || trim(rows.front()) != expected_header) {
    throw IngestError("wrong header: expected '" + std::string(expected_header) + "'");
  }
  std::vector<CsvRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (trim(rows[i]).empty()) continue;
    auto cells = detail::split(rows[i], ',');
    if (cells.size() != 5) {
      throw IngestError("line " + std::to_string(i + 1) + ": expected 5 columns, got " + std::to_string(cells.size()));
    }
    out.push_back({i + 1, std::move(cells)});
  }
  return out;
}

WorldPoint parse_point(const CsvRow& row) {
  std::array<double, 3> xyz{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto v = parse_double(row.cells[1 + k]);
    if (!v || !std::isfinite(*v)) {
      throw IngestError("line " + std::to_string(row.line_no) + ": non-numeric coordinate '" +
                        std::string(row.cells[1 + k]) + "'");
    }
    xyz[k] = *v;
  }
  return {xyz[0], xyz[1], xyz[2]};
}

}  // namespace

std::vector<CandidateRecord> parse_candidates_csv(std::string_view text) {
  std::vector<CandidateRecord> out;
  for (const auto& row : read_csv(text, "seriesuid,coordX,coordY,coordZ,class")) {
    CandidateRecord rec;
    rec.series_id = std::string(trim(row.cells[0]));
    rec.world_mm = parse_point(row);
    const auto label = parse_int(row.cells[4]);
    if (!label || (*label != 0 && *label != 1)) {
      throw IngestError("line " + std::to_string(row.line_no) + ": label must be 0 or 1, got '" +
                        std::string(trim(row.cells[4])) + "'");
    }
    rec.label = static_cast<int>(*label);
    rec.candidate_id = static_cast<std::int64_t>(out.size());
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<AnnotationRecord> parse_annotations_csv(std::string_view text, std::vector<std::string>* warnings) {
  std::vector<AnnotationRecord> out;
  for (const auto& row : read_csv(text, "seriesuid,coordX,coordY,coordZ,diameter_mm")) {
    AnnotationRecord rec;
    rec.series_id = std::string(trim(row.cells[0]));
    rec.world_mm = parse_point(row);
    const auto d = parse_double(row.cells[4]);
    if (!d || !(*d > 0.0) || !std::isfinite(*d)) {
      throw IngestError("line " + std::to_string(row.line_no) + ": diameter must be a positive number");
    }
    rec.diameter_mm = *d;
    if (warnings && (*d < 3.0 || *d > 34.0)) {
      warnings->push_back("line " + std::to_string(row.line_no) + ": diameter " + detail::format_double(*d) +
                          " mm is outside the expected 3-34 mm range");
    }
    rec.nodule_id = static_cast<std::int64_t>(out.size());
    out.push_back(std::move(rec));
  }
  return out;
}

VoxelPoint world_to_voxel(const VolumeMeta& meta, const WorldPoint& world_mm) {
  return {(world_mm.x - meta.origin_mm.x) / meta.spacing_mm.x, (world_mm.y - meta.origin_mm.y) / meta.spacing_mm.y,
          (world_mm.z - meta.origin_mm.z) / meta.spacing_mm.z};
}

std::vector<std::int64_t> assign_nodule_ids(std::span<const CandidateRecord> candidates,
                                            std::span<const AnnotationRecord> annotations) {
  std::int64_t next_id = 0;
  for (const auto& a : annotations) next_id = std::max(next_id, a.nodule_id + 1);

  std::vector<std::int64_t> ids(candidates.size(), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.label != 1) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : annotations) {
      if (a.series_id != c.series_id) continue;
      const double dx = c.world_mm.x - a.world_mm.x;
      const double dy = c.world_mm.y - a.world_mm.y;
      const double dz = c.world_mm.z - a.world_mm.z;
      const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (dist <= a.diameter_mm / 2.0 && dist < best) {
        best = dist;
        ids[i] = a.nodule_id;
      }
    }
    if (ids[i] < 0) ids[i] = next_id++;
  }
  return ids;
}

}  // namespace lungfpr::ingest
