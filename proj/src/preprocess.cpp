#include "lungfpr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace lungfpr::preprocess {

using ingest::CtVolume;
using ingest::VolumeMeta;

namespace {

std::size_t resampled_extent(std::size_t n, double spacing_in, double spacing_out) {
  // std::round rounds half away from zero.
  const double r = std::round(static_cast<double>(n) * spacing_in / spacing_out);
  return r < 1.0 ? 1 : static_cast<std::size_t>(r);
}

struct AxisSample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<AxisSample> axis_samples(std::size_t n_out, std::size_t n_in, double spacing_in, double spacing_out) {
  const double step = spacing_out / spacing_in;
  std::vector<AxisSample> table(n_out);
  const double last = static_cast<double>(n_in - 1);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = std::min(static_cast<double>(i) * step, last);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n_in - 1);
    table[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return table;
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

GridDims resampled_dims(const GridDims& dims, const Spacing& in, const Spacing& out) {
  return {resampled_extent(dims.x, in.x, out.x), resampled_extent(dims.y, in.y, out.y),
          resampled_extent(dims.z, in.z, out.z)};
}

CtVolume resample(const CtVolume& volume, const Spacing& target) {
  const VolumeMeta& in = volume.meta();
  if (in.dims.x == 0 || in.dims.y == 0 || in.dims.z == 0) throw std::invalid_argument("resample: degenerate input volume");
  if (!(target.x > 0.0) || !(target.y > 0.0) || !(target.z > 0.0)) {
    throw std::invalid_argument("resample: target spacing must be positive");
  }

  VolumeMeta out_meta = in;
  out_meta.dims = resampled_dims(in.dims, in.spacing_mm, target);
  out_meta.spacing_mm = target;

  const auto xs = axis_samples(out_meta.dims.x, in.dims.x, in.spacing_mm.x, target.x);
  const auto ys = axis_samples(out_meta.dims.y, in.dims.y, in.spacing_mm.y, target.y);
  const auto zs = axis_samples(out_meta.dims.z, in.dims.z, in.spacing_mm.z, target.z);

  std::vector<double> out(out_meta.voxel_count());
  std::size_t idx = 0;
  for (const auto& sz : zs) {
    for (const auto& sy : ys) {
      for (const auto& sx : xs) {
        const auto plane = [&](std::size_t z) {
          const double top = lerp(volume.at(z, sy.lo, sx.lo), volume.at(z, sy.lo, sx.hi), sx.frac);
          const double bottom = lerp(volume.at(z, sy.hi, sx.lo), volume.at(z, sy.hi, sx.hi), sx.frac);
          return lerp(top, bottom, sy.frac);
        };
        out[idx++] = lerp(plane(sz.lo), plane(sz.hi), sz.frac);
      }
    }
  }
  return CtVolume(std::move(out_meta), std::move(out));
}

Tensor extract_patch(const CtVolume& volume, const VoxelPoint& center, Extent3 size) {
  if (size.depth == 0 || size.height == 0 || size.width == 0) throw std::invalid_argument("extract_patch: empty size");
  const auto cx = static_cast<std::int64_t>(std::llround(center.x));
  const auto cy = static_cast<std::int64_t>(std::llround(center.y));
  const auto cz = static_cast<std::int64_t>(std::llround(center.z));
  const std::int64_t x0 = cx - static_cast<std::int64_t>(size.width / 2);
  const std::int64_t y0 = cy - static_cast<std::int64_t>(size.height / 2);
  const std::int64_t z0 = cz - static_cast<std::int64_t>(size.depth / 2);
  const auto nx = static_cast<std::int64_t>(volume.nx());
  const auto ny = static_cast<std::int64_t>(volume.ny());
  const auto nz = static_cast<std::int64_t>(volume.nz());

  Tensor patch({size.depth, size.height, size.width}, static_cast<float>(kAirHu));
  std::size_t idx = 0;
  for (std::size_t d = 0; d < size.depth; ++d) {
    const std::int64_t z = z0 + static_cast<std::int64_t>(d);
    for (std::size_t h = 0; h < size.height; ++h) {
      const std::int64_t y = y0 + static_cast<std::int64_t>(h);
      for (std::size_t w = 0; w < size.width; ++w, ++idx) {
        const std::int64_t x = x0 + static_cast<std::int64_t>(w);
        if (z < 0 || z >= nz || y < 0 || y >= ny || x < 0 || x >= nx) continue;
        patch[idx] = static_cast<float>(
            volume.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
      }
    }
  }
  return patch;
}

float normalize_hu(double hu) {
  const double clamped = std::clamp(hu, kWindowLowHu, kWindowHighHu);
  return static_cast<float>((clamped - kWindowLowHu) / (kWindowHighHu - kWindowLowHu));
}

Tensor normalize_hu(Tensor raw) {
  for (float& v : raw) v = normalize_hu(static_cast<double>(v));
  return raw;
}

namespace {

void require_volume(const Tensor& t) {
  if (t.rank() != 3) throw std::invalid_argument("expected a {D, H, W} tensor, got " + shape_string(t.shape()));
}

}  // namespace

Tensor rotate_z(const Tensor& patch, int quarter_turns) {
  require_volume(patch);
  const std::size_t depth = patch.dim(0), n = patch.dim(1);
  if (patch.dim(2) != n) throw std::invalid_argument("rotate_z: height and width must be equal");
  Tensor cur = patch;
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    Tensor next(cur.shape());
    for (std::size_t z = 0; z < depth; ++z) {
      const std::size_t base = z * n * n;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) next[base + i * n + j] = cur[base + (n - 1 - j) * n + i];
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Tensor flip_x(const Tensor& patch) {
  require_volume(patch);
  const std::size_t w = patch.dim(2);
  Tensor out(patch.shape());
  for (std::size_t row = 0; row < patch.size() / w; ++row) {
    for (std::size_t x = 0; x < w; ++x) out[row * w + x] = patch[row * w + (w - 1 - x)];
  }
  return out;
}

Tensor flip_z(const Tensor& patch) {
  require_volume(patch);
  const std::size_t depth = patch.dim(0), slice = patch.dim(1) * patch.dim(2);
  Tensor out(patch.shape());
  for (std::size_t z = 0; z < depth; ++z) {
    std::copy_n(patch.data() + (depth - 1 - z) * slice, slice, out.data() + z * slice);
  }
  return out;
}

std::vector<Tensor> augment16(const Tensor& patch) {
  require_volume(patch);
  if (patch.dim(1) != patch.dim(2)) throw std::invalid_argument("augment16: height and width must be equal");
  const std::array<Tensor, 4> flipped{patch, flip_x(patch), flip_z(patch), flip_z(flip_x(patch))};
  std::vector<Tensor> out;
  out.reserve(16);
  for (int k = 0; k < 4; ++k) {
    for (const auto& f : flipped) out.push_back(rotate_z(f, k));
  }
  return out;
}

namespace {

constexpr char kCacheMagic[4] = {'N', 'D', 'P', '1'};

[[noreturn]] void cache_error(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("patch cache " + path.string() + ": " + what);
}

}  // namespace

void write_patch_cache(const std::filesystem::path& path, const std::string& series_id, Extent3 extent,
                       std::span<const Patch> patches) {
  using detail::write_le;
  const Shape expected{extent.depth, extent.height, extent.width};
  for (const auto& p : patches) {
    if (p.data.shape() != expected) cache_error(path, "patch shape " + shape_string(p.data.shape()) + " differs from cache extent");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) cache_error(path, "cannot open for writing");
  out.write(kCacheMagic, 4);
  detail::write_string(out, series_id);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent.depth));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent.height));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(extent.width));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(patches.size()));
  for (const auto& p : patches) {
    write_le<std::int64_t>(out, p.candidate_id);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.label));
    write_le<std::int64_t>(out, p.nodule_id.value_or(-1));
  }
  for (const auto& p : patches) {
    for (float v : p.data) write_le<float>(out, v);
  }
  if (!out) cache_error(path, "write failed");
}

PatchCache read_patch_cache(const std::filesystem::path& path) {
  using detail::read_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) cache_error(path, "cannot open");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCacheMagic)) cache_error(path, "bad magic");

  PatchCache cache;
  std::uint32_t d = 0, h = 0, w = 0, count = 0;
  if (!detail::read_string(in, cache.series_id) || !read_le(in, d) || !read_le(in, h) || !read_le(in, w) ||
      !read_le(in, count)) {
    cache_error(path, "truncated header");
  }
  if (d == 0 || h == 0 || w == 0) cache_error(path, "zero extent");
  cache.extent = {d, h, w};
  cache.patches.resize(count);
  for (auto& p : cache.patches) {
    std::uint8_t label = 0;
    std::int64_t nodule = -1;
    if (!read_le(in, p.candidate_id) || !read_le(in, label) || !read_le(in, nodule)) cache_error(path, "truncated manifest");
    if (label > 1) cache_error(path, "label outside {0,1}");
    p.label = label;
    if (nodule >= 0) p.nodule_id = nodule;
    p.series_id = cache.series_id;
  }
  for (auto& p : cache.patches) {
    std::vector<float> values(cache.extent.count());
    for (float& v : values) {
      if (!read_le(in, v)) cache_error(path, "truncated payload");
    }
    p.data = Tensor({d, h, w}, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) cache_error(path, "trailing bytes after payload");
  return cache;
}

}  // namespace lungfpr::preprocess
