#pragma once

// Independent reference implementations used only by tests. Each one is the
// most literal loop nest for its definition, with no shared code from src/.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "lungfpr/ct_ingest.hpp"
#include "lungfpr/froc.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::oracle {

inline WorldPoint voxel_to_world(const ingest::VolumeMeta& meta, const VoxelPoint& v) {
  return {meta.origin_mm.x + v.x * meta.spacing_mm.x, meta.origin_mm.y + v.y * meta.spacing_mm.y,
          meta.origin_mm.z + v.z * meta.spacing_mm.z};
}

/// Zero-padded "same" cross-correlation, one output element at a time.
inline TensorD reference_conv3d(const TensorD& in, const TensorD& k, const TensorD& b) {
  const std::size_t N = in.dim(0), C = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
  const std::size_t F = k.dim(0), KD = k.dim(2), KH = k.dim(3), KW = k.dim(4);
  const long pd = static_cast<long>(KD / 2), ph = static_cast<long>(KH / 2), pw = static_cast<long>(KW / 2);
  TensorD out({N, F, D, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            double acc = b[f];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t a = 0; a < KD; ++a)
                for (std::size_t bb = 0; bb < KH; ++bb)
                  for (std::size_t e = 0; e < KW; ++e) {
                    const long iz = static_cast<long>(z + a) - pd;
                    const long iy = static_cast<long>(y + bb) - ph;
                    const long ix = static_cast<long>(x + e) - pw;
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= long(D) || iy >= long(H) || ix >= long(W)) continue;
                    acc += k[(((f * C + c) * KD + a) * KH + bb) * KW + e] *
                           in[(((n * C + c) * D + iz) * H + iy) * W + ix];
                  }
            out[(((n * F + f) * D + z) * H + y) * W + x] = acc;
          }
  return out;
}

template <typename T>
BasicTensor<T> reference_maxpool(const BasicTensor<T>& in, std::size_t wd, std::size_t wh, std::size_t ww) {
  const std::size_t N = in.dim(0), C = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
  BasicTensor<T> out({N, C, D / wd, H / wh, W / ww});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t z = 0; z < D / wd; ++z)
        for (std::size_t y = 0; y < H / wh; ++y)
          for (std::size_t x = 0; x < W / ww; ++x) {
            T best = in[(((n * C + c) * D + z * wd) * H + y * wh) * W + x * ww];
            for (std::size_t a = 0; a < wd; ++a)
              for (std::size_t b = 0; b < wh; ++b)
                for (std::size_t e = 0; e < ww; ++e)
                  best = std::max(best, in[(((n * C + c) * D + z * wd + a) * H + y * wh + b) * W + x * ww + e]);
            out[(((n * C + c) * (D / wd) + z) * (H / wh) + y) * (W / ww) + x] = best;
          }
  return out;
}

/// FROC by full rescan at every distinct threshold.
inline std::vector<eval::FrocPoint> brute_force_froc(const std::vector<eval::ScoredCandidate>& scored,
                                                     std::size_t n_scans) {
  std::set<double, std::greater<>> thresholds;
  std::set<std::int64_t> nodules;
  for (const auto& c : scored) {
    thresholds.insert(c.score);
    if (c.nodule_id) nodules.insert(*c.nodule_id);
  }
  std::vector<eval::FrocPoint> points;
  for (double t : thresholds) {
    std::set<std::int64_t> hit;
    std::size_t fp = 0;
    for (const auto& c : scored) {
      if (c.score < t) continue;
      if (c.nodule_id) {
        hit.insert(*c.nodule_id);
      } else {
        ++fp;
      }
    }
    points.push_back({t, static_cast<double>(fp) / static_cast<double>(n_scans),
                      static_cast<double>(hit.size()) / static_cast<double>(nodules.size())});
  }
  return points;
}

/// The 16 images of voxel (z, y, x) under {z-flip} x (dihedral group of the
/// n x n square in the (y, x) plane).
inline std::set<std::array<std::size_t, 3>> symmetry_orbit(std::size_t depth, std::size_t n, std::size_t z,
                                                           std::size_t y, std::size_t x) {
  std::set<std::array<std::size_t, 3>> orbit;
  for (std::size_t zz : {z, depth - 1 - z}) {
    for (std::size_t yy : {y, n - 1 - y}) {
      for (std::size_t xx : {x, n - 1 - x}) {
        orbit.insert({zz, yy, xx});
        orbit.insert({zz, xx, yy});
      }
    }
  }
  return orbit;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lungfpr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(std::move(shape));
  for (T& v : t) v = static_cast<T>(dist(gen));
  return t;
}

}  // namespace lungfpr::oracle
