#pragma once

// FROC analysis: threshold sweep, operating-point sensitivities and CPM.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lungfpr/scoring.hpp"

namespace lungfpr::eval {

/// False positives per scan at which sensitivities are averaged into the CPM.
inline constexpr std::array<double, 7> kOperatingPoints{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

struct FrocPoint {
  double threshold = 0.0;
  double fp_per_scan = 0.0;
  double sensitivity = 0.0;

  bool operator==(const FrocPoint&) const = default;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // descending threshold
  std::size_t n_scans = 0;
  std::size_t n_nodules = 0;
};

/// One point per distinct score t (descending). A nodule is detected at t
/// when any of its candidates scores >= t; false positives are negative
/// candidates scoring >= t. Throws if no candidate carries a nodule id.
FrocCurve compute_froc(std::span<const ScoredCandidate> scored, std::size_t n_scans);

/// Best sensitivity among points with fp_per_scan <= fp_rate; 0 if none.
double sensitivity_at(const FrocCurve& curve, double fp_rate);

std::array<double, 7> operating_sensitivities(const FrocCurve& curve);

/// Mean of the seven operating-point sensitivities.
double cpm(const FrocCurve& curve);

/// Writes `froc_<label>.csv` (threshold,fp_per_scan,sensitivity) per curve and
/// `summary.csv` (label,s0.125,...,s8,cpm) into `dir`. Returns written paths.
std::vector<std::filesystem::path> emit_report(std::span<const FrocCurve> curves, std::span<const std::string> labels,
                                               const std::filesystem::path& dir);

}  // namespace lungfpr::eval
