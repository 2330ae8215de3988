#include "lungfpr/froc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "text_util.hpp"

namespace lungfpr::eval {

FrocCurve compute_froc(std::span<const ScoredCandidate> scored, std::size_t n_scans) {
  if (n_scans == 0) throw std::invalid_argument("compute_froc: n_scans must be >= 1");
  std::set<std::int64_t> nodules;
  for (const auto& c : scored) {
    if (!std::isfinite(c.score)) throw std::invalid_argument("compute_froc: non-finite score");
    if (c.nodule_id) nodules.insert(*c.nodule_id);
  }
  if (nodules.empty()) throw std::invalid_argument("compute_froc: no positives, sensitivity undefined");

  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });

  FrocCurve curve;
  curve.n_scans = n_scans;
  curve.n_nodules = nodules.size();
  std::unordered_set<std::int64_t> detected;
  std::size_t false_positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scored[order[i]].score;
    for (; i < order.size() && scored[order[i]].score == t; ++i) {
      const auto& c = scored[order[i]];
      if (c.nodule_id) {
        detected.insert(*c.nodule_id);
      } else {
        ++false_positives;
      }
    }
    curve.points.push_back({t, static_cast<double>(false_positives) / static_cast<double>(n_scans),
                            static_cast<double>(detected.size()) / static_cast<double>(curve.n_nodules)});
  }
  return curve;
}

double sensitivity_at(const FrocCurve& curve, double fp_rate) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fp_per_scan <= fp_rate) best = std::max(best, p.sensitivity);
  }
  return best;
}

std::array<double, 7> operating_sensitivities(const FrocCurve& curve) {
  std::array<double, 7> out{};
  for (std::size_t i = 0; i < kOperatingPoints.size(); ++i) out[i] = sensitivity_at(curve, kOperatingPoints[i]);
  return out;
}

double cpm(const FrocCurve& curve) {
  const auto s = operating_sensitivities(curve);
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

std::vector<std::filesystem::path> emit_report(std::span<const FrocCurve> curves, std::span<const std::string> labels,
                                               const std::filesystem::path& dir) {
  using detail::format_double;
  if (curves.empty()) throw std::invalid_argument("emit_report: no curves");
  if (curves.size() != labels.size()) throw std::invalid_argument("emit_report: one label per curve required");
  for (const auto& label : labels) {
    if (label.empty() || label.find_first_of(",/\\\n") != std::string::npos) {
      throw std::invalid_argument("emit_report: label '" + label + "' is not a valid file/CSV token");
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  const auto open = [](const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
  };

  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto path = dir / ("froc_" + labels[i] + ".csv");
    auto out = open(path);
    out << "threshold,fp_per_scan,sensitivity\n";
    for (const auto& p : curves[i].points) {
      out << format_double(p.threshold) << ',' << format_double(p.fp_per_scan) << ',' << format_double(p.sensitivity)
          << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
    written.push_back(path);
  }

  const auto summary = dir / "summary.csv";
  auto out = open(summary);
  out << "label";
  for (double r : kOperatingPoints) out << ",s" << format_double(r);
  out << ",cpm\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    out << labels[i];
    for (double s : operating_sensitivities(curves[i])) out << ',' << format_double(s);
    out << ',' << format_double(cpm(curves[i])) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + summary.string());
  written.push_back(summary);
  return written;
}

}  // namespace lungfpr::eval
