#pragma once

// Command-line driver: preprocess | train | score | fuse | froc | gradcheck.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lungfpr/geometry.hpp"
#include "lungfpr/preprocess.hpp"

namespace lungfpr::cli {

struct RunConfig {
  std::filesystem::path data_dir = ".";
  std::filesystem::path output_dir = "out";
  std::vector<double> target_spacing{preprocess::kTargetSpacing.x, preprocess::kTargetSpacing.y,
                                     preprocess::kTargetSpacing.z};
  int model = 1;
  std::size_t batch_size = 32;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t fold = 0;
  std::size_t folds = 10;
  int fusion = 4;
  std::vector<int> members;  // overrides the fusion preset when nonempty
  // Zero keeps the full-width architecture.
  std::size_t conv_filters = 0;
  std::size_t hidden_units = 0;

  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
  Spacing spacing() const { return {target_spacing[0], target_spacing[1], target_spacing[2]}; }
};

// Artifact locations under RunConfig::output_dir.
std::filesystem::path patch_dir(const RunConfig& config);
std::filesystem::path checkpoint_path(const RunConfig& config);
std::filesystem::path history_path(const RunConfig& config);
std::filesystem::path scores_path(const std::filesystem::path& output_dir, int model, std::size_t fold);
std::filesystem::path fused_scores_path(const RunConfig& config);

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 2 for a missing or unknown subcommand, 1 for any other failure
/// (one diagnostic line on `err`).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lungfpr::cli
