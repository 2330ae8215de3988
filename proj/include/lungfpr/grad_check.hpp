#pragma once

// Central-difference verification of analytic gradients (double precision).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungfpr/model.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::nn {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// When a step crosses a non-differentiable point (see `smooth`), the entry
  /// is retried with the step divided by 10, down to this value.
  double min_epsilon = 1e-8;
  /// Entries checked per parameter tensor (all entries when the tensor is smaller).
  std::size_t samples_per_tensor = 24;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  /// Entries compared with a step below `epsilon` because of a kink.
  std::size_t reduced_steps = 0;
  /// Entries left out because every step down to min_epsilon crossed a kink.
  std::size_t skipped = 0;
};

/// |a - n| / max(|a| + |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Generic check: `loss` is re-evaluated after perturbing entries of
/// `params[i]` in place; `analytic[i]` holds dloss/dparams[i]. If given,
/// `smooth` is called right after each loss evaluation and must return false
/// when the perturbed point lies in a different piecewise-smooth region
/// (a ReLU sign or max-pool winner changed).
GradCheckReport check_gradients(std::span<TensorD* const> params, std::span<const TensorD* const> analytic,
                                std::span<const std::string> names, const std::function<double()>& loss,
                                const GradCheckOptions& options, const std::function<bool()>& smooth = {});

/// Full-model check of forward_train/backward on `batch`. With `masks`
/// unset, dropout is held off (all-ones masks); otherwise the given masks
/// are reused for every loss evaluation. Steps that flip a ReLU or change a
/// max-pool winner are retried with a smaller step.
GradCheckReport grad_check(ModelParams<double> params, const TensorD& batch, std::span<const int> labels,
                           const GradCheckOptions& options = {},
                           const std::optional<DropoutMasks<double>>& masks = std::nullopt);

}  // namespace lungfpr::nn
