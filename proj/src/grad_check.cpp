#include "lungfpr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace lungfpr::nn {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
}

GradCheckReport check_gradients(std::span<TensorD* const> params, std::span<const TensorD* const> analytic,
                                std::span<const std::string> names, const std::function<double()>& loss,
                                const GradCheckOptions& options, const std::function<bool()>& smooth) {
  if (params.size() != analytic.size() || params.size() != names.size()) {
    throw std::invalid_argument("check_gradients: parameter, gradient and name lists differ in length");
  }
  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    TensorD& p = *params[t];
    const TensorD& g = *analytic[t];
    if (p.shape() != g.shape()) {
      throw std::invalid_argument("check_gradients: gradient shape mismatch for " + names[t]);
    }
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    order.resize(std::min(order.size(), options.samples_per_tensor));

    for (std::size_t idx : order) {
      const double saved = p[idx];
      std::optional<double> numeric;
      for (double eps = options.epsilon; eps >= options.min_epsilon; eps /= 10.0) {
        p[idx] = saved + eps;
        const double up = loss();
        const bool up_ok = !smooth || smooth();
        p[idx] = saved - eps;
        const double down = loss();
        const bool down_ok = !smooth || smooth();
        p[idx] = saved;
        if (up_ok && down_ok) {
          numeric = (up - down) / (2.0 * eps);
          if (eps < options.epsilon) ++report.reduced_steps;
          break;
        }
      }
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      const double err = relative_error(g[idx], *numeric);
      ++report.checked;
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = names[t] + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return report;
}

GradCheckReport grad_check(ModelParams<double> params, const TensorD& batch, std::span<const int> labels,
                           const GradCheckOptions& options, const std::optional<DropoutMasks<double>>& masks) {
  DropoutMasks<double> fixed;
  if (masks) {
    fixed = *masks;
  } else {
    ModelSpec no_dropout = params.spec;
    no_dropout.dropout_rate = 0.0;
    Rng unused(0);
    fixed = draw_dropout_masks<double>(no_dropout, batch.dim(0), unused);
  }

  const ForwardTrace<double> trace = forward_train(params, batch, fixed);
  const ModelParams<double> grads = backward(params, trace, labels);

  // Activation pattern of the unperturbed point: ReLU signs and pool winners.
  const auto same_pattern = [](const ForwardTrace<double>& a, const ForwardTrace<double>& b) {
    const auto signs_equal = [](const TensorD& x, const TensorD& y) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        if ((x[i] > 0.0) != (y[i] > 0.0)) return false;
      }
      return true;
    };
    return signs_equal(a.conv1_pre, b.conv1_pre) && a.pool1.argmax == b.pool1.argmax &&
           signs_equal(a.conv2_pre, b.conv2_pre) && a.pool2.argmax == b.pool2.argmax &&
           signs_equal(a.hidden_pre, b.hidden_pre);
  };
  bool last_smooth = true;
  const auto loss = [&] {
    const auto probe = forward_train(params, batch, fixed);
    last_smooth = same_pattern(trace, probe);
    return cross_entropy(probe.probs, labels);
  };
  const auto smooth = [&] { return last_smooth; };
  const auto p = params.tensors();
  const auto g = grads.tensors();
  std::vector<std::string> names(ModelParams<double>::kNames.begin(), ModelParams<double>::kNames.end());
  return check_gradients(p, g, names, loss, options, smooth);
}

}  // namespace lungfpr::nn
