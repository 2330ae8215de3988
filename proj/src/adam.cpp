#include "lungfpr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lungfpr::train {

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  const AdamConfig& c = state.config;
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw std::invalid_argument("adam_step: betas must lie in [0, 1)");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape()) {
      throw std::invalid_argument("adam_step: shape mismatch " + shape_string(params[i]->shape()) + " vs " +
                                  shape_string(grads[i]->shape()));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state was created for a different parameter list");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& p = *params[i];
    const BasicTensor<T>& g = *grads[i];
    BasicTensor<T>& m = state.first_moment[i];
    BasicTensor<T>& v = state.second_moment[i];
    if (m.shape() != p.shape()) throw std::invalid_argument("adam_step: moment shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      p[j] = static_cast<T>(p[j] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

template <typename T>
void adam_step(nn::ModelParams<T>& params, const nn::ModelParams<T>& grads, AdamState<T>& state) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  adam_step<T>(std::span<BasicTensor<T>* const>(p), std::span<const BasicTensor<T>* const>(g), state);
}

template void adam_step<float>(std::span<Tensor* const>, std::span<const Tensor* const>, AdamState<float>&);
template void adam_step<double>(std::span<TensorD* const>, std::span<const TensorD* const>, AdamState<double>&);
template void adam_step<float>(nn::ModelParams<float>&, const nn::ModelParams<float>&, AdamState<float>&);
template void adam_step<double>(nn::ModelParams<double>&, const nn::ModelParams<double>&, AdamState<double>&);

}  // namespace lungfpr::train
