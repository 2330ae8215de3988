#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lungfpr/model.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::train {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates mirror the parameter list; they are
/// allocated on the first step.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> first_moment;
  std::vector<BasicTensor<T>> second_moment;
};

/// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  t <- t+1;
/// p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               AdamState<T>& state);

template <typename T>
void adam_step(nn::ModelParams<T>& params, const nn::ModelParams<T>& grads, AdamState<T>& state);

}  // namespace lungfpr::train
