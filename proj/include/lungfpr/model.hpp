#pragma once

// The five candidate classifiers. Every model shares the layer stack
//
//   conv(3x5x5, same) -> ReLU -> maxpool(3) -> dropout
//   conv(3x5x5, same) -> ReLU -> maxpool(2) -> dropout
//   dense(hidden) -> ReLU -> dense(2) -> softmax
//
// and differs only in input extent and hidden width.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungfpr/geometry.hpp"
#include "lungfpr/layers.hpp"
#include "lungfpr/rng.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::nn {

inline constexpr int kModelCount = 5;

struct ModelSpec {
  int model_id = 1;
  Extent3 input;
  std::size_t conv1_filters = 64;
  std::size_t conv2_filters = 64;
  Extent3 kernel{3, 5, 5};
  Extent3 pool1{3, 3, 3};
  Extent3 pool2{2, 2, 2};
  double dropout_rate = 0.2;
  std::size_t hidden_units = 0;
  std::size_t output_units = 2;

  /// Architecture `model_id` (1..5) at full width.
  static ModelSpec table(int model_id);
  /// Same input extent with narrower convolutions and hidden layer, for desk-scale runs.
  static ModelSpec reduced(int model_id, std::size_t filters = 2, std::size_t hidden = 5);

  /// Spatial extent after both pools.
  Extent3 pooled_extent() const;
  std::size_t flatten_size() const;
  /// True when filters and hidden width match the full-size table entry.
  bool is_table_architecture() const;

  /// Throws std::invalid_argument("invalid input size ...") etc.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Input extents of models 1..5, in order.
std::span<const Extent3> table_input_sizes();
/// Model id whose input extent equals `extent`, if any.
std::optional<int> model_id_for_input(Extent3 extent);

template <typename T>
struct ModelParams {
  ModelSpec spec;
  BasicTensor<T> conv1_kernels;   // (F1, 1, 3, 5, 5)
  BasicTensor<T> conv1_bias;      // (F1)
  BasicTensor<T> conv2_kernels;   // (F2, F1, 3, 5, 5)
  BasicTensor<T> conv2_bias;      // (F2)
  BasicTensor<T> dense1_weights;  // (flatten, hidden)
  BasicTensor<T> dense1_bias;     // (hidden)
  BasicTensor<T> dense2_weights;  // (hidden, 2)
  BasicTensor<T> dense2_bias;     // (2)

  static constexpr std::array<const char*, 8> kNames{"conv1.kernels", "conv1.bias",   "conv2.kernels",
                                                     "conv2.bias",    "dense1.weights", "dense1.bias",
                                                     "dense2.weights", "dense2.bias"};

  std::array<BasicTensor<T>*, 8> tensors() {
    return {&conv1_kernels, &conv1_bias, &conv2_kernels, &conv2_bias,
            &dense1_weights, &dense1_bias, &dense2_weights, &dense2_bias};
  }
  std::array<const BasicTensor<T>*, 8> tensors() const {
    return {&conv1_kernels, &conv1_bias, &conv2_kernels, &conv2_bias,
            &dense1_weights, &dense1_bias, &dense2_weights, &dense2_bias};
  }

  template <typename U>
  ModelParams<U> cast() const {
    return {spec,
            conv1_kernels.template cast<U>(),
            conv1_bias.template cast<U>(),
            conv2_kernels.template cast<U>(),
            conv2_bias.template cast<U>(),
            dense1_weights.template cast<U>(),
            dense1_bias.template cast<U>(),
            dense2_weights.template cast<U>(),
            dense2_bias.template cast<U>()};
  }

  bool operator==(const ModelParams&) const = default;
};

/// Parameter shapes implied by `spec`, in ModelParams::kNames order.
std::array<Shape, 8> parameter_shapes(const ModelSpec& spec);

/// Weights/kernels ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero.
template <typename T>
ModelParams<T> build_model(const ModelSpec& spec, std::uint64_t seed);

/// All-zero tensors with the shapes of `spec` (gradient accumulator).
template <typename T>
ModelParams<T> zero_params(const ModelSpec& spec);

/// Dropout masks for the two dropout layers of one batch.
template <typename T>
struct DropoutMasks {
  BasicTensor<T> after_pool1;
  BasicTensor<T> after_pool2;
};

template <typename T>
DropoutMasks<T> draw_dropout_masks(const ModelSpec& spec, std::size_t batch, Rng& rng);

/// Cached activations of a train-mode forward pass.
template <typename T>
struct ForwardTrace {
  BasicTensor<T> input;
  BasicTensor<T> conv1_pre;
  PoolResult<T> pool1;
  BasicTensor<T> drop1;
  BasicTensor<T> conv2_pre;
  PoolResult<T> pool2;
  BasicTensor<T> flat;  // dropout-2 output viewed as (N, flatten)
  BasicTensor<T> hidden_pre;
  BasicTensor<T> hidden;
  BasicTensor<T> logits;
  BasicTensor<T> probs;
  DropoutMasks<T> masks;
};

/// Eval-mode forward: batch (N, 1, D, H, W) -> probabilities (N, 2).
template <typename T>
BasicTensor<T> predict(const ModelParams<T>& params, const BasicTensor<T>& batch);

/// Train-mode forward drawing fresh dropout masks from `rng`.
template <typename T>
ForwardTrace<T> forward_train(const ModelParams<T>& params, const BasicTensor<T>& batch, Rng& rng);

/// Train-mode forward with caller-supplied masks.
template <typename T>
ForwardTrace<T> forward_train(const ModelParams<T>& params, const BasicTensor<T>& batch, DropoutMasks<T> masks);

template <typename T>
struct ForwardResult {
  BasicTensor<T> probs;
  std::optional<ForwardTrace<T>> trace;  // present iff mode == Train
};

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const BasicTensor<T>& batch, Mode mode, Rng& rng);

/// Gradients of the mean cross-entropy of `trace.probs` against `labels`.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardTrace<T>& trace, std::span<const int> labels);

}  // namespace lungfpr::nn
