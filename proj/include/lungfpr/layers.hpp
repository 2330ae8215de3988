#pragma once

// Layer primitives with hand-written backward passes. Activations use the
// layout (N, C, D, H, W); dense inputs are (N, F). Everything is
// instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lungfpr/geometry.hpp"
#include "lungfpr/rng.hpp"
#include "lungfpr/tensor.hpp"

namespace lungfpr::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { Train, Eval };

// --- convolution ------------------------------------------------------------

/// Stride-1 cross-correlation with zero "same" padding (extent/2 per side).
/// input (N, C, D, H, W), kernels (F, C, kd, kh, kw) with odd extents, bias (F).
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias);

template <typename T>
struct Conv3dGradients {
  BasicTensor<T> input;  // empty when not requested
  BasicTensor<T> kernels;
  BasicTensor<T> bias;
};

template <typename T>
Conv3dGradients<T> conv3d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                   const BasicTensor<T>& grad_output, bool want_input_grad = true);

// --- pooling ----------------------------------------------------------------

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Flat input index of each output's maximum (first in row-major window order on ties).
  std::vector<std::size_t> argmax;
};

/// Non-overlapping max pooling, stride = window. Spatial dims must divide exactly.
template <typename T>
PoolResult<T> maxpool3d(const BasicTensor<T>& input, Extent3 window);

template <typename T>
BasicTensor<T> maxpool3d_backward(const BasicTensor<T>& grad_output, std::span<const std::size_t> argmax,
                                  const Shape& input_shape);

// --- dropout ----------------------------------------------------------------

/// Inverted-dropout mask: 1/(1-rate) with probability 1-rate, else 0.
template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng);

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  std::optional<BasicTensor<T>> mask;  // set in train mode
};

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, Mode mode, Rng& rng);

/// Elementwise product of equally sized tensors (shape taken from `a`).
template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b);

// --- dense / activations / loss ---------------------------------------------

/// input (N, F) x weights (F, U) + bias (U).
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <typename T>
struct DenseGradients {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
DenseGradients<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> relu(BasicTensor<T> x);

/// Passes grad where the forward input was positive.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& forward_input, BasicTensor<T> grad);

/// Row-wise softmax of (N, K) logits with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

inline constexpr double kProbabilityFloor = 1e-12;

/// -mean(log max(p[label], 1e-12)).
template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels);

/// d(mean cross-entropy)/d(logits) = (probs - onehot) / N.
template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::span<const int> labels);

}  // namespace lungfpr::nn
