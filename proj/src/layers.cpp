#include "lungfpr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lungfpr::nn {

namespace {

void expect_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(shape));
  }
}

// Valid output range [lo, hi) along one axis for kernel tap k with padding pad.
struct Range {
  std::size_t lo;
  std::size_t hi;
};

Range tap_range(std::size_t extent, std::size_t k, std::size_t pad) {
  // Output o reads input o + k - pad; require 0 <= o + k - pad < extent.
  const std::size_t lo = k < pad ? pad - k : 0;
  const std::size_t hi = k > pad ? (extent > k - pad ? extent - (k - pad) : 0) : extent;
  return {lo, std::max(lo, hi)};
}

struct ConvGeometry {
  std::size_t n, c, f, d, h, w, kd, kh, kw, pd, ph, pw;
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& kernels) {
  expect_rank(input.shape(), 5, "conv3d input");
  expect_rank(kernels.shape(), 5, "conv3d kernels");
  ConvGeometry g{input.dim(0),   input.dim(1),   kernels.dim(0), input.dim(2), input.dim(3), input.dim(4),
                 kernels.dim(2), kernels.dim(3), kernels.dim(4), 0,            0,            0};
  if (kernels.dim(1) != g.c) {
    throw ShapeError("conv3d: channel mismatch, input has " + std::to_string(g.c) + " channels, kernels expect " +
                     std::to_string(kernels.dim(1)));
  }
  if (g.kd % 2 == 0 || g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("conv3d: kernel extents must be odd");
  g.pd = g.kd / 2;
  g.ph = g.kh / 2;
  g.pw = g.kw / 2;
  return g;
}

}  // namespace

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, kernels);
  if (bias.rank() != 1 || bias.dim(0) != g.f) throw ShapeError("conv3d: bias must have shape (F)");

  BasicTensor<T> out({g.n, g.f, g.d, g.h, g.w});
  const std::size_t vol = g.d * g.h * g.w;
  const std::size_t ksize = g.kd * g.kh * g.kw;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t f = 0; f < g.f; ++f) {
      T* o = out.data() + (n * g.f + f) * vol;
      std::fill(o, o + vol, bias[f]);
      for (std::size_t c = 0; c < g.c; ++c) {
        const T* in = input.data() + (n * g.c + c) * vol;
        const T* k = kernels.data() + (f * g.c + c) * ksize;
        for (std::size_t a = 0; a < g.kd; ++a) {
          const Range rz = tap_range(g.d, a, g.pd);
          for (std::size_t b = 0; b < g.kh; ++b) {
            const Range ry = tap_range(g.h, b, g.ph);
            for (std::size_t e = 0; e < g.kw; ++e) {
              const Range rx = tap_range(g.w, e, g.pw);
              const T wgt = k[(a * g.kh + b) * g.kw + e];
              if (wgt == T{0}) continue;
              for (std::size_t z = rz.lo; z < rz.hi; ++z) {
                for (std::size_t y = ry.lo; y < ry.hi; ++y) {
                  T* orow = o + (z * g.h + y) * g.w + rx.lo;
                  const T* irow = in + ((z + a - g.pd) * g.h + (y + b - g.ph)) * g.w + (rx.lo + e - g.pw);
                  for (std::size_t i = 0; i < rx.hi - rx.lo; ++i) orow[i] += wgt * irow[i];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Conv3dGradients<T> conv3d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                   const BasicTensor<T>& grad_output, bool want_input_grad) {
  const ConvGeometry g = conv_geometry(input, kernels);
  if (grad_output.shape() != Shape{g.n, g.f, g.d, g.h, g.w}) {
    throw ShapeError("conv3d_backward: grad_output shape " + shape_string(grad_output.shape()));
  }
  Conv3dGradients<T> grads;
  grads.kernels = BasicTensor<T>(kernels.shape());
  grads.bias = BasicTensor<T>({g.f});
  if (want_input_grad) grads.input = BasicTensor<T>(input.shape());

  const std::size_t vol = g.d * g.h * g.w;
  const std::size_t ksize = g.kd * g.kh * g.kw;
  for (std::size_t f = 0; f < g.f; ++f) {
    double bias_acc = 0.0;
    for (std::size_t n = 0; n < g.n; ++n) {
      const T* go = grad_output.data() + (n * g.f + f) * vol;
      for (std::size_t i = 0; i < vol; ++i) bias_acc += go[i];
    }
    grads.bias[f] = static_cast<T>(bias_acc);

    for (std::size_t c = 0; c < g.c; ++c) {
      T* gk = grads.kernels.data() + (f * g.c + c) * ksize;
      const T* k = kernels.data() + (f * g.c + c) * ksize;
      for (std::size_t a = 0; a < g.kd; ++a) {
        const Range rz = tap_range(g.d, a, g.pd);
        for (std::size_t b = 0; b < g.kh; ++b) {
          const Range ry = tap_range(g.h, b, g.ph);
          for (std::size_t e = 0; e < g.kw; ++e) {
            const Range rx = tap_range(g.w, e, g.pw);
            const std::size_t tap = (a * g.kh + b) * g.kw + e;
            const T wgt = k[tap];
            T acc{0};
            for (std::size_t n = 0; n < g.n; ++n) {
              const T* go = grad_output.data() + (n * g.f + f) * vol;
              const T* in = input.data() + (n * g.c + c) * vol;
              T* gin = want_input_grad ? grads.input.data() + (n * g.c + c) * vol : nullptr;
              for (std::size_t z = rz.lo; z < rz.hi; ++z) {
                for (std::size_t y = ry.lo; y < ry.hi; ++y) {
                  const T* grow = go + (z * g.h + y) * g.w + rx.lo;
                  const std::size_t in_off = ((z + a - g.pd) * g.h + (y + b - g.ph)) * g.w + (rx.lo + e - g.pw);
                  const T* irow = in + in_off;
                  const std::size_t len = rx.hi - rx.lo;
                  for (std::size_t i = 0; i < len; ++i) acc += grow[i] * irow[i];
                  if (gin != nullptr && wgt != T{0}) {
                    T* girow = gin + in_off;
                    for (std::size_t i = 0; i < len; ++i) girow[i] += wgt * grow[i];
                  }
                }
              }
            }
            gk[tap] = acc;
          }
        }
      }
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool3d(const BasicTensor<T>& input, Extent3 window) {
  expect_rank(input.shape(), 5, "maxpool3d input");
  const std::size_t nc = input.dim(0) * input.dim(1);
  const std::size_t d = input.dim(2), h = input.dim(3), w = input.dim(4);
  if (window.depth == 0 || window.height == 0 || window.width == 0 || d % window.depth || h % window.height ||
      w % window.width) {
    throw ShapeError("maxpool3d: non-divisible dims " + shape_string(input.shape()) + " for window (" +
                     std::to_string(window.depth) + "," + std::to_string(window.height) + "," +
                     std::to_string(window.width) + ")");
  }
  const std::size_t od = d / window.depth, oh = h / window.height, ow = w / window.width;
  PoolResult<T> result{BasicTensor<T>({input.dim(0), input.dim(1), od, oh, ow}), {}};
  result.argmax.resize(result.output.size());

  std::size_t out_idx = 0;
  for (std::size_t plane = 0; plane < nc; ++plane) {
    const std::size_t base = plane * d * h * w;
    for (std::size_t z = 0; z < od; ++z) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
          std::size_t best_idx = base + ((z * window.depth) * h + y * window.height) * w + x * window.width;
          T best = input[best_idx];
          for (std::size_t a = 0; a < window.depth; ++a) {
            for (std::size_t b = 0; b < window.height; ++b) {
              const std::size_t row = base + ((z * window.depth + a) * h + (y * window.height + b)) * w + x * window.width;
              for (std::size_t e = 0; e < window.width; ++e) {
                if (input[row + e] > best) {
                  best = input[row + e];
                  best_idx = row + e;
                }
              }
            }
          }
          result.output[out_idx] = best;
          result.argmax[out_idx] = best_idx;
        }
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> maxpool3d_backward(const BasicTensor<T>& grad_output, std::span<const std::size_t> argmax,
                                  const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) throw ShapeError("maxpool3d_backward: argmax/grad size mismatch");
  BasicTensor<T> grad_input(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_output[i];
  return grad_input;
}

template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  const double keep = 1.0 - rate;
  const T scale = static_cast<T>(1.0 / keep);
  BasicTensor<T> mask(shape);
  if (rate == 0.0) {
    mask.fill(T{1});
    return mask;
  }
  for (T& m : mask) m = rng.bernoulli(keep) ? scale : T{0};
  return mask;
}

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("hadamard: size mismatch");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (mode == Mode::Eval) return {input, std::nullopt};
  auto mask = dropout_mask<T>(input.shape(), rate, rng);
  auto out = hadamard(input, mask);
  return {std::move(out), std::move(mask)};
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
  expect_rank(input.shape(), 2, "dense input");
  expect_rank(weights.shape(), 2, "dense weights");
  const std::size_t n = input.dim(0), f = input.dim(1), u = weights.dim(1);
  if (weights.dim(0) != f || bias.rank() != 1 || bias.dim(0) != u) {
    throw ShapeError("dense: shape mismatch input " + shape_string(input.shape()) + " weights " +
                     shape_string(weights.shape()) + " bias " + shape_string(bias.shape()));
  }
  BasicTensor<T> out({n, u});
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data() + i * u;
    std::copy(bias.begin(), bias.end(), o);
    const T* in = input.data() + i * f;
    for (std::size_t j = 0; j < f; ++j) {
      const T v = in[j];
      if (v == T{0}) continue;
      const T* wrow = weights.data() + j * u;
      for (std::size_t k = 0; k < u; ++k) o[k] += v * wrow[k];
    }
  }
  return out;
}

template <typename T>
DenseGradients<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                 const BasicTensor<T>& grad_output) {
  const std::size_t n = input.dim(0), f = input.dim(1), u = weights.dim(1);
  if (grad_output.shape() != Shape{n, u}) throw ShapeError("dense_backward: grad_output shape mismatch");
  DenseGradients<T> g{BasicTensor<T>({n, f}), BasicTensor<T>({f, u}), BasicTensor<T>({u})};
  for (std::size_t i = 0; i < n; ++i) {
    const T* go = grad_output.data() + i * u;
    const T* in = input.data() + i * f;
    T* gi = g.input.data() + i * f;
    for (std::size_t k = 0; k < u; ++k) g.bias[k] += go[k];
    for (std::size_t j = 0; j < f; ++j) {
      const T* wrow = weights.data() + j * u;
      T* gwrow = g.weights.data() + j * u;
      T acc{0};
      const T v = in[j];
      for (std::size_t k = 0; k < u; ++k) {
        acc += go[k] * wrow[k];
        gwrow[k] += v * go[k];
      }
      gi[j] = acc;
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(BasicTensor<T> x) {
  for (T& v : x) v = v > T{0} ? v : T{0};
  return x;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& forward_input, BasicTensor<T> grad) {
  if (forward_input.size() != grad.size()) throw ShapeError("relu_backward: size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(forward_input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  expect_rank(logits.shape(), 2, "softmax logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    std::vector<double> e(k);
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(row[j]) - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = static_cast<T>(e[j] / sum);
  }
  return out;
}

namespace {

template <typename T>
void check_labels(const BasicTensor<T>& probs, std::span<const int> labels) {
  expect_rank(probs.shape(), 2, "probabilities");
  if (labels.size() != probs.dim(0)) throw ShapeError("label count does not match batch size");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= probs.dim(1)) throw ShapeError("label out of range");
  }
}

}  // namespace

template <typename T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  const std::size_t k = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::max(static_cast<double>(probs[i * k + static_cast<std::size_t>(labels[i])]), kProbabilityFloor);
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  BasicTensor<T> grad = probs;
  for (std::size_t i = 0; i < n; ++i) grad[i * k + static_cast<std::size_t>(labels[i])] -= T{1};
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
  for (T& g : grad) g *= inv_n;
  return grad;
}

#define LUNGFPR_INSTANTIATE_LAYERS(T)                                                                              \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
  template Conv3dGradients<T> conv3d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                              bool);                                                               \
  template PoolResult<T> maxpool3d(const BasicTensor<T>&, Extent3);                                                \
  template BasicTensor<T> maxpool3d_backward(const BasicTensor<T>&, std::span<const std::size_t>, const Shape&);   \
  template BasicTensor<T> dropout_mask<T>(const Shape&, double, Rng&);                                             \
  template DropoutResult<T> dropout(const BasicTensor<T>&, double, Mode, Rng&);                                    \
  template BasicTensor<T> hadamard(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);             \
  template DenseGradients<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> relu(BasicTensor<T>);                                                                    \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, BasicTensor<T>);                                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                          \
  template double cross_entropy(const BasicTensor<T>&, std::span<const int>);                                      \
  template BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>&, std::span<const int>);

LUNGFPR_INSTANTIATE_LAYERS(float)
LUNGFPR_INSTANTIATE_LAYERS(double)

#undef LUNGFPR_INSTANTIATE_LAYERS

}  // namespace lungfpr::nn
