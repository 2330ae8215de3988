#include "lungfpr/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lungfpr::nn {

namespace {

constexpr std::array<Extent3, kModelCount> kInputSizes{
    Extent3{12, 24, 24}, Extent3{18, 30, 30}, Extent3{24, 36, 36}, Extent3{30, 42, 42}, Extent3{36, 48, 48}};
constexpr std::array<std::size_t, kModelCount> kHiddenUnits{150, 250, 350, 400, 600};

std::string extent_string(Extent3 e) {
  return std::to_string(e.depth) + "x" + std::to_string(e.height) + "x" + std::to_string(e.width);
}

}  // namespace

std::span<const Extent3> table_input_sizes() { return kInputSizes; }

std::optional<int> model_id_for_input(Extent3 extent) {
  for (int i = 0; i < kModelCount; ++i) {
    if (kInputSizes[static_cast<std::size_t>(i)] == extent) return i + 1;
  }
  return std::nullopt;
}

ModelSpec ModelSpec::table(int model_id) {
  if (model_id < 1 || model_id > kModelCount) {
    throw std::invalid_argument("model id must be in 1..5, got " + std::to_string(model_id));
  }
  ModelSpec spec;
  spec.model_id = model_id;
  spec.input = kInputSizes[static_cast<std::size_t>(model_id - 1)];
  spec.hidden_units = kHiddenUnits[static_cast<std::size_t>(model_id - 1)];
  return spec;
}

ModelSpec ModelSpec::reduced(int model_id, std::size_t filters, std::size_t hidden) {
  ModelSpec spec = table(model_id);
  spec.conv1_filters = filters;
  spec.conv2_filters = filters;
  spec.hidden_units = hidden;
  return spec;
}

Extent3 ModelSpec::pooled_extent() const {
  return {input.depth / (pool1.depth * pool2.depth), input.height / (pool1.height * pool2.height),
          input.width / (pool1.width * pool2.width)};
}

std::size_t ModelSpec::flatten_size() const { return conv2_filters * pooled_extent().count(); }

bool ModelSpec::is_table_architecture() const {
  if (model_id < 1 || model_id > kModelCount) return false;
  return *this == table(model_id);
}

void ModelSpec::validate() const {
  const auto id = model_id_for_input(input);
  if (!id) throw std::invalid_argument("invalid input size " + extent_string(input));
  if (*id != model_id) {
    throw std::invalid_argument("input size " + extent_string(input) + " belongs to model " + std::to_string(*id) +
                                ", not model " + std::to_string(model_id));
  }
  const auto divides = [](std::size_t n, std::size_t w) { return w > 0 && n % w == 0; };
  if (!divides(input.depth, pool1.depth * pool2.depth) || !divides(input.height, pool1.height * pool2.height) ||
      !divides(input.width, pool1.width * pool2.width)) {
    throw std::invalid_argument("input size " + extent_string(input) + " is not divisible by the pooling windows");
  }
  if (kernel.depth % 2 == 0 || kernel.height % 2 == 0 || kernel.width % 2 == 0) {
    throw std::invalid_argument("kernel extents must be odd for same padding");
  }
  if (conv1_filters == 0 || conv2_filters == 0 || hidden_units == 0 || output_units != 2) {
    throw std::invalid_argument("filter counts and hidden width must be positive with two outputs");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

std::array<Shape, 8> parameter_shapes(const ModelSpec& spec) {
  const Extent3& k = spec.kernel;
  return {Shape{spec.conv1_filters, 1, k.depth, k.height, k.width},
          Shape{spec.conv1_filters},
          Shape{spec.conv2_filters, spec.conv1_filters, k.depth, k.height, k.width},
          Shape{spec.conv2_filters},
          Shape{spec.flatten_size(), spec.hidden_units},
          Shape{spec.hidden_units},
          Shape{spec.hidden_units, spec.output_units},
          Shape{spec.output_units}};
}

template <typename T>
ModelParams<T> zero_params(const ModelSpec& spec) {
  spec.validate();
  const auto shapes = parameter_shapes(spec);
  ModelParams<T> p;
  p.spec = spec;
  auto tensors = p.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i] = BasicTensor<T>(shapes[i]);
  return p;
}

template <typename T>
ModelParams<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams<T> p = zero_params<T>(spec);
  Rng rng(seed);
  const auto init = [&rng](BasicTensor<T>& w, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  };
  const std::size_t taps = spec.kernel.count();
  init(p.conv1_kernels, taps);
  init(p.conv2_kernels, spec.conv1_filters * taps);
  init(p.dense1_weights, spec.flatten_size());
  init(p.dense2_weights, spec.hidden_units);
  return p;
}

namespace {

std::pair<Shape, Shape> mask_shapes(const ModelSpec& s, std::size_t batch) {
  const Extent3 p2 = s.pooled_extent();
  return {Shape{batch, s.conv1_filters, s.input.depth / s.pool1.depth, s.input.height / s.pool1.height,
                s.input.width / s.pool1.width},
          Shape{batch, s.conv2_filters, p2.depth, p2.height, p2.width}};
}

}  // namespace

template <typename T>
DropoutMasks<T> draw_dropout_masks(const ModelSpec& spec, std::size_t batch, Rng& rng) {
  const auto [shape1, shape2] = mask_shapes(spec, batch);
  auto first = dropout_mask<T>(shape1, spec.dropout_rate, rng);
  auto second = dropout_mask<T>(shape2, spec.dropout_rate, rng);
  return {std::move(first), std::move(second)};
}

namespace {

template <typename T>
void check_batch(const ModelSpec& spec, const BasicTensor<T>& batch) {
  const Extent3& in = spec.input;
  if (batch.rank() != 5 || batch.dim(1) != 1 || batch.dim(2) != in.depth || batch.dim(3) != in.height ||
      batch.dim(4) != in.width) {
    throw ShapeError("batch shape " + shape_string(batch.shape()) + " does not match model input (N,1," +
                     extent_string(in) + ")");
  }
}

// Shared forward. With masks == nullptr dropout is the identity (eval mode).
template <typename T>
ForwardTrace<T> run_forward(const ModelParams<T>& p, const BasicTensor<T>& batch, const DropoutMasks<T>* masks) {
  check_batch(p.spec, batch);
  const std::size_t n = batch.dim(0);
  ForwardTrace<T> t;
  t.conv1_pre = conv3d(batch, p.conv1_kernels, p.conv1_bias);
  t.pool1 = maxpool3d(relu(t.conv1_pre), p.spec.pool1);
  t.drop1 = masks ? hadamard(t.pool1.output, masks->after_pool1) : t.pool1.output;
  t.conv2_pre = conv3d(t.drop1, p.conv2_kernels, p.conv2_bias);
  t.pool2 = maxpool3d(relu(t.conv2_pre), p.spec.pool2);
  t.flat = (masks ? hadamard(t.pool2.output, masks->after_pool2) : t.pool2.output).reshaped({n, p.spec.flatten_size()});
  t.hidden_pre = dense(t.flat, p.dense1_weights, p.dense1_bias);
  t.hidden = relu(t.hidden_pre);
  t.logits = dense(t.hidden, p.dense2_weights, p.dense2_bias);
  t.probs = softmax(t.logits);
  return t;
}

}  // namespace

template <typename T>
BasicTensor<T> predict(const ModelParams<T>& params, const BasicTensor<T>& batch) {
  check_batch(params.spec, batch);
  // One sample at a time: the forward has no cross-sample reductions, and the
  // first conv activation of a full batch is large.
  const std::size_t n = batch.dim(0);
  const std::size_t per_sample = batch.size() / n;
  const std::size_t classes = params.spec.output_units;
  BasicTensor<T> probs({n, classes});
  for (std::size_t i = 0; i < n; ++i) {
    Shape one = batch.shape();
    one[0] = 1;
    BasicTensor<T> sample(std::move(one), std::vector<T>(batch.data() + i * per_sample, batch.data() + (i + 1) * per_sample));
    const BasicTensor<T> p = run_forward<T>(params, sample, nullptr).probs;
    std::copy(p.begin(), p.end(), probs.data() + i * classes);
  }
  return probs;
}

template <typename T>
ForwardTrace<T> forward_train(const ModelParams<T>& params, const BasicTensor<T>& batch, DropoutMasks<T> masks) {
  check_batch(params.spec, batch);
  const auto [shape1, shape2] = mask_shapes(params.spec, batch.dim(0));
  if (masks.after_pool1.shape() != shape1 || masks.after_pool2.shape() != shape2) {
    throw ShapeError("dropout mask shapes do not match the batch");
  }
  ForwardTrace<T> t = run_forward<T>(params, batch, &masks);
  t.input = batch;
  t.masks = std::move(masks);
  return t;
}

template <typename T>
ForwardTrace<T> forward_train(const ModelParams<T>& params, const BasicTensor<T>& batch, Rng& rng) {
  check_batch(params.spec, batch);
  return forward_train(params, batch, draw_dropout_masks<T>(params.spec, batch.dim(0), rng));
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const BasicTensor<T>& batch, Mode mode, Rng& rng) {
  if (mode == Mode::Eval) return {predict(params, batch), std::nullopt};
  ForwardTrace<T> trace = forward_train(params, batch, rng);
  BasicTensor<T> probs = trace.probs;
  return {std::move(probs), std::move(trace)};
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& p, const ForwardTrace<T>& t, std::span<const int> labels) {
  ModelParams<T> g;
  g.spec = p.spec;

  const BasicTensor<T> d_logits = softmax_cross_entropy_grad(t.probs, labels);
  auto d2 = dense_backward(t.hidden, p.dense2_weights, d_logits);
  g.dense2_weights = std::move(d2.weights);
  g.dense2_bias = std::move(d2.bias);

  auto d1 = dense_backward(t.flat, p.dense1_weights, relu_backward(t.hidden_pre, std::move(d2.input)));
  g.dense1_weights = std::move(d1.weights);
  g.dense1_bias = std::move(d1.bias);

  BasicTensor<T> d_pool2 = hadamard(d1.input.reshaped(t.pool2.output.shape()), t.masks.after_pool2);
  BasicTensor<T> d_conv2 = relu_backward(t.conv2_pre, maxpool3d_backward(d_pool2, t.pool2.argmax, t.conv2_pre.shape()));
  auto c2 = conv3d_backward(t.drop1, p.conv2_kernels, d_conv2, true);
  g.conv2_kernels = std::move(c2.kernels);
  g.conv2_bias = std::move(c2.bias);

  BasicTensor<T> d_pool1 = hadamard(c2.input, t.masks.after_pool1);
  BasicTensor<T> d_conv1 = relu_backward(t.conv1_pre, maxpool3d_backward(d_pool1, t.pool1.argmax, t.conv1_pre.shape()));
  auto c1 = conv3d_backward(t.input, p.conv1_kernels, d_conv1, false);
  g.conv1_kernels = std::move(c1.kernels);
  g.conv1_bias = std::move(c1.bias);
  return g;
}

#define LUNGFPR_INSTANTIATE_MODEL(T)                                                                         \
  template ModelParams<T> zero_params<T>(const ModelSpec&);                                                  \
  template ModelParams<T> build_model<T>(const ModelSpec&, std::uint64_t);                                   \
  template DropoutMasks<T> draw_dropout_masks<T>(const ModelSpec&, std::size_t, Rng&);                       \
  template BasicTensor<T> predict(const ModelParams<T>&, const BasicTensor<T>&);                             \
  template ForwardTrace<T> forward_train(const ModelParams<T>&, const BasicTensor<T>&, Rng&);                \
  template ForwardTrace<T> forward_train(const ModelParams<T>&, const BasicTensor<T>&, DropoutMasks<T>);     \
  template ForwardResult<T> forward(const ModelParams<T>&, const BasicTensor<T>&, Mode, Rng&);               \
  template ModelParams<T> backward(const ModelParams<T>&, const ForwardTrace<T>&, std::span<const int>);

LUNGFPR_INSTANTIATE_MODEL(float)
LUNGFPR_INSTANTIATE_MODEL(double)

#undef LUNGFPR_INSTANTIATE_MODEL

}  // namespace lungfpr::nn
