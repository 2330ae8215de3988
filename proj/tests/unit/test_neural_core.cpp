#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lungfpr/grad_check.hpp"
#include "lungfpr/layers.hpp"
#include "lungfpr/model.hpp"
#include "oracles.hpp"

using namespace lungfpr;
using namespace lungfpr::nn;

namespace {

double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TensorD random_batch(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return oracle::random_tensor<double>({n, 1, spec.input.depth, spec.input.height, spec.input.width}, gen, 0.0, 1.0);
}

}  // namespace

TEST(TensorBasics, RejectsBadShapes) {
  EXPECT_THROW(Tensor({2, 0, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), std::invalid_argument);
  const Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).dim(0), 3u);
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
}

TEST(Conv3d, ZeroKernelGivesZero) {
  std::mt19937_64 gen(1);
  const auto in = oracle::random_tensor<double>({2, 1, 4, 6, 6}, gen);
  const auto out = conv3d(in, TensorD({3, 1, 3, 5, 5}), TensorD({3}));
  EXPECT_EQ(out.shape(), (Shape{2, 3, 4, 6, 6}));
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(Conv3d, DeltaKernelIsIdentityIncludingBorders) {
  std::mt19937_64 gen(2);
  const auto in = oracle::random_tensor<double>({1, 1, 3, 4, 5}, gen);
  TensorD k({1, 1, 3, 5, 5});
  k[(1 * 5 + 2) * 5 + 2] = 1.0;
  EXPECT_EQ(conv3d(in, k, TensorD({1})), in);
}

TEST(Conv3d, MatchesReferenceSingleChannel) {
  std::mt19937_64 gen(3);
  const auto in = oracle::random_tensor<double>({1, 1, 4, 6, 6}, gen);
  const auto k = oracle::random_tensor<double>({2, 1, 3, 5, 5}, gen);
  const auto b = oracle::random_tensor<double>({2}, gen);
  EXPECT_LT(max_abs_diff(conv3d(in, k, b), oracle::reference_conv3d(in, k, b)), 1e-10);
}

TEST(Conv3d, MatchesReferenceRandomInstances) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<std::size_t> small(1, 3), side(1, 8);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = small(gen), c = small(gen), f = small(gen);
    const std::size_t kd = 2 * small(gen) - 1, kh = 2 * small(gen) - 1, kw = 2 * small(gen) - 1;
    const auto in = oracle::random_tensor<double>({n, c, side(gen), side(gen), side(gen)}, gen);
    const auto k = oracle::random_tensor<double>({f, c, kd, kh, kw}, gen);
    const auto b = oracle::random_tensor<double>({f}, gen);
    ASSERT_LT(max_abs_diff(conv3d(in, k, b), oracle::reference_conv3d(in, k, b)), 1e-10) << "trial " << trial;
  }
}

TEST(Conv3d, ChannelMismatch) {
  EXPECT_THROW(conv3d(TensorD({1, 2, 3, 3, 3}), TensorD({1, 1, 3, 3, 3}), TensorD({1})), ShapeError);
  EXPECT_THROW(conv3d(TensorD({1, 1, 3, 3, 3}), TensorD({1, 1, 2, 3, 3}), TensorD({1})), ShapeError);
}

TEST(MaxPool, ConstantAndCountingInputs) {
  const auto c = maxpool3d(TensorD({1, 2, 6, 6, 6}, 3.0), {3, 3, 3});
  EXPECT_EQ(c.output.shape(), (Shape{1, 2, 2, 2, 2}));
  for (double v : c.output) EXPECT_EQ(v, 3.0);

  const auto r = maxpool3d(TensorD({1, 1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}), {2, 2, 2});
  ASSERT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], 8.0);
  EXPECT_EQ(r.argmax[0], 7u);
}

TEST(MaxPool, MatchesBruteForce) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_tensor<double>({2, 3, 6, 6, 6}, gen);
    EXPECT_EQ(maxpool3d(in, {3, 3, 3}).output, oracle::reference_maxpool(in, 3, 3, 3));
    EXPECT_EQ(maxpool3d(in, {2, 2, 2}).output, oracle::reference_maxpool(in, 2, 2, 2));
  }
}

TEST(MaxPool, TiesRouteToFirstIndex) {
  const auto r = maxpool3d(TensorD({1, 1, 2, 2, 2}, 1.0), {2, 2, 2});
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(MaxPool, NonDivisibleDims) {
  EXPECT_THROW(maxpool3d(TensorD({1, 1, 4, 6, 6}), {3, 3, 3}), ShapeError);
}

TEST(MaxPool, BackwardConservesMassOnArgmaxes) {
  std::mt19937_64 gen(6);
  const auto in = oracle::random_tensor<double>({1, 2, 6, 6, 6}, gen);
  const auto fwd = maxpool3d(in, {3, 3, 3});
  const auto g = oracle::random_tensor<double>(fwd.output.shape(), gen);
  const auto back = maxpool3d_backward(g, fwd.argmax, in.shape());
  EXPECT_NEAR(std::accumulate(back.begin(), back.end(), 0.0), std::accumulate(g.begin(), g.end(), 0.0), 1e-12);
  std::set<std::size_t> winners(fwd.argmax.begin(), fwd.argmax.end());
  for (std::size_t i = 0; i < back.size(); ++i) {
    if (!winners.count(i)) EXPECT_EQ(back[i], 0.0);
  }
  for (std::size_t o = 0; o < g.size(); ++o) EXPECT_EQ(back[fwd.argmax[o]], g[o]);
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  std::mt19937_64 gen(7);
  const auto in = oracle::random_tensor<float>({3, 4, 5}, gen);
  Rng rng(1);
  EXPECT_EQ(dropout(in, 0.2, Mode::Eval, rng).output, in);
  EXPECT_FALSE(dropout(in, 0.2, Mode::Eval, rng).mask);
  EXPECT_EQ(dropout(in, 0.0, Mode::Train, rng).output, in);
  EXPECT_EQ(dropout(in, 0.0, Mode::Eval, rng).output, in);
}

TEST(Dropout, TrainModeIsInvertedAndUnbiased) {
  Rng rng(42);
  const auto r = dropout(Tensor({1000000}, 1.0f), 0.2, Mode::Train, rng);
  ASSERT_TRUE(r.mask);
  double sum = 0.0;
  std::size_t kept = 0;
  for (float v : r.output) {
    ASSERT_TRUE(v == 0.0f || v == 1.25f) << v;
    sum += v;
    kept += v != 0.0f;
  }
  EXPECT_NEAR(sum / 1e6, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(kept) / 1e6, 0.8, 0.01);
}

TEST(Dense, IdentityWeightsPassThrough) {
  const TensorD x({2, 3}, std::vector<double>{1, -2, 3, 4, 5, -6});
  TensorD w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  EXPECT_EQ(dense(x, w, TensorD({3})), x);
  EXPECT_THROW(dense(x, TensorD({2, 3}), TensorD({3})), ShapeError);
  EXPECT_THROW(dense(x, w, TensorD({2})), ShapeError);
}

TEST(Activations, ReluAndSoftmax) {
  const auto r = relu(TensorD({2}, std::vector<double>{-3, 2}));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  const auto s = softmax(TensorD({1, 2}, 0.0));
  EXPECT_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 0.5);
}

TEST(Activations, SoftmaxRowsSumToOneForExtremeLogits) {
  std::mt19937_64 gen(8);
  auto logits = oracle::random_tensor<double>({200, 2}, gen, -1e4, 1e4);
  logits[0] = 1e4;
  logits[1] = -1e4;
  for (const auto& probs : {softmax(logits), softmax(logits.cast<float>()).cast<double>()}) {
    for (std::size_t i = 0; i < 200; ++i) {
      ASSERT_TRUE(std::isfinite(probs[2 * i]) && std::isfinite(probs[2 * i + 1]));
      ASSERT_NEAR(probs[2 * i] + probs[2 * i + 1], 1.0, 1e-6);
    }
  }
}

TEST(CrossEntropy, Examples) {
  const std::vector<int> zero{0}, one{1};
  EXPECT_NEAR(cross_entropy(TensorD({1, 2}, 0.5), zero), 0.693147, 1e-6);
  EXPECT_NEAR(cross_entropy(TensorD({1, 2}, 0.5), one), 0.693147, 1e-6);
  EXPECT_EQ(cross_entropy(TensorD({1, 2}, std::vector<double>{1, 0}), zero), 0.0);
  const std::vector<int> labels{0, 1};
  EXPECT_NEAR(cross_entropy(TensorD({2, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.8}), labels), 0.164252, 1e-6);
  // clamped, not infinite
  EXPECT_NEAR(cross_entropy(TensorD({1, 2}, std::vector<double>{1, 0}), one), -std::log(1e-12), 1e-9);
}

TEST(ModelSpecs, ShapeLadder) {
  const std::size_t flatten[5] = {2048, 4800, 9216, 15680, 24576};
  const std::size_t hidden[5] = {150, 250, 350, 400, 600};
  for (int m = 1; m <= 5; ++m) {
    const auto spec = ModelSpec::table(m);
    spec.validate();
    EXPECT_EQ(spec.flatten_size(), flatten[m - 1]);
    EXPECT_EQ(spec.hidden_units, hidden[m - 1]);
    const auto& in = spec.input;
    EXPECT_EQ(spec.pooled_extent(), (Extent3{in.depth / 6, in.height / 6, in.width / 6}));
    EXPECT_EQ(model_id_for_input(in), m);
    EXPECT_TRUE(spec.is_table_architecture());
    EXPECT_FALSE(ModelSpec::reduced(m).is_table_architecture());
  }
  const auto shapes = parameter_shapes(ModelSpec::table(1));
  EXPECT_EQ(shapes[0], (Shape{64, 1, 3, 5, 5}));
  EXPECT_EQ(shapes[2], (Shape{64, 64, 3, 5, 5}));
  EXPECT_EQ(shapes[4], (Shape{2048, 150}));
  EXPECT_EQ(shapes[6], (Shape{150, 2}));
}

TEST(ModelSpecs, InvalidInputSize) {
  auto spec = ModelSpec::table(1);
  spec.input = {12, 24, 30};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  EXPECT_THROW(build_model<float>(spec, 1), std::invalid_argument);
  EXPECT_THROW(ModelSpec::table(6), std::invalid_argument);
  EXPECT_FALSE(model_id_for_input({10, 24, 24}));
}

TEST(BuildModel, DeterministicAndBounded) {
  const auto spec = ModelSpec::table(1);
  const auto a = build_model<float>(spec, 9);
  const auto b = build_model<float>(spec, 9);
  const auto c = build_model<float>(spec, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.conv1_kernels, c.conv1_kernels);
  EXPECT_EQ(a.dense1_weights.shape(), (Shape{2048, 150}));
  const double fan_in[4] = {75, 64 * 75, 2048, 150};
  const Tensor* weights[4] = {&a.conv1_kernels, &a.conv2_kernels, &a.dense1_weights, &a.dense2_weights};
  for (int i = 0; i < 4; ++i) {
    const float bound = static_cast<float>(std::sqrt(6.0 / fan_in[i]));
    float lo = 0, hi = 0;
    for (float v : *weights[i]) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_GE(lo, -bound);
    EXPECT_LE(hi, bound);
    EXPECT_LT(lo, -0.9f * bound);
    EXPECT_GT(hi, 0.9f * bound);
  }
  for (const Tensor* bias : {&a.conv1_bias, &a.conv2_bias, &a.dense1_bias, &a.dense2_bias}) {
    for (float v : *bias) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Forward, ZeroOutputLayerGivesUniformRows) {
  auto params = build_model<double>(ModelSpec::reduced(2), 3);
  params.dense2_weights.fill(0.0);
  const auto probs = predict(params, random_batch(params.spec, 3, 1));
  ASSERT_EQ(probs.shape(), (Shape{3, 2}));
  for (double p : probs) EXPECT_EQ(p, 0.5);
}

TEST(Forward, EvalIsDeterministicAndRowsSumToOne) {
  const auto params = build_model<float>(ModelSpec::table(1), 4);
  const auto batch = random_batch(params.spec, 2, 2).cast<float>();
  const auto a = predict(params, batch);
  const auto b = predict(params, batch);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(a[2 * i] + a[2 * i + 1], 1.0, 1e-6);
  Rng rng(0);
  const auto r = forward(params, batch, Mode::Eval, rng);
  EXPECT_EQ(r.probs, a);
  EXPECT_FALSE(r.trace);
}

TEST(Forward, TrainModeTraceAndMasks) {
  const auto params = build_model<double>(ModelSpec::reduced(1, 3, 4), 5);
  Rng rng(6);
  const auto r = forward(params, random_batch(params.spec, 2, 3), Mode::Train, rng);
  ASSERT_TRUE(r.trace);
  EXPECT_EQ(r.trace->probs, r.probs);
  for (const TensorD* mask : {&r.trace->masks.after_pool1, &r.trace->masks.after_pool2}) {
    for (double v : *mask) EXPECT_TRUE(v == 0.0 || v == 1.25) << v;
  }
  EXPECT_EQ(r.trace->masks.after_pool1.shape(), (Shape{2, 3, 4, 8, 8}));
}

TEST(Forward, RejectsWrongBatchShape) {
  const auto params = build_model<double>(ModelSpec::reduced(1), 1);
  EXPECT_THROW(predict(params, TensorD({1, 1, 12, 24, 30})), std::invalid_argument);
  EXPECT_THROW(predict(params, TensorD({1, 12, 24, 24})), std::invalid_argument);
}

TEST(Backward, GradientShapesMatchParameters) {
  const auto params = build_model<double>(ModelSpec::reduced(3), 7);
  Rng rng(1);
  const auto trace = forward_train(params, random_batch(params.spec, 1, 4), rng);
  const std::vector<int> labels{1};
  const auto grads = backward(params, trace, labels);
  const auto p = params.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(g[i]->shape(), p[i]->shape()) << ModelParams<double>::kNames[i];
}

TEST(GradCheck, QuadraticIsExactUpToRounding) {
  // loss = sum(w * x) + 0.5 * sum(w^2), gradient x + w
  std::mt19937_64 gen(9);
  auto w = oracle::random_tensor<double>({4, 5}, gen);
  const auto x = oracle::random_tensor<double>({4, 5}, gen);
  TensorD grad(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) grad[i] = x[i] + w[i];
  const auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i] + 0.5 * w[i] * w[i];
    return s;
  };
  TensorD* params[1] = {&w};
  const TensorD* grads[1] = {&grad};
  const std::string names[1] = {"w"};
  const auto report = check_gradients(params, grads, names, loss, {});
  EXPECT_EQ(report.checked, 20u);
  EXPECT_LT(report.max_relative_error, 1e-9);
}

TEST(GradCheck, DetectsAWrongGradient) {
  std::mt19937_64 gen(10);
  auto w = oracle::random_tensor<double>({6}, gen);
  TensorD wrong(w.shape(), 1.0);
  const auto loss = [&] {
    double s = 0.0;
    for (double v : w) s += v * v;
    return s;
  };
  TensorD* params[1] = {&w};
  const TensorD* grads[1] = {&wrong};
  const std::string names[1] = {"w"};
  EXPECT_GT(check_gradients(params, grads, names, loss, {}).max_relative_error, 1e-3);
}

TEST(GradCheck, ReducedModelOne) {
  const auto params = build_model<double>(ModelSpec::reduced(1), 11);
  const std::vector<int> labels{0, 1};
  const auto report = grad_check(params, random_batch(params.spec, 2, 5), labels);
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
  EXPECT_GT(report.checked, 50u);
  EXPECT_EQ(report.skipped, 0u);
}

TEST(GradCheck, FixedDropoutMasksReused) {
  const auto params = build_model<double>(ModelSpec::reduced(1), 12);
  Rng rng(13);
  const auto masks = draw_dropout_masks<double>(params.spec, 2, rng);
  std::size_t zeros = 0;
  for (double v : masks.after_pool1) zeros += v == 0.0;
  EXPECT_GT(zeros, 0u);
  const std::vector<int> labels{1, 0};
  const auto report = grad_check(params, random_batch(params.spec, 2, 6), labels, {}, masks);
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
}
