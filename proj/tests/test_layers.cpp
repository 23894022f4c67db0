#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spoof/layers.hpp"
#include "spoof/verify.hpp"

using namespace spoof;

TEST(Relu, ForwardBackward) {
  Relu<double> relu;
  const auto y = relu.forward(Tensor<double>({3}, std::vector<double>{-1, 0, 2}));
  EXPECT_EQ(y, Tensor<double>({3}, std::vector<double>{0, 0, 2}));
  const auto d = relu.backward(Tensor<double>({3}, std::vector<double>{5, 6, 7}));
  EXPECT_EQ(d, Tensor<double>({3}, std::vector<double>{0, 0, 7}));
}

TEST(Relu, PositiveInputIsIdentity) {
  Relu<float> relu;
  Tensor<float> x({2, 2}, std::vector<float>{0.5f, 1, 2, 3});
  EXPECT_EQ(relu.forward(x), x);
  EXPECT_EQ(relu.backward(x), x);
  EXPECT_EQ(relu.infer(x), x);
}

TEST(Inception, ZeroWeightsGiveZeros) {
  Inception<double> block(1, InceptionSpec{1, 1, 1, 1, 1, 1});
  std::mt19937 rng(1);
  Tensor<double> x({1, 1, 4, 4});
  for (auto& v : x.data()) v = static_cast<double>(rng() % 100) / 10.0;
  const auto y = block.forward(x);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Inception, PreservesSpatialExtent) {
  Inception<float> block(3, InceptionSpec{4, 2, 4, 2, 4, 4});
  Tensor<float> x({1, 3, 8, 8}, 0.25f);
  EXPECT_EQ(block.forward(x).shape(), (Shape{1, 16, 8, 8}));
  for (std::size_t side : {1u, 2u, 5u, 11u})
    EXPECT_EQ(block.infer(Tensor<float>({2, 3, side, side})).shape(), (Shape{2, 16, side, side}));
}

TEST(InceptionSpec, RejectsZeroChannels) {
  EXPECT_THROW((InceptionSpec{0, 1, 1, 1, 1, 1}.validate()), std::invalid_argument);
  EXPECT_EQ((InceptionSpec{16, 8, 16, 8, 16, 16}.out_channels()), 64u);
}

TEST(Dropout, RateZeroAndInferenceAreIdentity) {
  Tensor<float> x({4, 5}, 2.0f);
  Dropout<float> none(0.0, 1);
  EXPECT_EQ(none.forward(x, Mode::Train), x);
  Dropout<float> drop(0.2, 1);
  EXPECT_EQ(drop.forward(x, Mode::Infer), x);
}

TEST(Dropout, StatisticsAndScaling) {
  Dropout<double> drop(0.2, 12345);
  Tensor<double> x({10000}, 3.0);
  const auto y = drop.forward(x, Mode::Train);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_EQ(v, 3.0 * 1.25);
    }
  }
  const double frac = static_cast<double>(zeros) / 10000.0;
  EXPECT_NEAR(frac, 0.2, 0.02);
}

TEST(Dropout, SameSeedSameMask) {
  Tensor<float> x({500}, 1.0f);
  Dropout<float> a(0.2, 77), b(0.2, 77);
  EXPECT_EQ(a.forward(x, Mode::Train), b.forward(x, Mode::Train));
  const auto m = a.mask();
  EXPECT_EQ(std::vector<float>(m.begin(), m.end()),
            std::vector<float>(b.mask().begin(), b.mask().end()));
  EXPECT_THROW(Dropout<float>(1.0, 1), std::invalid_argument);
}

TEST(Bce, HalfProbability) {
  const auto r = bce_with_logits<double>(Tensor<double>({1}, 0.0), std::vector<double>{1.0});
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(r.d_logits[0], -0.5);
  const auto r4 = bce_with_logits<double>(Tensor<double>({4}, 0.0), std::vector<double>{0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(r4.d_logits[0], 0.125);
  EXPECT_DOUBLE_EQ(r4.d_logits[1], -0.125);
}

TEST(Bce, MatchesDirectFormula) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0.0, 2.0);
  Tensor<double> z({8});
  std::vector<double> y(8);
  for (std::size_t i = 0; i < 8; ++i) {
    z[i] = dist(rng);
    y[i] = static_cast<double>(rng() % 2);
  }
  const auto r = bce_with_logits<double>(z, y);
  double loss = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    loss -= y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p);
    EXPECT_NEAR(r.d_logits[i], (p - y[i]) / 8.0, 1e-10);
  }
  EXPECT_NEAR(r.loss, loss / 8.0, 1e-10);
}

TEST(Bce, SaturatedLogitsStayFinite) {
  const auto r = bce_with_logits<float>(Tensor<float>({2}, std::vector<float>{1000.f, -1000.f}),
                                        std::vector<float>{0.f, 1.f});
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 1000.f, 1e-3f);
  const auto perfect = bce_with_logits<float>(Tensor<float>({2}, std::vector<float>{1000.f, -1000.f}),
                                              std::vector<float>{1.f, 0.f});
  EXPECT_GE(perfect.loss, 0.f);
}

TEST(Bce, RejectsNonBinaryLabel) {
  EXPECT_THROW(bce_with_logits<float>(Tensor<float>({1}), std::vector<float>{0.5f}),
               std::invalid_argument);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
}

TEST(GradientCheck, Layers) {
  VerifyOptions opt;
  for (const auto& r : {check_relu_gradients(opt), check_inception_gradients(opt),
                        check_dropout_gradients(opt), check_bce_gradients(opt)}) {
    EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    EXPECT_GE(r.cases, 20u);
    EXPECT_LT(r.max_error, 1e-5);
  }
}
