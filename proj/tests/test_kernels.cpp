#include <gtest/gtest.h>

#include <random>

#include "spoof/kernels.hpp"
#include "spoof/verify.hpp"

using namespace spoof;

namespace {

template <typename T>
Tensor<T> seeded(Shape shape, unsigned seed) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// Six nested loops straight from the definition, independent of both
// library implementations.
template <typename T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b, const ConvConfig& cfg) {
  const long N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = k.dim(0);
  const long kh = cfg.kernel.h, kw = cfg.kernel.w, sh = cfg.stride.h, sw = cfg.stride.w;
  const long ph = cfg.padding.h, pw = cfg.padding.w;
  const long Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  Tensor<T> out({static_cast<std::size_t>(N), static_cast<std::size_t>(K),
                 static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (long n = 0; n < N; ++n)
    for (long o = 0; o < K; ++o)
      for (long y = 0; y < Ho; ++y)
        for (long xo = 0; xo < Wo; ++xo) {
          T acc = b[o];
          for (long c = 0; c < C; ++c)
            for (long i = 0; i < kh; ++i)
              for (long j = 0; j < kw; ++j) {
                const long iy = y * sh + i - ph, ix = xo * sw + j - pw;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                acc += x.at(n, c, iy, ix) * k.at(o, c, i, j);
              }
          out.at(n, o, y, xo) = acc;
        }
  return out;
}

}  // namespace

TEST(Conv2d, ScalarKernelScales) {
  Tensor<float> x({1, 1, 3, 3}, 1.0f);
  Tensor<float> k({1, 1, 1, 1}, 2.0f);
  Tensor<float> b({1}, 0.0f);
  const auto y = conv2d_forward(x, k, b, ConvConfig{1, {1, 1}, {1, 1}, {0, 0}});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (float v : y.data()) EXPECT_EQ(v, 2.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  const auto x = seeded<double>({1, 1, 4, 4}, 3);
  Tensor<double> k({1, 1, 3, 3}, 0.0);
  k.at(0, 0, 1, 1) = 1.0;
  const auto y = conv2d_forward(x, k, Tensor<double>({1}, 0.0), ConvConfig{1, {3, 3}, {1, 1}, {1, 1}});
  EXPECT_EQ(y, x);
}

TEST(Conv2d, MatchesNaiveLoopsStride2Pad1) {
  const auto x = seeded<float>({1, 2, 5, 5}, 11);
  const auto k = seeded<float>({3, 2, 3, 3}, 12);
  const auto b = seeded<float>({3}, 13);
  const ConvConfig cfg{3, {3, 3}, {2, 2}, {1, 1}};
  const auto y = conv2d_forward(x, k, b, cfg);
  const auto want = naive_conv(x, k, b, cfg);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-6);
}

TEST(Conv2d, DoubleBitwiseEqualToNaiveLoops) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + rng() % 4, k = 1 + rng() % 5, o = 1 + rng() % 6;
    const std::size_t pad = rng() % k;
    const std::size_t h = k + rng() % 9, w = k + rng() % 9;
    const ConvConfig cfg{o, {k, k}, {1, 1}, {pad, pad}};
    const auto x = seeded<double>({2, c, h, w}, 100 + trial);
    const auto kern = seeded<double>({o, c, k, k}, 200 + trial);
    const auto b = seeded<double>({o}, 300 + trial);
    EXPECT_EQ(conv2d_forward(x, kern, b, cfg), naive_conv(x, kern, b, cfg)) << "trial " << trial;
    EXPECT_EQ(reference::conv2d_forward(x, kern, b, cfg), naive_conv(x, kern, b, cfg));
  }
}

TEST(Conv2d, RejectsBadShapes) {
  Tensor<float> x({1, 2, 5, 5});
  Tensor<float> k({1, 3, 3, 3});
  EXPECT_THROW(conv2d_forward(x, k, Tensor<float>({1}), ConvConfig{1, {3, 3}, {1, 1}, {0, 0}}),
               ShapeError);
  // (4 + 0 - 3) / 2 is not integral
  Tensor<float> x2({1, 3, 4, 4});
  EXPECT_THROW(conv2d_forward(x2, k, Tensor<float>({1}), ConvConfig{1, {3, 3}, {2, 2}, {0, 0}}),
               ShapeError);
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  const auto x = seeded<double>({1, 2, 5, 5}, 1);
  const auto k = seeded<double>({3, 2, 3, 3}, 2);
  const ConvConfig cfg{3, {3, 3}, {2, 2}, {1, 1}};
  const auto g = conv2d_backward(x, k, cfg, Tensor<double>({1, 3, 3, 3}, 0.0));
  for (double v : g.d_input.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.d_kernels.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.d_bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, ScalarClosedForm) {
  Tensor<double> x({1, 1, 1, 1}, 3.0), k({1, 1, 1, 1}, -2.0), up({1, 1, 1, 1}, 0.5);
  const auto g = conv2d_backward(x, k, ConvConfig{1, {1, 1}, {1, 1}, {0, 0}}, up);
  EXPECT_EQ(g.d_kernels[0], 1.5);   // g*x
  EXPECT_EQ(g.d_input[0], -1.0);    // g*w
  EXPECT_EQ(g.d_bias[0], 0.5);      // g
}

TEST(Conv2dBackward, ParallelMatchesReference) {
  const auto x = seeded<double>({2, 3, 7, 7}, 21);
  const auto k = seeded<double>({4, 3, 3, 3}, 22);
  const ConvConfig cfg{4, {3, 3}, {2, 2}, {1, 1}};
  const auto up = seeded<double>({2, 4, 4, 4}, 23);
  const auto a = conv2d_backward(x, k, cfg, up);
  const auto b = reference::conv2d_backward(x, k, cfg, up);
  for (std::size_t i = 0; i < a.d_input.size(); ++i) EXPECT_NEAR(a.d_input[i], b.d_input[i], 1e-12);
  for (std::size_t i = 0; i < a.d_kernels.size(); ++i) EXPECT_NEAR(a.d_kernels[i], b.d_kernels[i], 1e-12);
  for (std::size_t i = 0; i < a.d_bias.size(); ++i) EXPECT_NEAR(a.d_bias[i], b.d_bias[i], 1e-12);
}

TEST(Conv2dBackward, Deterministic) {
  const auto x = seeded<float>({2, 3, 12, 12}, 31);
  const auto k = seeded<float>({8, 3, 3, 3}, 32);
  const ConvConfig cfg{8, {3, 3}, {1, 1}, {1, 1}};
  const auto up = seeded<float>({2, 8, 12, 12}, 33);
  const auto a = conv2d_backward(x, k, cfg, up);
  const auto b = conv2d_backward(x, k, cfg, up);
  EXPECT_EQ(a.d_input, b.d_input);
  EXPECT_EQ(a.d_kernels, b.d_kernels);
  EXPECT_EQ(a.d_bias, b.d_bias);
}

TEST(MaxPool, TwoByTwo) {
  Tensor<float> x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const auto p = maxpool_forward(x, PoolConfig{});
  EXPECT_EQ(p.output.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(p.output[0], 4.0f);
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{3}));
  const auto d = maxpool_backward<float>(p.argmax, Tensor<float>({1, 1, 1, 1}, 5.0f), x.shape());
  EXPECT_EQ(d, Tensor<float>(x.shape(), std::vector<float>{0, 0, 0, 5}));
}

TEST(MaxPool, TiesPickFirstInScanOrder) {
  Tensor<float> x({1, 1, 4, 4}, 7.0f);
  const auto p = maxpool_forward(x, PoolConfig{});
  for (float v : p.output.data()) EXPECT_EQ(v, 7.0f);
  // top-left cell of each 2x2 window
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{0, 2, 8, 10}));
}

TEST(MaxPool, MatchesNaiveLoops) {
  const auto x = seeded<double>({1, 3, 6, 6}, 41);
  const auto p = maxpool_forward(x, PoolConfig{});
  ASSERT_EQ(p.output.shape(), (Shape{1, 3, 3, 3}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t xo = 0; xo < 3; ++xo) {
        double m = -1e300;
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 2; ++j) m = std::max(m, x.at(0, c, 2 * y + i, 2 * xo + j));
        EXPECT_EQ(p.output.at(0, c, y, xo), m);
      }
  const auto r = reference::maxpool_forward(x, PoolConfig{});
  EXPECT_EQ(r.output, p.output);
  EXPECT_EQ(r.argmax, p.argmax);
}

TEST(MaxPool, OverlappingWindowsAccumulate) {
  // Window 2x2 stride 1 over a 3x3 input whose centre is the maximum: all
  // four windows route their gradient to the centre.
  Tensor<double> x({1, 1, 3, 3}, std::vector<double>{0, 1, 0, 1, 9, 1, 0, 1, 0});
  const PoolConfig cfg{{2, 2}, {1, 1}, {0, 0}};
  const auto p = maxpool_forward(x, cfg);
  const auto d = maxpool_backward<double>(p.argmax, Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}), x.shape());
  EXPECT_EQ(d.at(0, 0, 1, 1), 10.0);
  EXPECT_EQ(d.at(0, 0, 0, 0), 0.0);
}

TEST(MaxPool, ZeroUpstreamAndBadIndex) {
  const auto x = seeded<float>({1, 1, 4, 4}, 5);
  const auto p = maxpool_forward(x, PoolConfig{});
  const auto d = maxpool_backward<float>(p.argmax, Tensor<float>({1, 1, 2, 2}, 0.0f), x.shape());
  for (float v : d.data()) EXPECT_EQ(v, 0.0f);
  std::vector<std::size_t> bad{0, 1, 2, 99};
  EXPECT_THROW(maxpool_backward<float>(bad, Tensor<float>({1, 1, 2, 2}, 1.0f), x.shape()),
               std::out_of_range);
}

TEST(MaxPool, PaddingNeverWins) {
  Tensor<float> x({1, 1, 2, 2}, -5.0f);
  const auto p = maxpool_forward(x, PoolConfig{{2, 2}, {2, 2}, {1, 1}});
  ASSERT_EQ(p.output.shape(), (Shape{1, 1, 2, 2}));
  for (float v : p.output.data()) EXPECT_EQ(v, -5.0f);
}

TEST(Affine, IdentityAndHandArithmetic) {
  Tensor<double> x({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(affine_forward(x, eye, Tensor<double>({2}, 0.0)), x);

  Tensor<double> v({1, 2}, std::vector<double>{1, 2});
  Tensor<double> w({2, 1}, std::vector<double>{3, 4});
  EXPECT_EQ(affine_forward(v, w, Tensor<double>({1}, 5.0))[0], 16.0);
  EXPECT_THROW(affine_forward(v, eye.reshaped({4, 1}), Tensor<double>({1})), ShapeError);
}

TEST(ChannelConcat, StacksInArgumentOrder) {
  Tensor<float> a({1, 1, 2, 2}, 1.0f), b({1, 1, 2, 2}, 2.0f);
  const auto j = channel_concat<float>({&a, &b});
  EXPECT_EQ(j.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(j.at(0, 0, 1, 1), 1.0f);
  EXPECT_EQ(j.at(0, 1, 0, 0), 2.0f);
  EXPECT_EQ(channel_concat<float>({&a}), a);
}

TEST(ChannelConcat, IndexMappingAndSplitInverse) {
  const auto a = seeded<double>({2, 2, 3, 3}, 51);
  const auto b = seeded<double>({2, 3, 3, 3}, 52);
  const auto c = seeded<double>({2, 4, 3, 3}, 53);
  const auto j = channel_concat<double>({&a, &b, &c});
  ASSERT_EQ(j.shape(), (Shape{2, 9, 3, 3}));
  // channel offsets are 0, 2, 5
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        EXPECT_EQ(j.at(n, 5, y, x), c.at(n, 0, y, x));
        EXPECT_EQ(j.at(n, 4, y, x), b.at(n, 2, y, x));
      }
  const std::vector<std::size_t> parts{2, 3, 4};
  const auto back = channel_split(j, parts);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_EQ(back[2], c);
  Tensor<double> wrong({2, 1, 4, 3});
  EXPECT_THROW(channel_concat<double>({&a, &wrong}), ShapeError);
}

TEST(GlobalAvgPool, MeanAndBackward) {
  Tensor<double> x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 10, 10, 10, 10});
  const auto m = global_avg_pool_forward(x);
  EXPECT_EQ(m, Tensor<double>({1, 2}, std::vector<double>{2.5, 10}));
  const auto d = global_avg_pool_backward(Tensor<double>({1, 2}, std::vector<double>{4, 8}), x.shape());
  EXPECT_EQ(d.at(0, 0, 1, 0), 1.0);
  EXPECT_EQ(d.at(0, 1, 0, 1), 2.0);
}

TEST(Kernels, NonFiniteOutputIsAnError) {
  Tensor<float> x({1, 1, 1, 1}, 3e38f), k({1, 1, 1, 1}, 10.0f);
  EXPECT_THROW(conv2d_forward(x, k, Tensor<float>({1}, 0.0f), ConvConfig{1, {1, 1}, {1, 1}, {0, 0}}),
               NumericError);
}

// Twenty seeded shapes per primitive, finite differences in double.
TEST(GradientCheck, Primitives) {
  VerifyOptions opt;
  for (const auto& r : {check_conv_gradients(opt), check_pool_gradients(opt), check_affine_gradients(opt)}) {
    EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
    EXPECT_GE(r.cases, 20u);
    EXPECT_LT(r.max_error, 1e-5);
  }
}

TEST(GradientCheck, RelativeErrorGuard) {
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-8), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-10, 3e-10, 1e-8), 2e-10);
}

TEST(ConvOracle, FiftyConfigurations) {
  const auto r = check_conv_oracle(VerifyOptions{});
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_EQ(r.cases, 50u);
}
