#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "gradcheck_suite.hpp"
#include "resmotion/core/errors.hpp"
#include "resmotion/core/ops.hpp"
#include "resmotion/core/reference.hpp"
#include "test_support.hpp"

using namespace resmotion;
using resmotion::testing::random_tensor;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at({1, 2, 3}) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  EXPECT_EQ(t.offset({1, 0, 0}), 12u);
  EXPECT_THROW(t.dim(3), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.vector(), t.vector());
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, ArithmeticAndFinite) {
  Tensor a({3}, 1.0), b({3}, 2.0);
  EXPECT_EQ((a + b)[0], 3.0);
  EXPECT_EQ((b - a)[1], 1.0);
  EXPECT_EQ((a * 4.0)[2], 4.0);
  EXPECT_THROW(a += Tensor({4}), ShapeError);
  EXPECT_TRUE(a.all_finite());
  a[1] = std::nan("");
  EXPECT_FALSE(a.all_finite());
}

TEST(Tensor, ChannelsFirstMovesLastAxis) {
  Tensor clip({2, 2, 2, 3});  // T H W C
  for (std::size_t i = 0; i < clip.size(); ++i) clip[i] = static_cast<double>(i);
  const Tensor cf = channels_first(clip);
  ASSERT_EQ(cf.shape(), (Shape{3, 2, 2, 2}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) EXPECT_EQ(cf.at({c, t, y, x}), clip.at({t, y, x, c}));
}

TEST(Ops, EluAndReluValues) {
  Tensor x({4}, std::vector<double>{-1.0, 0.0, 0.5, -20.0});
  const Tensor e = nn::activation_forward(x, nn::Activation::elu);
  EXPECT_DOUBLE_EQ(e[0], std::exp(-1.0) - 1.0);
  EXPECT_DOUBLE_EQ(e[1], 0.0);
  EXPECT_DOUBLE_EQ(e[2], 0.5);
  EXPECT_NEAR(e[3], -1.0, 1e-8);
  const Tensor r = nn::activation_forward(x, nn::Activation::relu);
  EXPECT_EQ(r.vector(), (std::vector<double>{0.0, 0.0, 0.5, 0.0}));
  const Tensor dr = nn::activation_backward(x, Tensor({4}, 1.0), nn::Activation::relu);
  EXPECT_EQ(dr[1], 0.0);
}

TEST(Ops, SoftmaxRowsSumToOneAndAreStable) {
  Tensor logits({2, 3}, std::vector<double>{1000.0, 1001.0, 1002.0, -5.0, 0.0, 5.0});
  const Tensor p = nn::softmax(logits);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += p.at({r, k});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Shift invariance: the first row equals softmax(0, 1, 2).
  const double z = 1.0 + std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(p.at({0, 2}), std::exp(2.0) / z, 1e-12);
}

TEST(Ops, CrossEntropyMatchesHandComputation) {
  Tensor logits({1, 3}, std::vector<double>{0.0, 0.0, 0.0});
  const std::vector<int> y{1};
  const auto r = nn::cross_entropy_loss(logits, y);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-12);
  EXPECT_NEAR(r.grad[1], 1.0 / 3.0 - 1.0, 1e-12);
  EXPECT_NEAR(r.grad[0], 1.0 / 3.0, 1e-12);
  const std::vector<int> bad{3};
  EXPECT_THROW(nn::cross_entropy_loss(logits, bad), std::exception);
}

TEST(Ops, BatchNormTrainOutputIsNormalized) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({4, 2, 3, 2, 2}, rng, -3.0, 5.0);
  nn::BatchNormParams p{Tensor({2}, 1.0), Tensor({2}, 0.0)};
  nn::RunningStats stats{Tensor({2}), Tensor({2}), false};
  const Tensor y = nn::batchnorm_forward(x, p, stats, nn::Mode::train);
  EXPECT_TRUE(stats.initialized);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 12; ++i) {
        const double v = y[(b * 2 + c) * 12 + i];
        s += v;
        s2 += v * v;
        ++n;
      }
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(s2 / n, 1.0, 1e-3);  // eps keeps it slightly below 1
  }
}

TEST(Ops, BatchNormEvalBeforeTrainingThrows) {
  nn::BatchNormParams p{Tensor({1}, 1.0), Tensor({1}, 0.0)};
  nn::RunningStats stats{Tensor({1}), Tensor({1}), false};
  EXPECT_THROW(nn::batchnorm_forward(Tensor({2, 1, 1, 1, 1}), p, stats, nn::Mode::eval), std::exception);
}

TEST(Ops, BatchNormRunningStatsFollowMomentum) {
  nn::BatchNormParams p{Tensor({1}, 1.0), Tensor({1}, 0.0)};
  nn::RunningStats stats{Tensor({1}), Tensor({1}), false};
  Tensor a({2, 1, 1, 1, 1}, std::vector<double>{1.0, 3.0});
  nn::batchnorm_forward(a, p, stats, nn::Mode::train);
  EXPECT_DOUBLE_EQ(stats.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(stats.var[0], 2.0);  // unbiased
  Tensor b({2, 1, 1, 1, 1}, std::vector<double>{5.0, 5.0});
  nn::batchnorm_forward(b, p, stats, nn::Mode::train);
  EXPECT_NEAR(stats.mean[0], 0.9 * 2.0 + 0.1 * 5.0, 1e-12);
  EXPECT_NEAR(stats.var[0], 0.9 * 2.0, 1e-12);
}

TEST(Ops, ConvOutputExtentAndShapeErrors) {
  nn::ConvSpec s;
  s.kernel = {3, 7, 7};
  s.stride = {1, 2, 2};
  s.padding = {1, 3, 3};
  EXPECT_EQ(s.output_extent({16, 112, 112}), (nn::Extent3{16, 56, 56}));
  s.padding = {0, 0, 0};
  EXPECT_THROW(s.output_extent({2, 112, 112}), ShapeError);
  s.in_channels = 3;
  EXPECT_THROW(nn::conv3d_forward(Tensor({1, 2, 4, 8, 8}), Tensor(s.weight_shape()), Tensor({1}), s),
               ShapeError);
}

TEST(Ops, ConvIdentityKernelCopiesInput) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 1, 3, 4, 5}, rng);
  nn::ConvSpec s;
  Tensor w(s.weight_shape(), 1.0);
  const Tensor y = nn::conv3d_forward(x, w, Tensor({1}), s);
  EXPECT_EQ(y.vector(), x.vector());
}

TEST(Ops, MaxPoolTiesGoToLowestIndex) {
  Tensor x({1, 1, 1, 2, 2}, 1.0);
  const auto g = nn::maxpool3d_backward(x, {1, 2, 2}, {1, 2, 2}, Tensor({1, 1, 1, 1, 1}, 1.0));
  EXPECT_EQ(g.input_grad.vector(), (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(Ops, TemporalDifferenceValues) {
  Tensor x({1, 1, 3, 1, 1}, std::vector<double>{1.0, 4.0, 2.0});
  EXPECT_EQ(nn::temporal_difference(x).vector(), (std::vector<double>{3.0, 2.0}));
  EXPECT_EQ(nn::temporal_difference(x, true).vector(), (std::vector<double>{-3.0, 2.0}));
  EXPECT_THROW(nn::temporal_difference(Tensor({1, 1, 1, 1, 1})), ShapeError);
}

TEST(Ops, LinearAndGlobalPoolValues) {
  Tensor x({1, 2}, std::vector<double>{1.0, 2.0});
  Tensor w({1, 2}, std::vector<double>{3.0, -1.0});
  EXPECT_DOUBLE_EQ(nn::linear_forward(x, w, Tensor({1}, 0.5))[0], 1.5);
  Tensor v({1, 1, 2, 1, 1}, std::vector<double>{2.0, 4.0});
  EXPECT_DOUBLE_EQ(nn::global_avgpool3d(v)[0], 3.0);
}

// Small sweep here; the acceptance binary runs every extent up to 6.
TEST(Kernels, MatchLoopOracleOnSmallExtents) {
  for (const auto& c : resmotion::testing::run_oracle_suite(3, 17)) {
    EXPECT_LE(c.max_abs_diff, 1e-10) << c.kernel;
    EXPECT_EQ(c.configs, 27u);
  }
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(8);
  nn::ConvSpec s;
  s.in_channels = 2;
  s.out_channels = 3;
  s.kernel = {3, 3, 3};
  s.padding = {1, 1, 1};
  const Tensor x = random_tensor({4, 2, 4, 6, 6}, rng), w = random_tensor(s.weight_shape(), rng);
  const Tensor up = random_tensor({4, 3, 4, 6, 6}, rng);
  omp_set_num_threads(1);
  const auto g1 = nn::conv3d_backward(x, w, s, up);
  omp_set_num_threads(4);
  const auto g4 = nn::conv3d_backward(x, w, s, up);
  omp_set_num_threads(omp_get_num_procs());
  EXPECT_EQ(g1.param_grads[0], g4.param_grads[0]);
  EXPECT_EQ(g1.input_grad, g4.input_grad);
}
