#include <gtest/gtest.h>

#include <cmath>

#include "rescale_rl/scaling.hpp"
#include "test_util.hpp"

using namespace rescale;

TEST(Scaling, PlanFactors) {
  const auto p = ScalePlan::equal(8.0, 3);
  for (double f : p.weight_factor) EXPECT_NEAR(f, 2.0, 1e-15);
  EXPECT_NEAR(p.bias_factor[0], 2.0, 1e-15);
  EXPECT_NEAR(p.bias_factor[1], 4.0, 1e-14);
  EXPECT_NEAR(p.bias_factor[2], 8.0, 1e-14);
  const auto one = ScalePlan::equal(1.0, 4);
  for (double f : one.bias_factor) EXPECT_EQ(f, 1.0);
  EXPECT_THROW(ScalePlan::equal(0.0, 2), std::invalid_argument);
  EXPECT_THROW(ScalePlan::equal(-2.0, 2), std::invalid_argument);
  EXPECT_THROW(ScalePlan::equal(2.0, 0), std::invalid_argument);
  const auto custom = ScalePlan::from_factors({3.0, 0.5});
  EXPECT_DOUBLE_EQ(custom.c, 1.5);
}

TEST(Scaling, OutputIsScaledExactly) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  for (int trial = 0; trial < 30; ++trial) {
    auto net = testutil::random_relu_net(rng, depth(rng), 4, 2);
    const Matrix x = testutil::random_matrix(50, 4, rng, -3.0, 3.0);
    const Matrix y = predict(net, x);
    for (double c : {0.1, 0.5, 1.0, 8.0, 64.0}) {
      const Matrix ys = predict(scale_network(net, c), x);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double expect = c * y.values()[i];
        EXPECT_LE(std::abs(ys.values()[i] - expect), 1e-9 * std::max(std::abs(expect), 1e-12));
      }
    }
  }
}

TEST(Scaling, UnequalPlanAlsoPreservesShape) {
  Rng rng(2);
  auto net = testutil::random_relu_net(rng, 3, 3, 1, Activation::leaky_relu(0.05));
  const auto plan = ScalePlan::from_factors({0.5, 4.0, 2.5});
  const Matrix x = testutil::random_matrix(20, 3, rng);
  const Matrix y = predict(net, x), ys = predict(scale_network(net, plan), x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(ys.values()[i], 5.0 * y.values()[i], 1e-12);
}

TEST(Scaling, RejectsNonHomogeneousNetworks) {
  Rng rng(3);
  auto elu = make_network({2, 3, 1}, Activation::elu(), Activation::identity(), rng);
  EXPECT_THROW(scale_network(elu, 2.0), std::invalid_argument);
  auto tanh_out = make_network({2, 3, 1}, Activation::relu(), Activation::tanh(), rng);
  EXPECT_THROW(scale_network(tanh_out, 2.0), std::invalid_argument);
  auto ok = make_network({2, 3, 1}, Activation::relu(), Activation::identity(), rng);
  EXPECT_THROW(scale_network(ok, ScalePlan::equal(2.0, 3)), std::invalid_argument);
}

TEST(Scaling, GradientFactorsMatchMeasuredRatios) {
  Rng rng(4);
  for (std::size_t n = 1; n <= 3; ++n) {
    auto net = testutil::random_relu_net(rng, n, 3, 1);
    const Matrix x = testutil::random_matrix(16, 3, rng);
    std::vector<double> y(16);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : y) v = u(rng);
    auto grads = [&](const Network& m, double c) {
      const auto trace = forward(m, x);
      std::vector<double> target(y);
      for (double& v : target) v *= c;
      const auto mse = mse_loss_and_grad(trace.output().values(), target);
      return backward(m, trace, Matrix(16, 1, mse.grad)).params;
    };
    const auto g0 = grads(net, 1.0);
    for (double c : {0.5, 3.0, 10.0}) {
      const auto gs = grads(scale_network(net, c), c);
      for (std::size_t l = 0; l < n; ++l) {
        const double fw = gradient_scale_factor(ParamKind::Weight, l + 1, n, c);
        const double fb = gradient_scale_factor(ParamKind::Bias, l + 1, n, c);
        for (std::size_t i = 0; i < g0.weight[l].size(); ++i)
          EXPECT_NEAR(gs.weight[l].values()[i], fw * g0.weight[l].values()[i], 1e-9 * std::max(1.0, fw));
        for (std::size_t i = 0; i < g0.bias[l].size(); ++i)
          EXPECT_NEAR(gs.bias[l][i], fb * g0.bias[l][i], 1e-9 * std::max(1.0, fb));
      }
    }
  }
  EXPECT_DOUBLE_EQ(gradient_scale_factor(ParamKind::Weight, 1, 2, 4.0), 8.0);
  EXPECT_NEAR(gradient_scale_factor(ParamKind::Weight, 2, 3, 8.0), 32.0, 1e-12);
  EXPECT_NEAR(gradient_scale_factor(ParamKind::Bias, 3, 3, 8.0), 8.0, 1e-12);
  EXPECT_DOUBLE_EQ(gradient_scale_factor(ParamKind::Bias, 2, 2, 4.0), 4.0);
  EXPECT_THROW(gradient_scale_factor(ParamKind::Bias, 3, 2, 4.0), std::invalid_argument);
}

TEST(Scaling, ClipSchedule) {
  ClipSchedule s;
  EXPECT_DOUBLE_EQ(s.cap(0), 0.5);
  EXPECT_DOUBLE_EQ(s.cap(1), 0.6);
  EXPECT_DOUBLE_EQ(s.cap(100), 10.0);
  EXPECT_NEAR(s.cap(10), 0.5 * std::pow(1.2, 10), 1e-12);
  EXPECT_NEAR(s.cap(10), 3.0958682112, 1e-9);
  EXPECT_DOUBLE_EQ((ClipSchedule{0.5, 1.2, 3.0}.cap(10)), 3.0);
  EXPECT_THROW((ClipSchedule{0.0, 1.2, 10.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ClipSchedule{0.5, 1.0, 10.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ClipSchedule{0.5, 1.2, 0.1}.validate()), std::invalid_argument);
}

TEST(Scaling, ClipperActivatesOnScaleEvents) {
  Rng rng(5);
  auto net = testutil::random_relu_net(rng, 2, 2, 1);
  auto g = Gradients::zeros_like(net);
  g.bias[1][0] = 3.0;
  PostScaleClipper clip;
  auto g1 = g;
  clip.apply(g1);
  EXPECT_DOUBLE_EQ(g1.norm(), 3.0);  // inactive before any scale event
  clip.on_scale_event();
  auto g2 = g;
  clip.apply(g2);
  EXPECT_NEAR(g2.norm(), 0.5, 1e-15);
  auto g3 = g;
  clip.apply(g3);
  EXPECT_NEAR(g3.norm(), 0.6, 1e-15);
  EXPECT_EQ(clip.steps_since_scale(), 2u);
  clip.on_scale_event();
  EXPECT_EQ(clip.steps_since_scale(), 0u);
  auto g4 = g;
  EXPECT_DOUBLE_EQ(clip_gradient(g4, ClipSchedule{}, 50), 3.0);
  EXPECT_DOUBLE_EQ(g4.norm(), 3.0);
}
