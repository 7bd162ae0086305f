#include <gtest/gtest.h>

#include <cmath>

#include "rescale_rl/popart.hpp"
#include "test_util.hpp"

using namespace rescale;

namespace {

std::vector<double> unnormalised(const Network& net, const PopArt& pa, const Matrix& x) {
  const Matrix y = predict(net, x);
  std::vector<double> out;
  for (double v : y.values()) out.push_back(pa.denormalize(v));
  return out;
}

}  // namespace

TEST(PopArt, PreserveOutputsByHand) {
  DenseLayer l{Matrix::from_rows({{2.0, -1.0}}), {0.5}, Activation::identity()};
  preserve_outputs(l, 2.0, 1.0, 4.0, -1.0);
  EXPECT_DOUBLE_EQ(l.weight(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(l.weight(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(l.bias[0], (2.0 * 0.5 + 1.0 + 1.0) / 4.0);
  EXPECT_THROW(preserve_outputs(l, 0.0, 0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(PopArt, UpdatesPreserveUnnormalisedOutputs) {
  Rng rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> mag(-3.0, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    Network net = testutil::random_relu_net(rng, 3, 4, 1);
    PopArt pa(PopArtConfig{0.05});
    const Matrix x = testutil::random_matrix(64, 4, rng);
    for (int k = 0; k < 30; ++k) {
      const auto before = unnormalised(net, pa, x);
      const double scale = std::pow(10.0, mag(rng));
      std::vector<double> targets(8);
      for (double& t : targets) t = scale * (nd(rng) + 2.0);
      pa.observe_and_update(targets, net.layers.back());
      const auto after = unnormalised(net, pa, x);
      for (std::size_t i = 0; i < before.size(); ++i)
        EXPECT_LE(std::abs(after[i] - before[i]), 1e-9 * std::max(1.0, std::abs(before[i])));
    }
  }
}

TEST(PopArt, StationaryStreamIsNormalised) {
  Rng rng(2);
  std::normal_distribution<double> nd(40.0, 7.0);
  Network net = testutil::random_relu_net(rng, 2, 2, 1);
  PopArt pa;
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> batch(32);
    for (double& v : batch) v = nd(rng);
    pa.observe_and_update(batch, net.layers.back());
  }
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = pa.normalize(nd(rng));
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_GE(mean, -0.1);
  EXPECT_LE(mean, 0.1);
  EXPECT_GE(var, 0.8);
  EXPECT_LE(var, 1.2);
}

TEST(PopArt, VarianceFloorAndClamp) {
  Rng rng(3);
  Network net = testutil::random_relu_net(rng, 2, 2, 1);
  PopArt pa(PopArtConfig{1.0});
  pa.observe_and_update(std::vector<double>{5.0}, net.layers.back());
  EXPECT_DOUBLE_EQ(pa.mu(), 5.0);
  EXPECT_DOUBLE_EQ(pa.sigma(), 1e-2);  // sqrt of the 1e-4 variance floor
  PopArt capped(PopArtConfig{0.5, 1e-4, 1e-4, 10.0});
  capped.observe_and_update(std::vector<double>{-1e3, 1e3}, net.layers.back());
  EXPECT_DOUBLE_EQ(capped.sigma(), 10.0);
  EXPECT_DOUBLE_EQ(capped.mu(), 250.0);
}

TEST(PopArt, Errors) {
  Rng rng(4);
  Network wide = testutil::random_relu_net(rng, 2, 2, 3);
  PopArt pa;
  EXPECT_THROW(pa.observe_and_update(std::vector<double>{1.0}, wide.layers.back()), std::invalid_argument);
  Network net = testutil::random_relu_net(rng, 2, 2, 1);
  EXPECT_THROW(pa.observe_and_update(std::vector<double>{std::nan("")}, net.layers.back()), std::domain_error);
  EXPECT_THROW(PopArt(PopArtConfig{0.0}), std::invalid_argument);
}

TEST(PopArt, SetStatisticsPreservesOutputs) {
  Rng rng(5);
  Network net = testutil::random_relu_net(rng, 2, 3, 1);
  PopArt pa;
  const Matrix x = testutil::random_matrix(10, 3, rng);
  const auto before = unnormalised(net, pa, x);
  pa.set_statistics(3.0, -2.0, net.layers.back());
  const auto after = unnormalised(net, pa, x);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i], before[i], 1e-12);
  EXPECT_NEAR(pa.normalize(pa.denormalize(0.37)), 0.37, 1e-15);
}
