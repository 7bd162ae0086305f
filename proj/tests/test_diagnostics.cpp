#include <gtest/gtest.h>

#include "rescale_rl/diagnostics.hpp"
#include "test_util.hpp"

using namespace rescale;
using testutil::brute_force_pdrr;

TEST(Diagnostics, HandBuiltLayer) {
  Network net;
  // neuron 0: z = x (dies on non-positive inputs), neuron 1: z = -1 always, neuron 2: z = 0 always
  net.layers.push_back({Matrix::from_rows({{1.0}, {0.0}, {0.0}}), {0.0, -1.0, 0.0}, Activation::relu()});
  net.layers.push_back({Matrix(1, 3, 1.0), {0.0}, Activation::identity()});
  const auto trace = forward(net, Matrix::from_rows({{-1.0}, {0.0}}));
  EXPECT_EQ(pseudo_dying_mask(trace, 0), (std::vector<bool>{true, true, true}));
  const auto trace2 = forward(net, Matrix::from_rows({{-1.0}, {2.0}}));
  EXPECT_EQ(pseudo_dying_mask(trace2, 0), (std::vector<bool>{false, true, true}));
  const auto report = pdrr_report(trace2);
  ASSERT_EQ(report.layers.size(), 1u);
  EXPECT_EQ(report.layers[0].n_pseudo_dying, 2u);
  EXPECT_DOUBLE_EQ(report.layers[0].ratio, 2.0 / 3.0);
  EXPECT_EQ(report.window_size, 2u);
}

TEST(Diagnostics, Errors) {
  Rng rng(1);
  auto net = make_network({2, 3, 1}, Activation::relu(), Activation::identity(), rng);
  const auto trace = forward(net, Matrix(2, 2, 1.0));
  EXPECT_THROW(pseudo_dying_mask(trace, 5), std::out_of_range);
  EXPECT_THROW(pseudo_dying_mask(trace, 1), std::invalid_argument);  // identity layer
  EXPECT_THROW(pdrr_report(net, Matrix(0, 2)), std::invalid_argument);
  EXPECT_EQ(count_relu_layers(net), 1u);
}

TEST(Diagnostics, MatchesBruteForceOnRandomNets) {
  Rng rng(2);
  std::uniform_int_distribution<std::size_t> depth(2, 4), batch(1, 40), in(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = in(rng);
    auto net = testutil::random_relu_net(rng, depth(rng), d, 2);
    for (auto& l : net.layers)
      for (double& b : l.bias) b -= 0.4;  // push some neurons toward dying
    const Matrix window = testutil::random_matrix(batch(rng), d, rng);
    const auto report = pdrr_report(net, window);
    const auto oracle = brute_force_pdrr(net, window);
    ASSERT_EQ(report.layers.size(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_EQ(report.layers[i].ratio, oracle[i]);
  }
}

TEST(Diagnostics, LeakyLayersAreSkipped) {
  Rng rng(3);
  auto net = make_network({2, 3, 3, 1}, Activation::leaky_relu(), Activation::identity(), rng);
  EXPECT_TRUE(pdrr_report(net, Matrix(3, 2, 0.5)).layers.empty());
}

TEST(Diagnostics, SampleWindowKeepsMostRecent) {
  SampleWindow w(3);
  for (double v : {1.0, 2.0, 3.0, 4.0}) w.push(std::vector<double>{v, -v});
  EXPECT_EQ(w.size(), 3u);
  const Matrix m = w.to_matrix();
  EXPECT_EQ(m(0, 0), 2.0);
  EXPECT_EQ(m(2, 1), -4.0);
  EXPECT_THROW(w.push(std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(SampleWindow(0), std::invalid_argument);
  w.clear();
  EXPECT_TRUE(w.empty());
}

TEST(Diagnostics, MeanRatio) {
  PdrrReport r;
  EXPECT_EQ(r.mean_ratio(), 0.0);
  r.layers = {{0, 4, 1, 0.25}, {1, 4, 3, 0.75}};
  EXPECT_DOUBLE_EQ(r.mean_ratio(), 0.5);
}
