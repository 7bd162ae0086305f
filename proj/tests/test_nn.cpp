#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rescale_rl/network.hpp"
#include "test_util.hpp"

using namespace rescale;

TEST(Matrix, ShapeAndRows) {
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  m(1, 2) = 4.0;
  EXPECT_EQ(m.row(1)[2], 4.0);
  EXPECT_EQ(shape_string(m), "2x3");
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(Matrix::from_rows({{1.0, 2.0}, {3.0}}), std::invalid_argument);
  EXPECT_EQ(Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}})(1, 0), 3.0);
}

TEST(Activation, ValuesAndDerivatives) {
  EXPECT_EQ(activation_value(Activation::relu(), -2.0), 0.0);
  EXPECT_EQ(activation_value(Activation::relu(), 3.0), 3.0);
  EXPECT_EQ(activation_value_and_grad(Activation::relu(), 0.0).derivative, 0.0);
  EXPECT_DOUBLE_EQ(activation_value(Activation::leaky_relu(0.1), -2.0), -0.2);
  EXPECT_DOUBLE_EQ(activation_value_and_grad(Activation::leaky_relu(0.1), -2.0).derivative, 0.1);
  EXPECT_NEAR(activation_value(Activation::elu(1.0), -1.0), std::exp(-1.0) - 1.0, 1e-15);
  // x = -ln 2: exp(x) - 1 = -1/2, and the derivative is value + alpha
  const auto e = activation_value_and_grad(Activation::elu(1.0), -std::log(2.0));
  EXPECT_NEAR(e.value, -0.5, 1e-15);
  EXPECT_NEAR(e.derivative, 0.5, 1e-15);
  EXPECT_NEAR(activation_value(Activation::sigmoid(), -800.0), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(activation_value(Activation::sigmoid(), -800.0)));
  EXPECT_DOUBLE_EQ(activation_value(Activation::identity(), -7.0), -7.0);

  for (auto act : {Activation::leaky_relu(0.2), Activation::elu(0.7), Activation::tanh(), Activation::sigmoid()})
    for (double x : {-1.3, -0.2, 0.4, 2.1}) {
      const double h = 1e-6;
      const double fd = (activation_value(act, x + h) - activation_value(act, x - h)) / (2 * h);
      EXPECT_NEAR(activation_value_and_grad(act, x).derivative, fd, 1e-8) << to_string(act) << " at " << x;
    }
}

TEST(Activation, ParseRoundTrip) {
  for (auto act : {Activation::relu(), Activation::leaky_relu(0.03), Activation::elu(0.5), Activation::tanh(),
                   Activation::sigmoid(), Activation::identity()})
    EXPECT_EQ(parse_activation(to_string(act)), act);
  EXPECT_EQ(parse_activation("linear"), Activation::identity());
  EXPECT_THROW(parse_activation("softplus"), std::invalid_argument);
  EXPECT_THROW(parse_activation("elu:x"), std::invalid_argument);
  EXPECT_THROW(Activation::leaky_relu(-1.0), std::invalid_argument);
}

TEST(Network, ForwardByHand) {
  Network net;
  net.layers.push_back({Matrix::from_rows({{1.0, -1.0}, {2.0, 0.5}}), {0.0, -1.0}, Activation::relu()});
  net.layers.push_back({Matrix::from_rows({{1.0, 3.0}}), {0.25}, Activation::identity()});
  const auto y = predict_one(net, std::vector<double>{1.0, 2.0});
  // hidden: relu(1-2)=0, relu(2+1-1)=2 ; output 0 + 6 + 0.25
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 6.25);
}

TEST(Network, WidthMismatchAndEmptyBatch) {
  Rng rng(1);
  auto net = make_network({3, 4, 1}, Activation::relu(), Activation::identity(), rng);
  EXPECT_THROW(forward(net, Matrix(2, 5)), std::invalid_argument);
  const auto t = forward(net, Matrix(0, 3));
  EXPECT_EQ(t.batch_size(), 0u);
  EXPECT_EQ(t.output().rows(), 0u);
}

TEST(Network, ValidateRejectsBrokenChains) {
  Rng rng(2);
  auto net = make_network({3, 4, 2}, Activation::relu(), Activation::identity(), rng);
  EXPECT_NO_THROW(net.validate());
  auto bad = net;
  bad.layers[1].weight = Matrix(2, 5);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = net;
  bad.layers[0].bias[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(Network{}.validate(), std::invalid_argument);
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  for (auto act : {Activation::relu(), Activation::leaky_relu(0.1), Activation::elu(1.0), Activation::tanh()}) {
    Network net = testutil::random_relu_net(rng, 3, 4, 2, act);
    const Matrix x = testutil::random_matrix(5, 4, rng);
    const Matrix target = testutil::random_matrix(5, 2, rng);
    auto loss = [&]() {
      const Matrix y = predict(net, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * std::pow(y.values()[i] - target.values()[i], 2);
      return s;
    };
    const auto trace = forward(net, x);
    Matrix dy = trace.output();
    for (std::size_t i = 0; i < dy.size(); ++i) dy.values()[i] -= target.values()[i];
    const auto g = backward(net, trace, dy);
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      auto w = net.layers[l].weight.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + 1e-6;
        const double up = loss();
        w[i] = saved - 1e-6;
        const double down = loss();
        w[i] = saved;
        EXPECT_NEAR(g.params.weight[l].values()[i], (up - down) / 2e-6, 1e-6) << to_string(act);
      }
      auto& b = net.layers[l].bias;
      for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_NEAR(g.params.bias[l][i], testutil::central_difference(b, i, loss), 1e-6) << to_string(act);
      }
    }
    // Input gradient.
    Matrix xp = x;
    for (std::size_t i = 0; i < xp.size(); ++i) {
      const double saved = xp.values()[i];
      auto at = [&](double v) {
        xp.values()[i] = v;
        const Matrix y = predict(net, xp);
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) s += 0.5 * std::pow(y.values()[k] - target.values()[k], 2);
        return s;
      };
      const double fd = (at(saved + 1e-6) - at(saved - 1e-6)) / 2e-6;
      xp.values()[i] = saved;
      EXPECT_NEAR(g.input_grad.values()[i], fd, 1e-6);
    }
  }
}

TEST(Network, BackwardRejectsStaleTrace) {
  Rng rng(4);
  auto net = make_network({2, 3, 1}, Activation::relu(), Activation::identity(), rng);
  const auto trace = forward(net, Matrix(4, 2, 0.5));
  EXPECT_THROW(backward(net, trace, Matrix(3, 1)), std::invalid_argument);
  auto other = make_network({2, 5, 1}, Activation::relu(), Activation::identity(), rng);
  EXPECT_THROW(backward(other, trace, Matrix(4, 1)), std::invalid_argument);
}

TEST(Network, MseLoss) {
  const std::vector<double> p{1.0, 2.0, 4.0}, t{1.0, 0.0, 1.0};
  const auto r = mse_loss_and_grad(p, t);
  EXPECT_DOUBLE_EQ(r.loss, (0.0 + 4.0 + 9.0) / 3.0);
  EXPECT_DOUBLE_EQ(r.grad[1], 2.0 * 2.0 / 3.0);
  EXPECT_THROW(mse_loss_and_grad(p, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(mse_loss_and_grad(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST(Network, SerializationRoundTripIsExact) {
  Rng rng(5);
  for (auto act : {Activation::relu(), Activation::leaky_relu(0.013), Activation::elu(0.3)}) {
    auto net = testutil::random_relu_net(rng, 3, 4, 2, act);
    const auto text = network_to_string(net);
    EXPECT_EQ(network_from_string(text), net);
    EXPECT_EQ(network_to_string(network_from_string(text)), text);
  }
}

TEST(Network, ParseErrorsAreReported) {
  EXPECT_THROW(network_from_string("garbage"), std::runtime_error);
  Rng rng(6);
  auto text = network_to_string(make_network({2, 2, 1}, Activation::relu(), Activation::identity(), rng));
  EXPECT_THROW(network_from_string(text.substr(0, text.size() / 2)), std::runtime_error);
}

TEST(Network, ParameterCountAndGradientHelpers) {
  Rng rng(7);
  auto net = make_network({3, 4, 2}, Activation::relu(), Activation::identity(), rng);
  EXPECT_EQ(net.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
  auto g = Gradients::zeros_like(net);
  EXPECT_TRUE(g.matches(net));
  g.bias[1][0] = 3.0;
  g.weight[0](0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(g.norm(), 5.0);
  g.scale(2.0);
  EXPECT_DOUBLE_EQ(g.norm(), 10.0);
  EXPECT_TRUE(g.all_finite());
}
