#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "rescale_rl/network.hpp"

namespace rescale {

struct PopArtConfig {
  double step_size = 3e-4;
  double variance_floor = 1e-4;
  double sigma_min = 1e-4;
  double sigma_max = 1e6;
};

// Rewrites a scalar output layer so that sigma * (W h + b) + mu is unchanged when the
// statistics move from (sigma, mu) to (new_sigma, new_mu).
inline void preserve_outputs(DenseLayer& layer, double sigma, double mu, double new_sigma, double new_mu) {
  if (!(sigma > 0.0) || !(new_sigma > 0.0)) throw std::invalid_argument("popart: sigma must be positive");
  const double ratio = sigma / new_sigma;
  for (double& w : layer.weight.values()) w *= ratio;
  for (double& b : layer.bias) b = (sigma * b + mu - new_mu) / new_sigma;
}

// Adaptive target normalisation for a scalar critic head. The wrapped network predicts the
// normalised value g(x); the unnormalised value is sigma * g(x) + mu.
class PopArt {
 public:
  explicit PopArt(PopArtConfig config = {}) : config_(config) {
    if (!(config_.step_size > 0.0 && config_.step_size <= 1.0))
      throw std::invalid_argument("popart: step size must lie in (0, 1]");
  }

  double sigma() const { return sigma_; }
  double mu() const { return mu_; }
  const PopArtConfig& config() const { return config_; }

  double normalize(double y) const { return (y - mu_) / sigma_; }
  double denormalize(double y_hat) const { return sigma_ * y_hat + mu_; }

  // Moves the running moments toward the targets one sample at a time, then adjusts the
  // output layer so unnormalised predictions are preserved.
  void observe_and_update(std::span<const double> targets, DenseLayer& output_layer) {
    if (output_layer.out_dim() != 1) throw std::invalid_argument("popart: output layer must be scalar");
    for (double y : targets)
      if (!std::isfinite(y)) throw std::domain_error("popart: non-finite target");
    const double beta = config_.step_size;
    for (double y : targets) {
      first_ = (1.0 - beta) * first_ + beta * y;
      second_ = (1.0 - beta) * second_ + beta * y * y;
    }
    const double variance = std::max(second_ - first_ * first_, config_.variance_floor);
    const double new_sigma = std::clamp(std::sqrt(variance), config_.sigma_min, config_.sigma_max);
    const double new_mu = first_;
    preserve_outputs(output_layer, sigma_, mu_, new_sigma, new_mu);
    sigma_ = new_sigma;
    mu_ = new_mu;
  }

  // Directly sets statistics (used for checkpoints and tests), preserving outputs.
  void set_statistics(double new_sigma, double new_mu, DenseLayer& output_layer) {
    preserve_outputs(output_layer, sigma_, mu_, new_sigma, new_mu);
    sigma_ = new_sigma;
    mu_ = new_mu;
    first_ = new_mu;
    second_ = new_sigma * new_sigma + new_mu * new_mu;
  }

 private:
  PopArtConfig config_;
  double sigma_ = 1.0;
  double mu_ = 0.0;
  double first_ = 0.0;
  double second_ = 1.0;
};

}  // namespace rescale
