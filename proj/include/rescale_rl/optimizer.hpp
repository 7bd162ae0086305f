#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rescale_rl/network.hpp"

namespace rescale {

enum class OptimizerKind { Sgd, Adam, RmsProp };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  // SGD
  double momentum = 0.0;
  bool nesterov = false;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  // Adam and RMSprop. Zero is accepted so the scale-cancellation property can be checked exactly.
  double epsilon = 1e-8;
  // Adam only: theta -= lr * m_hat / sqrt(v_hat + eps). When false, the usual
  // lr * m_hat / (sqrt(v_hat) + eps) is used.
  bool epsilon_inside_sqrt = true;
  // RMSprop
  double decay = 0.99;

  static OptimizerConfig sgd(double lr, double momentum = 0.0, bool nesterov = false) {
    OptimizerConfig c;
    c.kind = OptimizerKind::Sgd;
    c.learning_rate = lr;
    c.momentum = momentum;
    c.nesterov = nesterov;
    return c;
  }
  static OptimizerConfig adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    OptimizerConfig c;
    c.kind = OptimizerKind::Adam;
    c.learning_rate = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.epsilon = eps;
    return c;
  }
  static OptimizerConfig rmsprop(double lr, double decay = 0.99, double eps = 1e-5) {
    OptimizerConfig c;
    c.kind = OptimizerKind::RmsProp;
    c.learning_rate = lr;
    c.decay = decay;
    c.epsilon = eps;
    return c;
  }
};

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "adam";
}

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "rmsprop") return OptimizerKind::RmsProp;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

// Stateful first-order optimizer. Moment buffers are allocated on the first step and are
// keyed by tensor position, so one instance must always be fed the same parameter layout.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (config_.epsilon < 0.0) throw std::invalid_argument("optimizer: epsilon must be non-negative");
    if (config_.kind == OptimizerKind::Adam &&
        !(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0))
      throw std::invalid_argument("optimizer: Adam betas must lie in [0, 1)");
  }

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }

  // Drops moment buffers and the step counter.
  void reset() {
    t_ = 0;
    first_.clear();
    second_.clear();
  }

  void step(Network& net, const Gradients& grads) {
    if (!grads.matches(net)) throw std::invalid_argument("optimizer: gradient shapes do not match network");
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> gs;
    for_each_parameter(net, grads, [&](std::span<double> p, std::span<const double> g) {
      params.push_back(p);
      gs.push_back(g);
    });
    apply(params, gs);
  }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient size mismatch");
    std::vector<std::span<double>> p{params};
    std::vector<std::span<const double>> g{grads};
    apply(p, g);
  }

 private:
  void apply(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    for (const auto& g : grads)
      for (double v : g)
        if (!std::isfinite(v)) throw std::domain_error("optimizer: non-finite gradient, step rejected");
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    } else {
      bool ok = first_.size() == params.size();
      for (std::size_t i = 0; ok && i < params.size(); ++i) ok = first_[i].size() == params[i].size();
      if (!ok) throw std::invalid_argument("optimizer: parameter layout changed between steps");
    }
    ++t_;
    const double lr = config_.learning_rate;
    switch (config_.kind) {
      case OptimizerKind::Sgd:
        for (std::size_t k = 0; k < params.size(); ++k) {
          auto p = params[k];
          auto g = grads[k];
          auto& vel = first_[k];
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (config_.momentum == 0.0) {
              p[i] -= lr * g[i];
              continue;
            }
            vel[i] = config_.momentum * vel[i] + g[i];
            p[i] -= lr * (config_.nesterov ? g[i] + config_.momentum * vel[i] : vel[i]);
          }
        }
        break;
      case OptimizerKind::Adam: {
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
          auto p = params[k];
          auto g = grads[k];
          auto& m = first_[k];
          auto& v = second_[k];
          for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            const double denom = config_.epsilon_inside_sqrt ? std::sqrt(v_hat + config_.epsilon)
                                                             : std::sqrt(v_hat) + config_.epsilon;
            if (denom > 0.0) p[i] -= lr * m_hat / denom;
          }
        }
        break;
      }
      case OptimizerKind::RmsProp:
        for (std::size_t k = 0; k < params.size(); ++k) {
          auto p = params[k];
          auto g = grads[k];
          auto& acc = second_[k];
          for (std::size_t i = 0; i < p.size(); ++i) {
            acc[i] = config_.decay * acc[i] + (1.0 - config_.decay) * g[i] * g[i];
            const double denom = std::sqrt(acc[i]) + config_.epsilon;
            if (denom > 0.0) p[i] -= lr * g[i] / denom;
          }
        }
        break;
    }
  }

  OptimizerConfig config_{};
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace rescale
