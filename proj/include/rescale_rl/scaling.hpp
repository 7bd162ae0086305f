#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rescale_rl/network.hpp"

namespace rescale {

// Per-layer multipliers for output scaling. Layer i (0-based) has its weights multiplied by
// weight_factor[i] and its bias by bias_factor[i] = prod_{k<=i} weight_factor[k], so the last
// bias factor equals the overall output scale c.
struct ScalePlan {
  double c = 1.0;
  std::vector<double> weight_factor;
  std::vector<double> bias_factor;

  // Equal split: every layer gets c^(1/n).
  static ScalePlan equal(double c, std::size_t n_layers) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("ScalePlan: c must be positive and finite");
    if (n_layers == 0) throw std::invalid_argument("ScalePlan: network has no layers");
    const double f = c == 1.0 ? 1.0 : std::pow(c, 1.0 / static_cast<double>(n_layers));
    return from_factors(std::vector<double>(n_layers, f));
  }

  static ScalePlan from_factors(std::vector<double> factors) {
    if (factors.empty()) throw std::invalid_argument("ScalePlan: no factors");
    ScalePlan p;
    double running = 1.0;
    for (double f : factors) {
      if (!(f > 0.0) || !std::isfinite(f)) throw std::invalid_argument("ScalePlan: factors must be positive");
      running *= f;
      p.bias_factor.push_back(running);
    }
    p.weight_factor = std::move(factors);
    p.c = running;
    return p;
  }

  std::size_t n_layers() const { return weight_factor.size(); }
};

// Returns a network whose output is exactly c times the input network's output for every input,
// f'(x) = c f(x). The constraint on the last layer is on the cumulative product r_n = c, not on
// the last factor alone.
// Hidden layers must be positively homogeneous (ReLU / LeakyReLU) and the output layer affine.
inline Network scale_network(const Network& net, const ScalePlan& plan) {
  net.validate();
  if (plan.n_layers() != net.n_layers())
    throw std::invalid_argument("scale_network: plan has " + std::to_string(plan.n_layers()) + " layers, network has " +
                                std::to_string(net.n_layers()));
  for (std::size_t i = 0; i < net.n_layers(); ++i) {
    const auto& act = net.layers[i].activation;
    const bool last = i + 1 == net.n_layers();
    const bool ok = last ? act.type == ActivationType::Identity
                         : act.type == ActivationType::ReLU || act.type == ActivationType::LeakyReLU;
    if (!ok)
      throw std::invalid_argument("scale_network: layer " + std::to_string(i) + " uses " + to_string(act) +
                                  ", which is not positively homogeneous");
  }
  Network out = net;
  for (std::size_t i = 0; i < out.n_layers(); ++i) {
    auto& l = out.layers[i];
    for (double& w : l.weight.values()) w *= plan.weight_factor[i];
    for (double& b : l.bias) b *= plan.bias_factor[i];
  }
  return out;
}

inline Network scale_network(const Network& net, double c) { return scale_network(net, ScalePlan::equal(c, net.n_layers())); }

enum class ParamKind { Weight, Bias };

// Ratio between a parameter's MSE gradient in the scaled network (trained toward c*y) and the
// same parameter's gradient in the original network, under the equal split. `layer` is 1-based.
inline double gradient_scale_factor(ParamKind kind, std::size_t layer, std::size_t n_layers, double c) {
  if (n_layers == 0 || layer < 1 || layer > n_layers)
    throw std::invalid_argument("gradient_scale_factor: layer must be in [1, n]");
  if (!(c > 0.0)) throw std::invalid_argument("gradient_scale_factor: c must be positive");
  const double n = static_cast<double>(n_layers);
  const double exponent = kind == ParamKind::Weight ? 2.0 - 1.0 / n : 2.0 - static_cast<double>(layer) / n;
  return std::pow(c, exponent);
}

// Max-norm cap that starts tight after a scale event and widens geometrically.
struct ClipSchedule {
  double initial_norm = 0.5;
  double growth = 1.2;
  double ceiling = 10.0;

  void validate() const {
    if (!(initial_norm > 0.0)) throw std::invalid_argument("ClipSchedule: initial norm must be positive");
    if (!(growth > 1.0)) throw std::invalid_argument("ClipSchedule: growth must exceed 1");
    if (!(ceiling >= initial_norm)) throw std::invalid_argument("ClipSchedule: ceiling below initial norm");
  }

  double cap(std::size_t steps_since_scale) const {
    return std::min(ceiling, initial_norm * std::pow(growth, static_cast<double>(steps_since_scale)));
  }
};

// Rescales `grads` in place so its global norm is at most the schedule's current cap.
// Returns the norm before clipping.
inline double clip_gradient(Gradients& grads, const ClipSchedule& schedule, std::size_t steps_since_scale) {
  const double norm = grads.norm();
  const double cap = schedule.cap(steps_since_scale);
  if (norm > cap) grads.scale(cap / norm);
  return norm;
}

// Tracks whether post-scale clipping is active and how many updates have passed since the
// last scale event.
class PostScaleClipper {
 public:
  explicit PostScaleClipper(ClipSchedule schedule = {}) : schedule_(schedule) { schedule_.validate(); }

  void on_scale_event() {
    active_ = true;
    steps_ = 0;
  }
  bool active() const { return active_; }
  std::size_t steps_since_scale() const { return steps_; }
  const ClipSchedule& schedule() const { return schedule_; }

  void apply(Gradients& grads) {
    if (!active_) return;
    clip_gradient(grads, schedule_, steps_);
    ++steps_;
  }

 private:
  ClipSchedule schedule_;
  bool active_ = false;
  std::size_t steps_ = 0;
};

}  // namespace rescale
