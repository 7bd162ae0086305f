#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rescale_rl/envs.hpp"
#include "rescale_rl/network.hpp"
#include "rescale_rl/optimizer.hpp"
#include "rescale_rl/popart.hpp"
#include "rescale_rl/scaling.hpp"

namespace rescale {

// ---------------------------------------------------------------------------
// Advantages

// One environment's slice of a rollout. Rewards are in critic units (already multiplied by
// the current scale), as are values.
struct TrajectorySegment {
  std::vector<double> rewards;
  std::vector<double> values;             // V(s_t)
  std::vector<bool> terminal;             // episode ended in an absorbing state after step t
  std::vector<bool> truncated;            // episode hit the horizon after step t
  std::vector<double> truncation_values;  // V(s_{t+1}) for truncated steps, ignored otherwise
  double bootstrap_value = 0.0;           // V(s_T) for the state after the last step
};

struct AdvantageEstimate {
  std::vector<double> returns;     // n-step bootstrapped returns, critic units
  std::vector<double> advantages;  // (returns - values) / scale, fed to the actor
};

// n-step returns against scaled rewards; the advantage handed to the actor is divided by the
// reward scale so its magnitude does not depend on the scale. With bootstrap_on_truncation the
// horizon is treated as a time limit and the return bootstraps from V(s_{t+1}).
inline AdvantageEstimate compute_advantages(const TrajectorySegment& seg, double gamma, double scale,
                                            bool bootstrap_on_truncation = true) {
  const std::size_t n = seg.rewards.size();
  if (n == 0) throw std::invalid_argument("compute_advantages: empty trajectory");
  if (seg.values.size() != n || seg.terminal.size() != n || seg.truncated.size() != n)
    throw std::invalid_argument("compute_advantages: ragged trajectory");
  if (!(scale > 0.0)) throw std::invalid_argument("compute_advantages: scale must be positive");
  const bool have_trunc_values = seg.truncation_values.size() == n;
  AdvantageEstimate est{std::vector<double>(n), std::vector<double>(n)};
  double ret = seg.bootstrap_value;
  for (std::size_t k = n; k-- > 0;) {
    if (seg.terminal[k]) {
      ret = seg.rewards[k];
    } else if (seg.truncated[k]) {
      const double tail = bootstrap_on_truncation && have_trunc_values ? seg.truncation_values[k] : 0.0;
      ret = seg.rewards[k] + (bootstrap_on_truncation ? gamma * tail : 0.0);
    } else {
      ret = seg.rewards[k] + gamma * ret;
    }
    est.returns[k] = ret;
    est.advantages[k] = (ret - seg.values[k]) / scale;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Shared helpers

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

inline Matrix column(std::span<const double> v) { return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end())); }

// target <- tau * online + (1 - tau) * target
inline void soft_update(Network& target, const Network& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  if (target.n_layers() != online.n_layers()) throw std::invalid_argument("soft_update: layer count mismatch");
  for (std::size_t i = 0; i < target.n_layers(); ++i) {
    auto& t = target.layers[i];
    const auto& o = online.layers[i];
    if (!t.weight.same_shape(o.weight) || t.bias.size() != o.bias.size())
      throw std::invalid_argument("soft_update: shape mismatch at layer " + std::to_string(i));
  }
  for (std::size_t i = 0; i < target.n_layers(); ++i) {
    auto tw = target.layers[i].weight.values();
    const auto ow = online.layers[i].weight.values();
    for (std::size_t k = 0; k < tw.size(); ++k) tw[k] = tau * ow[k] + (1.0 - tau) * tw[k];
    auto& tb = target.layers[i].bias;
    const auto& ob = online.layers[i].bias;
    for (std::size_t k = 0; k < tb.size(); ++k) tb[k] = tau * ob[k] + (1.0 - tau) * tb[k];
  }
}

inline std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

// ---------------------------------------------------------------------------
// A2C

struct A2cConfig {
  double gamma = 0.99;
  std::size_t n_envs = 16;
  std::size_t rollout = 5;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu();
  OptimizerConfig actor_optimizer = OptimizerConfig::adam(7e-4);
  OptimizerConfig critic_optimizer = OptimizerConfig::adam(7e-4);
  bool bootstrap_on_truncation = true;
};

struct A2cBatch {
  Matrix states;
  std::vector<Action> actions;
  std::vector<double> critic_targets;  // in critic output units
  std::vector<double> advantages;      // in actor units
};

struct A2cLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct PolicyGradient {
  double loss = 0.0;
  double entropy = 0.0;
  Gradients actor;
  std::vector<double> log_std;  // Gaussian head only
};

struct ValueGradient {
  double loss = 0.0;
  Gradients critic;
};

class A2cAgent {
 public:
  A2cAgent(std::size_t obs_dim, ActionSpace space, A2cConfig config, Rng& rng)
      : config_(std::move(config)), space_(space) {
    if (!(config_.gamma > 0.0 && config_.gamma < 1.0)) throw std::invalid_argument("a2c: gamma must lie in (0, 1)");
    if (config_.rollout == 0 || config_.n_envs == 0) throw std::invalid_argument("a2c: empty rollout");
    actor = make_network(layer_widths(obs_dim, config_.hidden, space.n), config_.activation, Activation::identity(), rng);
    critic = make_network(layer_widths(obs_dim, config_.hidden, 1), config_.activation, Activation::identity(), rng);
    actor_opt = Optimizer(config_.actor_optimizer);
    critic_opt = Optimizer(config_.critic_optimizer);
    if (!space.is_discrete()) {
      log_std.assign(space.n, 0.0);
      log_std_opt = Optimizer(config_.actor_optimizer);
    }
  }

  const A2cConfig& config() const { return config_; }
  const ActionSpace& action_space() const { return space_; }

  std::vector<Action> act(const Matrix& states, Rng& rng) const {
    const Matrix out = predict(actor, states);
    std::vector<Action> actions;
    actions.reserve(states.rows());
    for (std::size_t b = 0; b < states.rows(); ++b) {
      if (space_.is_discrete()) {
        const auto p = softmax(out.row(b));
        std::discrete_distribution<std::size_t> d(p.begin(), p.end());
        actions.push_back(Action::discrete(d(rng)));
      } else {
        std::vector<double> a(space_.n);
        for (std::size_t d = 0; d < space_.n; ++d) {
          std::normal_distribution<double> nd(out(b, d), std::exp(log_std[d]));
          a[d] = nd(rng);
        }
        actions.push_back(Action::continuous(std::move(a)));
      }
    }
    return actions;
  }

  std::vector<double> values(const Matrix& states) const {
    const Matrix v = predict(critic, states);
    return {v.values().begin(), v.values().end()};
  }

  // Loss -(1/N) sum A_i log pi(a_i|s_i) - entropy_coef * mean entropy, and its gradient.
  PolicyGradient policy_gradient(const A2cBatch& batch) const {
    const std::size_t n = batch.states.rows();
    check_batch(batch);
    const ForwardTrace trace = forward(actor, batch.states);
    const Matrix& out = trace.output();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double beta = config_.entropy_coef;
    Matrix d_out(n, out.cols());
    PolicyGradient pg;
    if (space_.is_discrete()) {
      for (std::size_t b = 0; b < n; ++b) {
        const auto logp = log_softmax(out.row(b));
        double h = 0.0;
        for (double lp : logp) h -= std::exp(lp) * lp;
        const std::size_t a = batch.actions[b].index;
        const double adv = batch.advantages[b];
        pg.loss -= inv_n * (adv * logp[a] + beta * h);
        pg.entropy += inv_n * h;
        for (std::size_t j = 0; j < logp.size(); ++j) {
          const double p = std::exp(logp[j]);
          const double dlogp = (j == a ? 1.0 : 0.0) - p;
          const double dh = -p * (logp[j] + h);
          d_out(b, j) = -inv_n * (adv * dlogp + beta * dh);
        }
      }
    } else {
      pg.log_std.assign(space_.n, 0.0);
      const double half_log_2pi_e = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
      for (std::size_t b = 0; b < n; ++b) {
        const double adv = batch.advantages[b];
        double logp = 0.0;
        for (std::size_t d = 0; d < space_.n; ++d) {
          const double sigma = std::exp(log_std[d]);
          const double diff = batch.actions[b].values[d] - out(b, d);
          const double zz = diff / sigma;
          logp += -0.5 * zz * zz - log_std[d] - 0.5 * std::log(2.0 * std::numbers::pi);
          d_out(b, d) = -inv_n * adv * diff / (sigma * sigma);
          pg.log_std[d] += -inv_n * adv * (zz * zz - 1.0);
        }
        pg.loss -= inv_n * adv * logp;
      }
      double h = 0.0;
      for (std::size_t d = 0; d < space_.n; ++d) {
        h += log_std[d] + half_log_2pi_e;
        pg.log_std[d] -= beta;
      }
      pg.loss -= beta * h;
      pg.entropy = h;
    }
    pg.actor = backward(actor, trace, d_out).params;
    return pg;
  }

  ValueGradient value_gradient(const A2cBatch& batch) const {
    check_batch(batch);
    const ForwardTrace trace = forward(critic, batch.states);
    const auto pred = trace.output().values();
    auto mse = mse_loss_and_grad(pred, batch.critic_targets);
    for (double& g : mse.grad) g *= config_.value_coef;
    ValueGradient vg;
    vg.loss = mse.loss;
    vg.critic = backward(critic, trace, column(mse.grad)).params;
    return vg;
  }

  // One synchronous update of both networks. `clipper`, when given, caps the policy gradient
  // norm after scale events.
  A2cLosses update(const A2cBatch& batch, PostScaleClipper* clipper = nullptr) {
    PolicyGradient pg = policy_gradient(batch);
    ValueGradient vg = value_gradient(batch);
    if (!std::isfinite(pg.loss) || !std::isfinite(vg.loss))
      throw std::runtime_error("a2c: non-finite loss (policy " + std::to_string(pg.loss) + ", value " +
                               std::to_string(vg.loss) + "), training halted");
    if (clipper) clipper->apply(pg.actor);
    actor_opt.step(actor, pg.actor);
    if (!log_std.empty()) log_std_opt.step(std::span<double>(log_std), std::span<const double>(pg.log_std));
    critic_opt.step(critic, vg.critic);
    return {pg.loss, vg.loss, pg.entropy};
  }

  // Network surgery after a reward-scale change by factor c.
  void rescale_critic(double c, bool reset_optimizer = true) {
    critic = scale_network(critic, c);
    if (reset_optimizer) critic_opt.reset();
  }

  Network actor;
  Network critic;
  Optimizer actor_opt;
  Optimizer critic_opt;
  std::vector<double> log_std;
  Optimizer log_std_opt;

 private:
  void check_batch(const A2cBatch& batch) const {
    const std::size_t n = batch.states.rows();
    if (n == 0) throw std::invalid_argument("a2c: empty batch");
    if (batch.actions.size() != n || batch.advantages.size() != n || batch.critic_targets.size() != n)
      throw std::invalid_argument("a2c: ragged batch");
  }

  A2cConfig config_;
  ActionSpace space_;
};

// ---------------------------------------------------------------------------
// DDPG

struct ReplayItem {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;  // raw; the current scale is applied when sampled
  std::vector<double> next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  }

  void push(ReplayItem item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayItem& operator[](std::size_t i) const { return items_[i]; }

  std::vector<const ReplayItem*> sample(std::size_t n, Rng& rng) const {
    if (items_.empty()) return {};
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<const ReplayItem*> out(n);
    for (auto& p : out) p = &items_[pick(rng)];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<ReplayItem> items_;
};

// y = r + gamma * Q'(s', mu'(s')) for non-terminal transitions, y = r otherwise.
inline double ddpg_target(double scaled_reward, double gamma, double next_q, bool terminal) {
  return terminal ? scaled_reward : scaled_reward + gamma * next_q;
}

struct DdpgConfig {
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 100000;
  std::size_t warmup = 1000;
  double noise_sigma = 0.1;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu();
  OptimizerConfig actor_optimizer = OptimizerConfig::adam(1e-4);
  OptimizerConfig critic_optimizer = OptimizerConfig::adam(1e-3);
};

struct DdpgLosses {
  double critic_loss = 0.0;
  double actor_objective = 0.0;  // mean Q(s, mu(s)) in critic units
  bool updated = false;
};

class DdpgAgent {
 public:
  DdpgAgent(std::size_t obs_dim, ActionSpace space, DdpgConfig config, Rng& rng)
      : config_(std::move(config)), space_(space), buffer(config_.buffer_capacity) {
    if (space.is_discrete()) throw std::invalid_argument("ddpg: needs a continuous action space");
    if (!(config_.gamma > 0.0 && config_.gamma < 1.0)) throw std::invalid_argument("ddpg: gamma must lie in (0, 1)");
    if (!(config_.tau > 0.0 && config_.tau <= 1.0)) throw std::invalid_argument("ddpg: tau must lie in (0, 1]");
    actor = make_network(layer_widths(obs_dim, config_.hidden, space.n), config_.activation, Activation::tanh(), rng);
    critic = make_network(layer_widths(obs_dim + space.n, config_.hidden, 1), config_.activation,
                          Activation::identity(), rng);
    target_actor = actor;
    target_critic = critic;
    actor_opt = Optimizer(config_.actor_optimizer);
    critic_opt = Optimizer(config_.critic_optimizer);
  }

  const DdpgConfig& config() const { return config_; }
  std::size_t obs_dim() const { return actor.input_dim(); }
  std::size_t action_dim() const { return space_.n; }

  // Maps the actor's tanh output in [-1, 1] onto the action box.
  double to_action(double u) const { return space_.low + 0.5 * (u + 1.0) * (space_.high - space_.low); }
  double action_half_range() const { return 0.5 * (space_.high - space_.low); }

  Matrix policy_actions(const Network& policy, const Matrix& states) const {
    Matrix a = predict(policy, states);
    for (double& v : a.values()) v = to_action(v);
    return a;
  }

  std::vector<double> act(std::span<const double> state, Rng* explore_rng) const {
    auto u = predict_one(actor, state);
    std::normal_distribution<double> noise(0.0, config_.noise_sigma);
    for (double& v : u) {
      v = to_action(v);
      if (explore_rng) v = std::clamp(v + noise(*explore_rng), space_.low, space_.high);
    }
    return u;
  }

  Matrix critic_inputs(const Matrix& states, const Matrix& actions) const {
    Matrix x(states.rows(), states.cols() + actions.cols());
    for (std::size_t b = 0; b < states.rows(); ++b) {
      auto row = x.row(b);
      std::copy(states.row(b).begin(), states.row(b).end(), row.begin());
      std::copy(actions.row(b).begin(), actions.row(b).end(), row.begin() + static_cast<long>(states.cols()));
    }
    return x;
  }

  // Critic regression toward r*scale + gamma Q'(s', mu'(s')), then one deterministic policy
  // gradient step. The critic's action-gradient is divided by `scale` before reaching the actor.
  DdpgLosses update(const std::vector<const ReplayItem*>& batch, double scale) {
    DdpgLosses losses;
    if (batch.empty()) return losses;
    const std::size_t n = batch.size();
    Matrix s(n, obs_dim()), a(n, action_dim()), s2(n, obs_dim());
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(batch[b]->state.begin(), batch[b]->state.end(), s.row(b).begin());
      std::copy(batch[b]->action.begin(), batch[b]->action.end(), a.row(b).begin());
      std::copy(batch[b]->next_state.begin(), batch[b]->next_state.end(), s2.row(b).begin());
    }
    const Matrix next_q = predict(target_critic, critic_inputs(s2, policy_actions(target_actor, s2)));
    std::vector<double> y(n);
    for (std::size_t b = 0; b < n; ++b) {
      const double q = popart ? popart->denormalize(next_q(b, 0)) : next_q(b, 0);
      y[b] = ddpg_target(scale * batch[b]->reward, config_.gamma, q, batch[b]->terminal);
    }
    if (popart) {
      const double old_sigma = popart->sigma(), old_mu = popart->mu();
      popart->observe_and_update(y, critic.layers.back());
      preserve_outputs(target_critic.layers.back(), old_sigma, old_mu, popart->sigma(), popart->mu());
      for (double& v : y) v = popart->normalize(v);
    }

    const ForwardTrace ct = forward(critic, critic_inputs(s, a));
    const auto mse = mse_loss_and_grad(ct.output().values(), y);
    if (!std::isfinite(mse.loss)) throw std::runtime_error("ddpg: non-finite critic loss, training halted");
    critic_opt.step(critic, backward(critic, ct, column(mse.grad)).params);
    losses.critic_loss = mse.loss;

    const ForwardTrace at = forward(actor, s);
    Matrix mu = at.output();
    for (double& v : mu.values()) v = to_action(v);
    const ForwardTrace qt = forward(critic, critic_inputs(s, mu));
    const double q_unit = popart ? popart->sigma() : 1.0;
    Matrix dq(n, 1, -q_unit / (static_cast<double>(n) * scale));
    const Matrix dx = backward(critic, qt, dq).input_grad;
    Matrix du(n, action_dim());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t d = 0; d < action_dim(); ++d) du(b, d) = dx(b, obs_dim() + d) * action_half_range();
    Gradients ga = backward(actor, at, du).params;
    if (clipper) clipper->apply(ga);
    actor_opt.step(actor, ga);
    for (double q : qt.output().values())
      losses.actor_objective += (popart ? popart->denormalize(q) : q) / static_cast<double>(n);

    soft_update(target_actor, actor, config_.tau);
    soft_update(target_critic, critic, config_.tau);
    losses.updated = true;
    return losses;
  }

  // Scales both critics by c so targets stay consistent after a reward-scale change.
  void rescale_critic(double c, bool reset_optimizer = true) {
    critic = scale_network(critic, c);
    target_critic = scale_network(target_critic, c);
    if (reset_optimizer) critic_opt.reset();
  }

  Network actor;
  Network critic;
  Network target_actor;
  Network target_critic;
  Optimizer actor_opt;
  Optimizer critic_opt;
  PostScaleClipper* clipper = nullptr;
  PopArt* popart = nullptr;  // when set, the critics predict normalised values

 private:
  DdpgConfig config_;
  ActionSpace space_;

 public:
  ReplayBuffer buffer;
};

}  // namespace rescale
