#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rescale {

struct ActionSpace {
  enum class Kind { Discrete, Box };
  Kind kind = Kind::Discrete;
  std::size_t n = 0;  // number of actions (Discrete) or action dimension (Box)
  double low = -1.0;  // Box bounds, shared by every dimension
  double high = 1.0;

  static ActionSpace discrete(std::size_t n) { return {Kind::Discrete, n, 0.0, 0.0}; }
  static ActionSpace box(std::size_t dim, double low = -1.0, double high = 1.0) { return {Kind::Box, dim, low, high}; }
  bool is_discrete() const { return kind == Kind::Discrete; }
};

struct Action {
  std::size_t index = 0;       // discrete action
  std::vector<double> values;  // continuous action

  static Action discrete(std::size_t i) { return {i, {}}; }
  static Action continuous(std::vector<double> v) { return {0, std::move(v)}; }
  friend bool operator==(const Action&, const Action&) = default;
};

struct Transition {
  std::vector<double> state;
  Action action;
  double reward = 0.0;         // raw environment reward
  double scaled_reward = 0.0;  // reward times the cumulative wrapper scale
  std::vector<double> next_state;
  bool terminal = false;   // reached an absorbing outcome
  bool truncated = false;  // hit the horizon without a terminal outcome

  bool done() const { return terminal || truncated; }
  friend bool operator==(const Transition&, const Transition&) = default;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::vector<double> reset() = 0;
  virtual Transition step(const Action& action) = 0;

  virtual std::size_t observation_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  virtual std::string name() const = 0;

  virtual double reward_scale() const { return 1.0; }
};

// Shared episode bookkeeping: reset-before-step, horizon truncation, step-after-done rejection.
class EpisodicEnv : public Env {
 public:
  std::vector<double> reset() final {
    steps_ = 0;
    started_ = true;
    done_ = false;
    state_ = do_reset();
    return state_;
  }

  Transition step(const Action& action) final {
    if (!started_) throw std::logic_error(name() + ": step before reset");
    if (done_) throw std::logic_error(name() + ": step after episode end");
    Transition t;
    t.state = state_;
    t.action = action;
    t.terminal = do_step(action, t.reward);
    if (!std::isfinite(t.reward)) throw std::domain_error(name() + ": non-finite reward");
    t.scaled_reward = t.reward;
    ++steps_;
    t.truncated = !t.terminal && steps_ >= horizon();
    state_ = observe();
    t.next_state = state_;
    done_ = t.done();
    return t;
  }

  std::size_t steps_taken() const { return steps_; }
  bool episode_done() const { return done_; }

 protected:
  virtual std::vector<double> do_reset() = 0;
  // Applies the action, writes the raw reward, returns true on a terminal outcome.
  virtual bool do_step(const Action& action, double& reward) = 0;
  virtual std::vector<double> observe() const = 0;

 private:
  std::vector<double> state_;
  std::size_t steps_ = 0;
  bool started_ = false;
  bool done_ = false;
};

// Deterministic tabular model used by value iteration.
struct TabularModel {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t start = 0;
  std::vector<std::vector<std::size_t>> next;  // [s][a]
  std::vector<std::vector<double>> reward;     // [s][a]
  std::vector<std::vector<bool>> terminal;     // [s][a]
};

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<std::size_t> policy;
  std::size_t iterations = 0;
};

inline ValueIterationResult value_iteration(const TabularModel& m, double gamma, double tol = 1e-14,
                                            std::size_t max_iter = 100000) {
  ValueIterationResult r;
  r.values.assign(m.n_states, 0.0);
  r.policy.assign(m.n_states, 0);
  for (; r.iterations < max_iter; ++r.iterations) {
    double delta = 0.0;
    std::vector<double> next_v(m.n_states);
    for (std::size_t s = 0; s < m.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < m.n_actions; ++a) {
        const double q = m.reward[s][a] + (m.terminal[s][a] ? 0.0 : gamma * r.values[m.next[s][a]]);
        if (q > best) {
          best = q;
          r.policy[s] = a;
        }
      }
      next_v[s] = best;
      delta = std::max(delta, std::abs(best - r.values[s]));
    }
    r.values = std::move(next_v);
    if (delta <= tol) break;
  }
  return r;
}

// Corridor of n states with one-hot observations. Action 0 moves left, action 1 moves right;
// the episode starts at state 0. Any action taken in the last state pays `magnitude` and ends
// the episode, so the optimal discounted return is magnitude * gamma^(n-1).
class ChainMDP : public EpisodicEnv {
 public:
  ChainMDP(std::size_t n_states = 5, double magnitude = 0.01, std::size_t horizon = 20)
      : n_(n_states), magnitude_(magnitude), horizon_(horizon) {
    if (n_ < 2) throw std::invalid_argument("chain: need at least 2 states");
    if (horizon_ == 0) throw std::invalid_argument("chain: horizon must be positive");
    if (!std::isfinite(magnitude_)) throw std::invalid_argument("chain: non-finite magnitude");
  }

  std::size_t observation_dim() const override { return n_; }
  ActionSpace action_space() const override { return ActionSpace::discrete(2); }
  std::size_t horizon() const override { return horizon_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<ChainMDP>(*this); }
  std::string name() const override { return "chain"; }

  std::size_t position() const { return pos_; }

  TabularModel model() const {
    TabularModel m;
    m.n_states = n_;
    m.n_actions = 2;
    m.start = 0;
    m.next.assign(n_, std::vector<std::size_t>(2));
    m.reward.assign(n_, std::vector<double>(2, 0.0));
    m.terminal.assign(n_, std::vector<bool>(2, false));
    for (std::size_t s = 0; s < n_; ++s) {
      for (std::size_t a = 0; a < 2; ++a) {
        if (s + 1 == n_) {
          m.next[s][a] = s;
          m.reward[s][a] = magnitude_;
          m.terminal[s][a] = true;
        } else {
          m.next[s][a] = a == 0 ? (s == 0 ? 0 : s - 1) : s + 1;
        }
      }
    }
    return m;
  }

 protected:
  std::vector<double> do_reset() override {
    pos_ = 0;
    return observe();
  }
  bool do_step(const Action& action, double& reward) override {
    if (action.index > 1) throw std::invalid_argument("chain: action index out of range");
    if (pos_ + 1 == n_) {
      reward = magnitude_;
      return true;
    }
    reward = 0.0;
    if (action.index == 0) {
      if (pos_ > 0) --pos_;
    } else {
      ++pos_;
    }
    return false;
  }
  std::vector<double> observe() const override {
    std::vector<double> o(n_, 0.0);
    o[pos_] = 1.0;
    return o;
  }

 private:
  std::size_t n_;
  double magnitude_;
  std::size_t horizon_;
  std::size_t pos_ = 0;
};

// Point mass in [-bound, bound]^dim steered toward the origin. Velocity commands are clipped
// to [-1, 1]; reward is -magnitude * ||x - goal||.
class PointMass : public EpisodicEnv {
 public:
  struct Params {
    std::size_t dim = 1;
    double magnitude = 1.0;
    std::size_t horizon = 50;
    double dt = 0.1;
    double bound = 2.0;
    std::uint64_t seed = 0;
    std::vector<double> start;  // fixed start; random in [-1, 1]^dim when empty
  };

  explicit PointMass(Params p) : p_(std::move(p)), rng_(p_.seed) {
    if (p_.dim == 0) throw std::invalid_argument("pointmass: dim must be positive");
    if (!p_.start.empty() && p_.start.size() != p_.dim) throw std::invalid_argument("pointmass: start has wrong size");
    if (p_.horizon == 0) throw std::invalid_argument("pointmass: horizon must be positive");
    x_.assign(p_.dim, 0.0);
  }

  std::size_t observation_dim() const override { return p_.dim; }
  ActionSpace action_space() const override { return ActionSpace::box(p_.dim, -1.0, 1.0); }
  std::size_t horizon() const override { return p_.horizon; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointMass>(*this); }
  std::string name() const override { return p_.dim == 1 ? "pointmass1d" : "pointmass2d"; }

 protected:
  std::vector<double> do_reset() override {
    if (p_.start.empty()) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (auto& v : x_) v = u(rng_);
    } else {
      x_ = p_.start;
    }
    return observe();
  }
  bool do_step(const Action& action, double& reward) override {
    if (action.values.size() != p_.dim) throw std::invalid_argument("pointmass: action has wrong dimension");
    double dist2 = 0.0;
    for (std::size_t i = 0; i < p_.dim; ++i) {
      const double a = std::clamp(action.values[i], -1.0, 1.0);
      x_[i] = std::clamp(x_[i] + p_.dt * a, -p_.bound, p_.bound);
      dist2 += x_[i] * x_[i];
    }
    reward = -p_.magnitude * std::sqrt(dist2);
    return false;
  }
  std::vector<double> observe() const override { return x_; }

 private:
  Params p_;
  std::mt19937_64 rng_;
  std::vector<double> x_;
};

// One-step continuous bandit: reward = magnitude * (1 - (a - target)^2) for a in [-1, 1].
class Bandit : public EpisodicEnv {
 public:
  Bandit(double magnitude = 1.0, double target = 0.5) : magnitude_(magnitude), target_(target) {}

  std::size_t observation_dim() const override { return 1; }
  ActionSpace action_space() const override { return ActionSpace::box(1, -1.0, 1.0); }
  std::size_t horizon() const override { return 1; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<Bandit>(*this); }
  std::string name() const override { return "bandit"; }

  double expected_reward(double a) const {
    const double c = std::clamp(a, -1.0, 1.0);
    return magnitude_ * (1.0 - (c - target_) * (c - target_));
  }

 protected:
  std::vector<double> do_reset() override { return {1.0}; }
  bool do_step(const Action& action, double& reward) override {
    if (action.values.size() != 1) throw std::invalid_argument("bandit: action has wrong dimension");
    reward = expected_reward(action.values[0]);
    return true;
  }
  std::vector<double> observe() const override { return {1.0}; }

 private:
  double magnitude_;
  double target_;
};

// Same dynamics as the wrapped environment with every reward multiplied by `scale`. The raw
// reward stays in Transition::reward. Wrapping a wrapper folds the scales into one.
class RewardScaleWrapper : public Env {
 public:
  RewardScaleWrapper(std::unique_ptr<Env> inner, double scale) : scale_(check(scale)) {
    if (!inner) throw std::invalid_argument("reward wrapper: null environment");
    if (auto* w = dynamic_cast<RewardScaleWrapper*>(inner.get())) {
      scale_ = check(w->scale_ * scale);
      inner_ = std::move(w->inner_);
    } else {
      inner_ = std::move(inner);
    }
  }

  std::vector<double> reset() override { return inner_->reset(); }
  Transition step(const Action& action) override {
    Transition t = inner_->step(action);
    t.scaled_reward = scale_ * t.reward;
    return t;
  }

  std::size_t observation_dim() const override { return inner_->observation_dim(); }
  ActionSpace action_space() const override { return inner_->action_space(); }
  std::size_t horizon() const override { return inner_->horizon(); }
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<RewardScaleWrapper>(inner_->clone(), scale_);
  }
  std::string name() const override { return inner_->name(); }
  double reward_scale() const override { return scale_; }

  void set_scale(double s) { scale_ = check(s); }
  const Env& inner() const { return *inner_; }

 private:
  static double check(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("reward wrapper: scale must be positive");
    return c;
  }

  std::unique_ptr<Env> inner_;
  double scale_;
};

inline std::unique_ptr<RewardScaleWrapper> reward_scale_wrapper(std::unique_ptr<Env> env, double c) {
  return std::make_unique<RewardScaleWrapper>(std::move(env), c);
}

// Environment selection by name plus string parameters (from the experiment config).
inline std::unique_ptr<Env> make_env(const std::string& name, const std::map<std::string, double>& params,
                                     std::uint64_t seed) {
  auto get = [&](const std::string& k, double def) {
    auto it = params.find(k);
    return it == params.end() ? def : it->second;
  };
  auto count = [&](const std::string& k, double def) {
    const double v = get(k, def);
    if (!(v >= 0.0) || v != std::floor(v)) throw std::invalid_argument("env parameter '" + k + "' must be a count");
    return static_cast<std::size_t>(v);
  };
  if (name == "chain")
    return std::make_unique<ChainMDP>(count("n_states", 5), get("magnitude", 0.01), count("horizon", 20));
  if (name == "pointmass1d" || name == "pointmass2d") {
    PointMass::Params p;
    p.dim = name == "pointmass1d" ? 1 : 2;
    p.magnitude = get("magnitude", 1.0);
    p.horizon = count("horizon", 50);
    p.dt = get("dt", 0.1);
    p.seed = seed;
    return std::make_unique<PointMass>(p);
  }
  if (name == "bandit") return std::make_unique<Bandit>(get("magnitude", 1.0), get("target", 0.5));
  throw std::invalid_argument("unknown environment '" + name + "'");
}

}  // namespace rescale
