#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rescale_rl/agents.hpp"
#include "rescale_rl/ans.hpp"
#include "rescale_rl/diagnostics.hpp"
#include "rescale_rl/envs.hpp"
#include "rescale_rl/popart.hpp"
#include "rescale_rl/scaling.hpp"
#include "rescale_rl/theory.hpp"

namespace rescale {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class AgentKind { A2c, Ddpg };
enum class ScaleMode { Fixed, Ans, PopArt };

inline std::string to_string(AgentKind k) { return k == AgentKind::A2c ? "a2c" : "ddpg"; }
inline std::string to_string(ScaleMode m) {
  switch (m) {
    case ScaleMode::Fixed: return "fixed";
    case ScaleMode::Ans: return "ans";
    case ScaleMode::PopArt: return "popart";
  }
  return "fixed";
}

struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::vector<std::string>& problems)
      : std::invalid_argument(join(problems)), problems(problems) {}
  std::vector<std::string> problems;

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid config:";
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "; " : " ") + p[i];
    return s;
  }
};

struct ExperimentConfig {
  std::string env_name = "chain";
  std::map<std::string, double> env_params;

  AgentKind agent = AgentKind::A2c;
  Activation activation = Activation::relu();
  std::vector<std::size_t> hidden{64, 64};
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::optional<double> actor_lr;   // default depends on the agent
  std::optional<double> critic_lr;
  double epsilon = 1e-8;
  double gamma = 0.99;
  // A2C
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t n_envs = 16;
  std::size_t rollout = 5;
  bool bootstrap_on_truncation = true;
  // DDPG
  double tau = 0.005;
  std::size_t batch_size = 64;
  std::size_t buffer = 100000;
  std::size_t warmup = 1000;
  double noise = 0.1;

  ScaleMode mode = ScaleMode::Fixed;
  double scale = 1.0;  // fixed scale, or the starting scale for ans

  std::optional<std::size_t> ans_tolerance;  // 100 updates for A2C, 50 episodes for DDPG
  double ans_c_inc = 8.0;
  double ans_c_dec = 0.9;
  double ans_beta = 0.9;
  bool ans_scaled_return = false;  // feed scaled instead of raw episode returns

  double popart_step = 3e-4;

  bool clip = true;  // post-scale gradient clipping on the actor (ans mode)
  ClipSchedule clip_schedule;

  std::uint64_t frames = 200000;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::uint64_t pdrr_interval = 2000;
  std::size_t pdrr_window = 256;
  bool checkpoint = false;

  std::string output_dir;
  std::string label;

  double resolved_actor_lr() const { return actor_lr.value_or(agent == AgentKind::A2c ? 7e-4 : 1e-4); }
  double resolved_critic_lr() const { return critic_lr.value_or(agent == AgentKind::A2c ? 7e-4 : 1e-3); }
  std::size_t resolved_tolerance() const { return ans_tolerance.value_or(agent == AgentKind::A2c ? 100 : 50); }
  std::string resolved_label() const {
    if (!label.empty()) return label;
    if (mode == ScaleMode::Fixed) return "c=" + fmt_short(scale);
    return to_string(mode);
  }

  OptimizerConfig optimizer_config(double lr) const {
    switch (optimizer) {
      case OptimizerKind::Sgd: return OptimizerConfig::sgd(lr);
      case OptimizerKind::RmsProp: return OptimizerConfig::rmsprop(lr, 0.99, epsilon);
      case OptimizerKind::Adam: return OptimizerConfig::adam(lr, 0.9, 0.999, epsilon);
    }
    return OptimizerConfig::adam(lr);
  }

  A2cConfig a2c_config() const {
    A2cConfig c;
    c.gamma = gamma;
    c.n_envs = n_envs;
    c.rollout = rollout;
    c.entropy_coef = entropy_coef;
    c.value_coef = value_coef;
    c.hidden = hidden;
    c.activation = activation;
    c.actor_optimizer = optimizer_config(resolved_actor_lr());
    c.critic_optimizer = optimizer_config(resolved_critic_lr());
    c.bootstrap_on_truncation = bootstrap_on_truncation;
    return c;
  }

  DdpgConfig ddpg_config() const {
    DdpgConfig c;
    c.gamma = gamma;
    c.tau = tau;
    c.batch_size = batch_size;
    c.buffer_capacity = buffer;
    c.warmup = warmup;
    c.noise_sigma = noise;
    c.hidden = hidden;
    c.activation = activation;
    c.actor_optimizer = optimizer_config(resolved_actor_lr());
    c.critic_optimizer = optimizer_config(resolved_critic_lr());
    return c;
  }

  AnsConfig ans_config() const { return {resolved_tolerance(), ans_c_inc, ans_c_dec, ans_beta}; }

  static std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  // Every problem with the config, not only the first.
  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    if (trials == 0) p.push_back("train.trials must be >= 1");
    if (threads == 0) p.push_back("train.threads must be >= 1");
    if (pdrr_interval == 0) p.push_back("train.pdrr_interval must be >= 1");
    if (pdrr_window == 0) p.push_back("train.pdrr_window must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) p.push_back("agent.gamma must lie in (0, 1)");
    if (!(resolved_actor_lr() > 0.0)) p.push_back("agent.actor_lr must be positive");
    if (!(resolved_critic_lr() > 0.0)) p.push_back("agent.critic_lr must be positive");
    if (epsilon < 0.0) p.push_back("agent.epsilon must be >= 0");
    if (hidden.empty()) p.push_back("agent.hidden needs at least one layer");
    for (std::size_t h : hidden)
      if (h == 0) p.push_back("agent.hidden widths must be positive");
    if (n_envs == 0) p.push_back("agent.n_envs must be >= 1");
    if (rollout == 0) p.push_back("agent.rollout must be >= 1");
    if (entropy_coef < 0.0) p.push_back("agent.entropy_coef must be >= 0");
    if (!(tau > 0.0 && tau <= 1.0)) p.push_back("agent.tau must lie in (0, 1]");
    if (batch_size == 0) p.push_back("agent.batch_size must be >= 1");
    if (buffer == 0) p.push_back("agent.buffer must be >= 1");
    if (noise < 0.0) p.push_back("agent.noise must be >= 0");
    if (!(scale > 0.0) || !std::isfinite(scale)) p.push_back("scale.value must be positive");
    if (mode == ScaleMode::PopArt && scale != 1.0) p.push_back("scale.value must be 1 in popart mode");
    if (!(ans_c_inc > 1.0)) p.push_back("ans.c_inc must exceed 1");
    if (!(ans_c_dec > 0.0 && ans_c_dec < 1.0)) p.push_back("ans.c_dec must lie in (0, 1)");
    if (!(ans_beta > 0.0 && ans_beta < 1.0)) p.push_back("ans.beta must lie in (0, 1)");
    if (!(popart_step > 0.0 && popart_step <= 1.0)) p.push_back("popart.step_size must lie in (0, 1]");
    if (!(clip_schedule.initial_norm > 0.0)) p.push_back("clip.g0 must be positive");
    if (!(clip_schedule.growth > 1.0)) p.push_back("clip.growth must exceed 1");
    if (!(clip_schedule.ceiling >= clip_schedule.initial_norm)) p.push_back("clip.ceiling must be >= clip.g0");
    static const std::map<std::string, std::set<std::string>> env_keys{
        {"chain", {"n_states", "magnitude", "horizon"}},
        {"pointmass1d", {"magnitude", "horizon", "dt"}},
        {"pointmass2d", {"magnitude", "horizon", "dt"}},
        {"bandit", {"magnitude", "target"}},
    };
    auto it = env_keys.find(env_name);
    if (it == env_keys.end()) {
      p.push_back("env.name '" + env_name + "' is not one of chain, pointmass1d, pointmass2d, bandit");
    } else {
      for (const auto& [k, v] : env_params)
        if (!it->second.count(k)) p.push_back("env." + k + " is not a parameter of " + env_name);
      try {
        auto env = make_env(env_name, env_params, 0);
        if (agent == AgentKind::Ddpg && env->action_space().is_discrete())
          p.push_back("agent.kind=ddpg needs a continuous-action environment");
      } catch (const std::exception& e) {
        p.push_back(std::string("env: ") + e.what());
      }
    }
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    return p;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ConfigError(p);
  }
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline bool parse_count(const std::string& s, std::uint64_t& out) {
  const std::string t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    double d;
    // Accept integral scientific notation such as 2e5.
    if (!parse_double(t, d) || !(d >= 0.0) || d != std::floor(d) || d > 1.8e19) return false;
    out = static_cast<std::uint64_t>(d);
    return true;
  }
  try {
    out = std::stoull(t);
  } catch (...) {
    return false;
  }
  return true;
}

inline bool parse_bool(const std::string& s, bool& out) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return out = true, true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return out = false, true;
  return false;
}

}  // namespace detail

// Applies one key=value setting, appending a message to `errors` on failure.
inline void apply_setting(ExperimentConfig& c, const std::string& key_in, const std::string& value_in,
                          std::vector<std::string>& errors) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  auto bad = [&](const std::string& what) { errors.push_back(key + ": " + what + " (got '" + value + "')"); };
  auto num = [&](double& dst) {
    double v;
    if (detail::parse_double(value, v) && std::isfinite(v)) dst = v;
    else bad("expected a number");
  };
  auto opt_num = [&](std::optional<double>& dst) {
    double v;
    if (detail::parse_double(value, v) && std::isfinite(v)) dst = v;
    else bad("expected a number");
  };
  auto u64 = [&](std::uint64_t& dst) {
    if (!detail::parse_count(value, dst)) bad("expected a non-negative integer");
  };
  auto count = [&](std::size_t& dst) {
    std::uint64_t v;
    if (detail::parse_count(value, v)) dst = static_cast<std::size_t>(v);
    else bad("expected a non-negative integer");
  };
  auto flag = [&](bool& dst) {
    if (!detail::parse_bool(value, dst)) bad("expected true or false");
  };

  if (key == "env.name") {
    c.env_name = value;
  } else if (key.rfind("env.", 0) == 0) {
    double v;
    if (detail::parse_double(value, v) && std::isfinite(v)) c.env_params[key.substr(4)] = v;
    else bad("expected a number");
  } else if (key == "agent.kind") {
    if (value == "a2c") c.agent = AgentKind::A2c;
    else if (value == "ddpg") c.agent = AgentKind::Ddpg;
    else bad("expected a2c or ddpg");
  } else if (key == "agent.activation") {
    try {
      c.activation = parse_activation(value);
    } catch (const std::exception&) {
      bad("unknown activation");
    }
  } else if (key == "agent.hidden") {
    std::vector<std::size_t> h;
    bool ok = !value.empty();
    for (const auto& part : split(value, ',')) {
      std::uint64_t v;
      if (!detail::parse_count(part, v)) ok = false;
      else h.push_back(static_cast<std::size_t>(v));
    }
    if (ok) c.hidden = h;
    else bad("expected comma-separated layer widths");
  } else if (key == "agent.optimizer") {
    try {
      c.optimizer = parse_optimizer_kind(value);
    } catch (const std::exception&) {
      bad("expected sgd, adam or rmsprop");
    }
  } else if (key == "agent.lr") {
    opt_num(c.actor_lr);
    c.critic_lr = c.actor_lr;
  } else if (key == "agent.actor_lr") {
    opt_num(c.actor_lr);
  } else if (key == "agent.critic_lr") {
    opt_num(c.critic_lr);
  } else if (key == "agent.epsilon") {
    num(c.epsilon);
  } else if (key == "agent.gamma") {
    num(c.gamma);
  } else if (key == "agent.entropy_coef") {
    num(c.entropy_coef);
  } else if (key == "agent.value_coef") {
    num(c.value_coef);
  } else if (key == "agent.n_envs") {
    count(c.n_envs);
  } else if (key == "agent.rollout") {
    count(c.rollout);
  } else if (key == "agent.bootstrap_on_truncation") {
    flag(c.bootstrap_on_truncation);
  } else if (key == "agent.tau") {
    num(c.tau);
  } else if (key == "agent.batch_size") {
    count(c.batch_size);
  } else if (key == "agent.buffer") {
    count(c.buffer);
  } else if (key == "agent.warmup") {
    count(c.warmup);
  } else if (key == "agent.noise") {
    num(c.noise);
  } else if (key == "scale.mode") {
    if (value == "fixed") c.mode = ScaleMode::Fixed;
    else if (value == "ans") c.mode = ScaleMode::Ans;
    else if (value == "popart") c.mode = ScaleMode::PopArt;
    else bad("expected fixed, ans or popart");
  } else if (key == "scale.value") {
    num(c.scale);
  } else if (key == "ans.tolerance") {
    std::size_t t = 0;
    count(t);
    c.ans_tolerance = t;
  } else if (key == "ans.c_inc") {
    num(c.ans_c_inc);
  } else if (key == "ans.c_dec") {
    num(c.ans_c_dec);
  } else if (key == "ans.beta") {
    num(c.ans_beta);
  } else if (key == "ans.scaled_return") {
    flag(c.ans_scaled_return);
  } else if (key == "popart.step_size") {
    num(c.popart_step);
  } else if (key == "clip.enabled") {
    flag(c.clip);
  } else if (key == "clip.g0") {
    num(c.clip_schedule.initial_norm);
  } else if (key == "clip.growth") {
    num(c.clip_schedule.growth);
  } else if (key == "clip.ceiling") {
    num(c.clip_schedule.ceiling);
  } else if (key == "train.frames") {
    u64(c.frames);
  } else if (key == "train.trials") {
    count(c.trials);
  } else if (key == "train.seed") {
    u64(c.seed);
  } else if (key == "train.threads") {
    count(c.threads);
  } else if (key == "train.pdrr_interval") {
    u64(c.pdrr_interval);
  } else if (key == "train.pdrr_window") {
    count(c.pdrr_window);
  } else if (key == "train.checkpoint") {
    flag(c.checkpoint);
  } else if (key == "output.dir") {
    c.output_dir = value;
  } else if (key == "output.label") {
    c.label = value;
  } else {
    errors.push_back("unknown key '" + key + "'");
  }
}

// Parses `key = value` lines; '#' starts a comment. Syntax and range problems are all
// collected and thrown together as a ConfigError.
inline ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    apply_setting(c, line.substr(0, eq), line.substr(eq + 1), errors);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) errors.push_back("override '" + o + "': expected key=value");
    else apply_setting(c, o.substr(0, eq), o.substr(eq + 1), errors);
  }
  if (const char* env_seed = std::getenv("RESCALE_RL_SEED"); env_seed && *env_seed) {
    if (!detail::parse_count(env_seed, c.seed))
      errors.push_back(std::string("RESCALE_RL_SEED: expected a non-negative integer (got '") + env_seed + "')");
  }
  auto more = c.problems();
  errors.insert(errors.end(), more.begin(), more.end());
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

inline std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "env.name=" << c.env_name << "\n";
  for (const auto& [k, v] : c.env_params) os << "env." << k << "=" << fmt_double(v) << "\n";
  os << "agent.kind=" << to_string(c.agent) << "\n";
  os << "agent.activation=" << to_string(c.activation) << "\n";
  os << "agent.hidden=";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << "\n";
  os << "agent.optimizer=" << to_string(c.optimizer) << "\n";
  os << "agent.actor_lr=" << fmt_double(c.resolved_actor_lr()) << "\n";
  os << "agent.critic_lr=" << fmt_double(c.resolved_critic_lr()) << "\n";
  os << "agent.epsilon=" << fmt_double(c.epsilon) << "\n";
  os << "agent.gamma=" << fmt_double(c.gamma) << "\n";
  if (c.agent == AgentKind::A2c) {
    os << "agent.entropy_coef=" << fmt_double(c.entropy_coef) << "\n";
    os << "agent.value_coef=" << fmt_double(c.value_coef) << "\n";
    os << "agent.n_envs=" << c.n_envs << "\n";
    os << "agent.rollout=" << c.rollout << "\n";
    os << "agent.bootstrap_on_truncation=" << (c.bootstrap_on_truncation ? "true" : "false") << "\n";
  } else {
    os << "agent.tau=" << fmt_double(c.tau) << "\n";
    os << "agent.batch_size=" << c.batch_size << "\n";
    os << "agent.buffer=" << c.buffer << "\n";
    os << "agent.warmup=" << c.warmup << "\n";
    os << "agent.noise=" << fmt_double(c.noise) << "\n";
  }
  os << "scale.mode=" << to_string(c.mode) << "\n";
  os << "scale.value=" << fmt_double(c.scale) << "\n";
  os << "ans.tolerance=" << c.resolved_tolerance() << "\n";
  os << "ans.c_inc=" << fmt_double(c.ans_c_inc) << "\n";
  os << "ans.c_dec=" << fmt_double(c.ans_c_dec) << "\n";
  os << "ans.beta=" << fmt_double(c.ans_beta) << "\n";
  os << "ans.scaled_return=" << (c.ans_scaled_return ? "true" : "false") << "\n";
  os << "popart.step_size=" << fmt_double(c.popart_step) << "\n";
  os << "clip.enabled=" << (c.clip ? "true" : "false") << "\n";
  os << "clip.g0=" << fmt_double(c.clip_schedule.initial_norm) << "\n";
  os << "clip.growth=" << fmt_double(c.clip_schedule.growth) << "\n";
  os << "clip.ceiling=" << fmt_double(c.clip_schedule.ceiling) << "\n";
  os << "train.frames=" << c.frames << "\n";
  os << "train.trials=" << c.trials << "\n";
  os << "train.seed=" << c.seed << "\n";
  os << "train.threads=" << c.threads << "\n";
  os << "train.pdrr_interval=" << c.pdrr_interval << "\n";
  os << "train.pdrr_window=" << c.pdrr_window << "\n";
  os << "train.checkpoint=" << (c.checkpoint ? "true" : "false") << "\n";
  if (!c.output_dir.empty()) os << "output.dir=" << c.output_dir << "\n";
  if (!c.label.empty()) os << "output.label=" << c.label << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Logs

struct EpisodeRecord {
  std::size_t trial = 0;
  std::size_t episode = 0;
  std::uint64_t frame = 0;  // total frames of the trial when the episode ended
  double raw_return = 0.0;
  double scaled_return = 0.0;
  double scale = 1.0;        // reward scale in force when the episode ended
  std::vector<double> pdrr;  // most recent per-layer PDRR sample of the critic

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct PdrrSample {
  std::uint64_t frame = 0;
  std::vector<double> ratios;
};

struct ScaleEvent {
  std::uint64_t frame = 0;
  std::string decision;  // "rescale" or "stop"
  double multiplier = 1.0;
  double scale = 1.0;  // cumulative scale after the event
};

struct AnsSample {
  std::uint64_t frame = 0;
  double value = 0.0;  // R fed to the controller
  double m_hat = 0.0;
  double m_hat_max = 0.0;
  std::size_t t_stop = 0;
  double scale = 1.0;
};

struct PopArtSample {
  std::uint64_t frame = 0;
  double sigma = 1.0;
  double mu = 0.0;
};

struct TrialLog {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::uint64_t frames = 0;
  double final_scale = 1.0;
  std::vector<EpisodeRecord> episodes;
  std::vector<PdrrSample> pdrr;
  std::vector<ScaleEvent> scale_events;
  std::vector<AnsSample> ans;
  std::vector<PopArtSample> popart;
};

struct ExperimentLog {
  ExperimentConfig config;
  std::size_t n_pdrr_layers = 0;
  std::vector<TrialLog> trials;
};

// Mean over trials of each trial's mean raw return over its last min(100, episodes) episodes.
inline double evaluate_final(const std::vector<TrialLog>& trials, std::size_t window = 100) {
  if (trials.empty()) throw std::invalid_argument("evaluate_final: empty log set");
  double total = 0.0;
  for (const auto& t : trials) {
    if (t.episodes.empty())
      throw std::invalid_argument("evaluate_final: trial " + std::to_string(t.trial) + " has no episodes");
    const std::size_t k = std::min(window, t.episodes.size());
    double s = 0.0;
    for (std::size_t i = t.episodes.size() - k; i < t.episodes.size(); ++i) s += t.episodes[i].raw_return;
    total += s / static_cast<double>(k);
  }
  return total / static_cast<double>(trials.size());
}

inline double evaluate_final(const TrialLog& trial, std::size_t window = 100) {
  return evaluate_final(std::vector<TrialLog>{trial}, window);
}

// Mean PDRR of one critic layer (index among ReLU layers) over samples taken in the final
// quarter of each trial, averaged over trials.
inline double final_quarter_pdrr(const std::vector<TrialLog>& trials, std::size_t relu_layer) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& t : trials) {
    const double start = 0.75 * static_cast<double>(t.frames);
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& p : t.pdrr) {
      if (static_cast<double>(p.frame) < start || relu_layer >= p.ratios.size()) continue;
      s += p.ratios[relu_layer];
      ++k;
    }
    if (k == 0) continue;
    total += s / static_cast<double>(k);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("final_quarter_pdrr: no samples");
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return splitmix64(splitmix64(seed) + static_cast<std::uint64_t>(trial));
}

class PdrrProbe {
 public:
  PdrrProbe(std::uint64_t interval, std::size_t window) : interval_(interval), window_(window) {}

  void observe(std::span<const double> input) { window_.push(input); }

  // Samples when `frame` has reached the next multiple of the interval (and at frame 0).
  void maybe_sample(const Network& critic, std::uint64_t frame, TrialLog& log) {
    if (frame < next_ || window_.empty()) return;
    sample(critic, frame, log);
    while (next_ <= frame) next_ += interval_;
  }

  void sample(const Network& critic, std::uint64_t frame, TrialLog& log) {
    if (window_.empty() || count_relu_layers(critic) == 0) return;
    const auto report = pdrr_report(critic, window_.to_matrix());
    PdrrSample s{frame, {}};
    for (const auto& l : report.layers) s.ratios.push_back(l.ratio);
    latest_ = s.ratios;
    log.pdrr.push_back(std::move(s));
  }

  const std::vector<double>& latest() const { return latest_; }
  Matrix window() const { return window_.to_matrix(); }

 private:
  std::uint64_t interval_;
  std::uint64_t next_ = 0;
  SampleWindow window_;
  std::vector<double> latest_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string matrix_to_csv(const Matrix& m) {
  std::string s;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) s += (c ? "," : "") + fmt_double(m(r, c));
    s += "\n";
  }
  return s;
}

}  // namespace detail

struct Checkpoint {
  Network actor;
  Network critic;
  double scale = 1.0;
  std::uint64_t frames = 0;
  std::size_t optimizer_steps = 0;
  Matrix window;  // recent critic inputs for PDRR reports
};

inline void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  detail::write_text_file(dir / "actor.net", network_to_string(ck.actor));
  detail::write_text_file(dir / "critic.net", network_to_string(ck.critic));
  detail::write_text_file(dir / "window.csv", detail::matrix_to_csv(ck.window));
  detail::write_text_file(dir / "manifest.txt", "scale=" + fmt_double(ck.scale) + "\nframes=" +
                                                    std::to_string(ck.frames) + "\noptimizer_step=" +
                                                    std::to_string(ck.optimizer_steps) + "\n");
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double v;
      if (!detail::parse_double(tok, v)) throw std::runtime_error(path + ": bad number '" + tok + "'");
      row.push_back(v);
    }
    if (rows == 0) cols = row.size();
    else if (row.size() != cols) throw std::runtime_error(path + ": ragged row " + std::to_string(rows + 1));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

inline TrialLog run_a2c_trial(const ExperimentConfig& cfg, std::size_t trial) {
  TrialLog log;
  log.trial = trial;
  log.seed = detail::trial_seed(cfg.seed, trial);
  Rng rng(log.seed);
  double scale = cfg.scale;

  std::vector<std::unique_ptr<RewardScaleWrapper>> envs;
  for (std::size_t e = 0; e < cfg.n_envs; ++e)
    envs.push_back(reward_scale_wrapper(make_env(cfg.env_name, cfg.env_params, detail::splitmix64(log.seed + e + 1)), scale));
  const std::size_t obs_dim = envs[0]->observation_dim();
  const std::size_t n_envs = cfg.n_envs;
  A2cAgent agent(obs_dim, envs[0]->action_space(), cfg.a2c_config(), rng);

  std::optional<ScaleController> ans;
  std::optional<PostScaleClipper> clipper;
  std::optional<PopArt> popart;
  if (cfg.mode == ScaleMode::Ans) {
    ans.emplace(cfg.ans_config());
    if (cfg.clip) clipper.emplace(cfg.clip_schedule);
  }
  if (cfg.mode == ScaleMode::PopArt) popart.emplace(PopArtConfig{cfg.popart_step});

  detail::PdrrProbe probe(cfg.pdrr_interval, cfg.pdrr_window);
  Matrix states(n_envs, obs_dim);
  for (std::size_t e = 0; e < n_envs; ++e) {
    const auto s = envs[e]->reset();
    std::copy(s.begin(), s.end(), states.row(e).begin());
  }
  std::vector<double> ep_raw(n_envs, 0.0), ep_scaled(n_envs, 0.0);
  std::uint64_t frames = 0;
  std::size_t episode_id = 0;

  if (cfg.frames > 0) {
    for (std::size_t e = 0; e < n_envs; ++e) probe.observe(states.row(e));
    probe.maybe_sample(agent.critic, 0, log);
  }

  while (frames < cfg.frames) {
    std::vector<Matrix> step_states;
    std::vector<std::vector<Action>> step_actions;
    std::vector<std::vector<double>> rewards, trunc_states;
    std::vector<std::vector<char>> terminal, truncated;
    std::vector<std::pair<std::size_t, std::size_t>> trunc_index;  // (step, env)
    std::vector<double> finished_returns;

    for (std::size_t k = 0; k < cfg.rollout && frames < cfg.frames; ++k) {
      auto actions = agent.act(states, rng);
      step_states.push_back(states);
      rewards.emplace_back(n_envs);
      terminal.emplace_back(n_envs, 0);
      truncated.emplace_back(n_envs, 0);
      for (std::size_t e = 0; e < n_envs; ++e) {
        Transition t = envs[e]->step(actions[e]);
        ++frames;
        rewards.back()[e] = t.scaled_reward;
        ep_raw[e] += t.reward;
        ep_scaled[e] += t.scaled_reward;
        terminal.back()[e] = t.terminal;
        truncated.back()[e] = t.truncated;
        if (t.truncated) {
          trunc_index.emplace_back(k, e);
          trunc_states.push_back(t.next_state);
        }
        std::vector<double> next = t.next_state;
        if (t.done()) {
          log.episodes.push_back({trial, episode_id++, frames, ep_raw[e], ep_scaled[e], scale, probe.latest()});
          finished_returns.push_back(cfg.ans_scaled_return ? ep_scaled[e] : ep_raw[e]);
          ep_raw[e] = ep_scaled[e] = 0.0;
          next = envs[e]->reset();
        }
        std::copy(next.begin(), next.end(), states.row(e).begin());
        probe.observe(next);
      }
      step_actions.push_back(std::move(actions));
      probe.maybe_sample(agent.critic, frames, log);
    }

    const std::size_t steps = step_states.size();
    Matrix all(steps * n_envs, obs_dim);
    for (std::size_t k = 0; k < steps; ++k)
      for (std::size_t e = 0; e < n_envs; ++e)
        std::copy(step_states[k].row(e).begin(), step_states[k].row(e).end(), all.row(k * n_envs + e).begin());
    auto unnorm = [&](std::vector<double> v) {
      if (popart)
        for (double& x : v) x = popart->denormalize(x);
      return v;
    };
    const auto values = unnorm(agent.values(all));
    const auto boot = unnorm(agent.values(states));
    std::vector<double> tvals;
    if (!trunc_states.empty()) {
      Matrix ts(trunc_states.size(), obs_dim);
      for (std::size_t i = 0; i < trunc_states.size(); ++i)
        std::copy(trunc_states[i].begin(), trunc_states[i].end(), ts.row(i).begin());
      tvals = unnorm(agent.values(ts));
    }

    A2cBatch batch;
    batch.states = all;
    batch.actions.resize(steps * n_envs);
    batch.critic_targets.resize(steps * n_envs);
    batch.advantages.resize(steps * n_envs);
    for (std::size_t e = 0; e < n_envs; ++e) {
      TrajectorySegment seg;
      seg.truncation_values.assign(steps, 0.0);
      for (std::size_t k = 0; k < steps; ++k) {
        seg.rewards.push_back(rewards[k][e]);
        seg.values.push_back(values[k * n_envs + e]);
        seg.terminal.push_back(terminal[k][e]);
        seg.truncated.push_back(truncated[k][e]);
      }
      for (std::size_t i = 0; i < trunc_index.size(); ++i)
        if (trunc_index[i].second == e) seg.truncation_values[trunc_index[i].first] = tvals[i];
      seg.bootstrap_value = boot[e];
      const auto est = compute_advantages(seg, cfg.gamma, scale, cfg.bootstrap_on_truncation);
      for (std::size_t k = 0; k < steps; ++k) {
        batch.actions[k * n_envs + e] = step_actions[k][e];
        batch.critic_targets[k * n_envs + e] = est.returns[k];
        batch.advantages[k * n_envs + e] = est.advantages[k];
      }
    }
    if (popart) {
      popart->observe_and_update(batch.critic_targets, agent.critic.layers.back());
      for (double& y : batch.critic_targets) y = popart->normalize(y);
      log.popart.push_back({frames, popart->sigma(), popart->mu()});
    }
    agent.update(batch, clipper ? &*clipper : nullptr);

    if (ans && !ans->stopped() && !finished_returns.empty()) {
      double r = 0.0;
      for (double v : finished_returns) r += v;
      r /= static_cast<double>(finished_returns.size());
      const auto d = ans->step(r);
      log.ans.push_back({frames, r, ans->m_hat(), ans->m_hat_max(), ans->t_stop(), scale});
      if (d.is_rescale()) {
        scale *= d.multiplier;
        for (auto& env : envs) env->set_scale(scale);
        agent.rescale_critic(d.multiplier);
        if (clipper) clipper->on_scale_event();
        log.scale_events.push_back({frames, "rescale", d.multiplier, scale});
      } else if (d.is_stop()) {
        log.scale_events.push_back({frames, "stop", 1.0, scale});
      }
    }
  }

  log.frames = frames;
  log.final_scale = scale;
  if (cfg.checkpoint && !cfg.output_dir.empty() && frames > 0) {
    write_checkpoint(std::filesystem::path(cfg.output_dir) / "checkpoints" / ("trial_" + std::to_string(trial)),
                     {agent.actor, agent.critic, scale, frames, agent.critic_opt.steps(), probe.window()});
  }
  return log;
}

inline TrialLog run_ddpg_trial(const ExperimentConfig& cfg, std::size_t trial) {
  TrialLog log;
  log.trial = trial;
  log.seed = detail::trial_seed(cfg.seed, trial);
  Rng rng(log.seed);
  double scale = cfg.scale;

  auto env = reward_scale_wrapper(make_env(cfg.env_name, cfg.env_params, detail::splitmix64(log.seed + 1)), scale);
  const auto space = env->action_space();
  DdpgAgent agent(env->observation_dim(), space, cfg.ddpg_config(), rng);

  std::optional<ScaleController> ans;
  std::optional<PostScaleClipper> clipper;
  std::optional<PopArt> popart;
  if (cfg.mode == ScaleMode::Ans) {
    ans.emplace(cfg.ans_config());
    if (cfg.clip) {
      clipper.emplace(cfg.clip_schedule);
      agent.clipper = &*clipper;
    }
  }
  if (cfg.mode == ScaleMode::PopArt) {
    popart.emplace(PopArtConfig{cfg.popart_step});
    agent.popart = &*popart;
  }

  detail::PdrrProbe probe(cfg.pdrr_interval, cfg.pdrr_window);
  std::uniform_real_distribution<double> uniform(space.low, space.high);
  std::vector<double> state = cfg.frames > 0 ? env->reset() : std::vector<double>{};
  double ep_raw = 0.0, ep_scaled = 0.0;
  std::uint64_t frames = 0;
  std::size_t episode_id = 0;

  while (frames < cfg.frames) {
    std::vector<double> action;
    if (frames < cfg.warmup) {
      action.resize(space.n);
      for (double& a : action) a = uniform(rng);
    } else {
      action = agent.act(state, &rng);
    }
    std::vector<double> critic_in = state;
    critic_in.insert(critic_in.end(), action.begin(), action.end());
    probe.observe(critic_in);

    Transition t = env->step(Action::continuous(action));
    ++frames;
    ep_raw += t.reward;
    ep_scaled += t.scaled_reward;
    agent.buffer.push({state, action, t.reward, t.next_state, t.terminal});
    state = t.next_state;

    if (frames >= cfg.warmup && agent.buffer.size() >= cfg.batch_size) {
      agent.update(agent.buffer.sample(cfg.batch_size, rng), scale);
      if (popart) log.popart.push_back({frames, popart->sigma(), popart->mu()});
    }
    probe.maybe_sample(agent.critic, frames, log);

    if (t.done()) {
      log.episodes.push_back({trial, episode_id++, frames, ep_raw, ep_scaled, scale, probe.latest()});
      if (ans && !ans->stopped()) {
        const double r = cfg.ans_scaled_return ? ep_scaled : ep_raw;
        const auto d = ans->step(r);
        log.ans.push_back({frames, r, ans->m_hat(), ans->m_hat_max(), ans->t_stop(), scale});
        if (d.is_rescale()) {
          scale *= d.multiplier;
          env->set_scale(scale);
          agent.rescale_critic(d.multiplier);
          if (clipper) clipper->on_scale_event();
          log.scale_events.push_back({frames, "rescale", d.multiplier, scale});
        } else if (d.is_stop()) {
          log.scale_events.push_back({frames, "stop", 1.0, scale});
        }
      }
      ep_raw = ep_scaled = 0.0;
      state = env->reset();
    }
  }

  log.frames = frames;
  log.final_scale = scale;
  if (cfg.checkpoint && !cfg.output_dir.empty() && frames > 0) {
    write_checkpoint(std::filesystem::path(cfg.output_dir) / "checkpoints" / ("trial_" + std::to_string(trial)),
                     {agent.actor, agent.critic, scale, frames, agent.critic_opt.steps(), probe.window()});
  }
  return log;
}

inline TrialLog run_trial(const ExperimentConfig& cfg, std::size_t trial) {
  return cfg.agent == AgentKind::A2c ? run_a2c_trial(cfg, trial) : run_ddpg_trial(cfg, trial);
}

inline std::size_t critic_relu_layers(const ExperimentConfig& cfg) {
  return cfg.activation.type == ActivationType::ReLU ? cfg.hidden.size() : 0;
}

// Runs every trial (possibly on several threads); logs are ordered by trial id.
inline ExperimentLog run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentLog out;
  out.config = cfg;
  out.n_pdrr_layers = critic_relu_layers(cfg);
  if (cfg.frames == 0) return out;
  out.trials.resize(cfg.trials);
  std::vector<std::exception_ptr> errors(cfg.trials);
  auto work = [&](std::size_t i) {
    try {
      out.trials[i] = run_trial(cfg, i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, cfg.trials);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < cfg.trials; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cfg.trials; i += n_threads) work(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string episodes_header(std::size_t n_pdrr_layers) {
  std::string h = "trial,episode,frame,raw_return,scaled_return,scale";
  for (std::size_t l = 0; l < n_pdrr_layers; ++l) h += ",pdrr_l" + std::to_string(l + 1);
  return h + "\n";
}

inline std::string episodes_csv(const ExperimentLog& log) {
  std::string s = episodes_header(log.n_pdrr_layers);
  for (const auto& t : log.trials) {
    for (const auto& e : t.episodes) {
      s += std::to_string(e.trial) + "," + std::to_string(e.episode) + "," + std::to_string(e.frame) + "," +
           fmt_double(e.raw_return) + "," + fmt_double(e.scaled_return) + "," + fmt_double(e.scale);
      for (std::size_t l = 0; l < log.n_pdrr_layers; ++l)
        s += "," + (l < e.pdrr.size() ? fmt_double(e.pdrr[l]) : std::string());
      s += "\n";
    }
  }
  return s;
}

// Inverse of episodes_csv. Trials appear in order of first occurrence.
inline std::vector<TrialLog> parse_episodes_csv(const std::string& text, std::size_t* n_pdrr_layers = nullptr) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("episodes csv: missing header");
  const auto cols = split(trim(line), ',');
  const std::vector<std::string> fixed{"trial", "episode", "frame", "raw_return", "scaled_return", "scale"};
  if (cols.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), cols.begin()))
    throw std::runtime_error("episodes csv: unexpected header '" + trim(line) + "'");
  const std::size_t n_layers = cols.size() - fixed.size();
  for (std::size_t l = 0; l < n_layers; ++l)
    if (cols[fixed.size() + l] != "pdrr_l" + std::to_string(l + 1))
      throw std::runtime_error("episodes csv: unexpected column '" + cols[fixed.size() + l] + "'");
  if (n_pdrr_layers) *n_pdrr_layers = n_layers;

  std::vector<TrialLog> trials;
  std::map<std::size_t, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    auto fail = [&](const std::string& what) {
      throw std::runtime_error("episodes csv line " + std::to_string(lineno) + ": " + what);
    };
    if (f.size() != cols.size()) fail("expected " + std::to_string(cols.size()) + " fields");
    EpisodeRecord e;
    std::uint64_t u;
    if (!detail::parse_count(f[0], u)) fail("bad trial");
    e.trial = static_cast<std::size_t>(u);
    if (!detail::parse_count(f[1], u)) fail("bad episode");
    e.episode = static_cast<std::size_t>(u);
    if (!detail::parse_count(f[2], e.frame)) fail("bad frame");
    if (!detail::parse_double(f[3], e.raw_return)) fail("bad raw_return");
    if (!detail::parse_double(f[4], e.scaled_return)) fail("bad scaled_return");
    if (!detail::parse_double(f[5], e.scale)) fail("bad scale");
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (trim(f[6 + l]).empty()) continue;
      double v;
      if (!detail::parse_double(f[6 + l], v)) fail("bad pdrr value");
      e.pdrr.push_back(v);
    }
    auto [it, inserted] = index.try_emplace(e.trial, trials.size());
    if (inserted) {
      trials.emplace_back();
      trials.back().trial = e.trial;
    }
    auto& t = trials[it->second];
    if (!t.episodes.empty() && e.frame < t.episodes.back().frame) fail("frames not monotone within trial");
    t.frames = e.frame;
    t.final_scale = e.scale;
    t.episodes.push_back(std::move(e));
  }
  return trials;
}

struct Curve {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline std::string curves_csv(const std::vector<Curve>& curves) {
  std::string s = "curve,x,y\n";
  for (const auto& c : curves)
    for (const auto& [x, y] : c.points) s += c.name + "," + fmt_double(x) + "," + fmt_double(y) + "\n";
  return s;
}

// Mean raw return of episodes ending in each of `bins` equal frame intervals, pooled over trials.
inline Curve return_curve(const ExperimentLog& log, const std::string& name, std::size_t bins = 50) {
  Curve c{name, {}};
  const double budget = static_cast<double>(log.config.frames);
  if (budget <= 0.0) return c;
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> n(bins, 0);
  for (const auto& t : log.trials)
    for (const auto& e : t.episodes) {
      const std::uint64_t f = std::max<std::uint64_t>(e.frame, 1);
      const auto b = static_cast<std::size_t>(std::min<std::uint64_t>((f - 1) * bins / log.config.frames, bins - 1));
      sum[b] += e.raw_return;
      ++n[b];
    }
  for (std::size_t b = 0; b < bins; ++b)
    if (n[b]) c.points.emplace_back(budget * static_cast<double>(b + 1) / static_cast<double>(bins), sum[b] / static_cast<double>(n[b]));
  return c;
}

// Per-layer PDRR averaged over trials at each sampled frame.
inline std::vector<Curve> pdrr_curves(const ExperimentLog& log, const std::string& name) {
  std::vector<Curve> out;
  for (std::size_t l = 0; l < log.n_pdrr_layers; ++l) {
    std::map<std::uint64_t, std::pair<double, std::size_t>> acc;
    for (const auto& t : log.trials)
      for (const auto& p : t.pdrr)
        if (l < p.ratios.size()) {
          auto& a = acc[p.frame];
          a.first += p.ratios[l];
          ++a.second;
        }
    Curve c{name + "/l" + std::to_string(l + 1), {}};
    for (const auto& [f, a] : acc) c.points.emplace_back(static_cast<double>(f), a.first / static_cast<double>(a.second));
    out.push_back(std::move(c));
  }
  return out;
}

// Step curve of the cumulative reward scale of each trial.
inline std::vector<Curve> scale_curves(const ExperimentLog& log, const std::string& name) {
  std::vector<Curve> out;
  for (const auto& t : log.trials) {
    Curve c{name + "/trial" + std::to_string(t.trial), {}};
    c.points.emplace_back(0.0, log.config.scale);
    for (const auto& e : t.scale_events)
      if (e.decision == "rescale") c.points.emplace_back(static_cast<double>(e.frame), e.scale);
    c.points.emplace_back(static_cast<double>(t.frames), t.final_scale);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string summary_text(const ExperimentLog& log) {
  std::ostringstream os;
  os << "label=" << log.config.resolved_label() << "\n";
  os << "mode=" << to_string(log.config.mode) << "\n";
  os << "agent=" << to_string(log.config.agent) << "\n";
  os << "env=" << log.config.env_name << "\n";
  os << "frames=" << log.config.frames << "\n";
  os << "trials=" << log.trials.size() << "\n";
  bool scoreable = !log.trials.empty();
  for (const auto& t : log.trials) scoreable = scoreable && !t.episodes.empty();
  os << "evaluate_final=" << (scoreable ? fmt_double(evaluate_final(log.trials)) : std::string("nan")) << "\n";
  for (const auto& t : log.trials) {
    os << "trial." << t.trial << ".seed=" << t.seed << "\n";
    os << "trial." << t.trial << ".episodes=" << t.episodes.size() << "\n";
    os << "trial." << t.trial << ".score="
       << (t.episodes.empty() ? std::string("nan") : fmt_double(evaluate_final(t))) << "\n";
    os << "trial." << t.trial << ".final_scale=" << fmt_double(t.final_scale) << "\n";
  }
  for (std::size_t l = 0; l < log.n_pdrr_layers; ++l) {
    double v = std::nan("");
    try {
      v = final_quarter_pdrr(log.trials, l);
    } catch (const std::invalid_argument&) {
    }
    os << "pdrr_final_quarter.l" << (l + 1) << "=" << fmt_double(v) << "\n";
  }
  return os.str();
}

inline void emit_outputs(const ExperimentLog& log, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  const std::string name = log.config.resolved_label();

  detail::write_text_file(dir / "config.txt", config_to_text(log.config));
  detail::write_text_file(dir / "episodes.csv", episodes_csv(log));
  detail::write_text_file(dir / "summary.txt", summary_text(log));

  std::string pdrr = "trial,frame";
  for (std::size_t l = 0; l < log.n_pdrr_layers; ++l) pdrr += ",pdrr_l" + std::to_string(l + 1);
  pdrr += "\n";
  std::string events = "trial,frame,decision,multiplier,scale\n";
  std::string ans = "trial,frame,value,m_hat,m_hat_max,t_stop,scale\n";
  std::string pop = "trial,frame,sigma,mu\n";
  for (const auto& t : log.trials) {
    const std::string tr = std::to_string(t.trial);
    for (const auto& p : t.pdrr) {
      pdrr += tr + "," + std::to_string(p.frame);
      for (double r : p.ratios) pdrr += "," + fmt_double(r);
      pdrr += "\n";
    }
    for (const auto& e : t.scale_events)
      events += tr + "," + std::to_string(e.frame) + "," + e.decision + "," + fmt_double(e.multiplier) + "," +
                fmt_double(e.scale) + "\n";
    for (const auto& a : t.ans)
      ans += tr + "," + std::to_string(a.frame) + "," + fmt_double(a.value) + "," + fmt_double(a.m_hat) + "," +
             fmt_double(a.m_hat_max) + "," + std::to_string(a.t_stop) + "," + fmt_double(a.scale) + "\n";
    for (const auto& p : t.popart)
      pop += tr + "," + std::to_string(p.frame) + "," + fmt_double(p.sigma) + "," + fmt_double(p.mu) + "\n";
  }
  detail::write_text_file(dir / "pdrr.csv", pdrr);
  detail::write_text_file(dir / "scale_events.csv", events);
  if (log.config.mode == ScaleMode::Ans) detail::write_text_file(dir / "ans.csv", ans);
  if (log.config.mode == ScaleMode::PopArt) detail::write_text_file(dir / "popart.csv", pop);

  detail::write_text_file(dir / "plot_return.csv", curves_csv({return_curve(log, name)}));
  detail::write_text_file(dir / "plot_pdrr.csv", curves_csv(pdrr_curves(log, name)));
  detail::write_text_file(dir / "plot_scale.csv", curves_csv(scale_curves(log, name)));
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepEntry {
  double scale = 1.0;
  ExperimentLog log;
};

inline std::vector<SweepEntry> run_sweep(const ExperimentConfig& base, const std::vector<double>& scales) {
  if (scales.empty()) throw std::invalid_argument("sweep: no scales given");
  std::vector<SweepEntry> out;
  for (double c : scales) {
    ExperimentConfig cfg = base;
    cfg.mode = ScaleMode::Fixed;
    cfg.scale = c;
    cfg.label = "c=" + ExperimentConfig::fmt_short(c);
    out.push_back({c, run_experiment(cfg)});
  }
  return out;
}

// One subdirectory per scale plus combined plot files with one curve per scale.
inline void emit_sweep(const std::vector<SweepEntry>& sweep, const std::filesystem::path& dir) {
  std::vector<Curve> ret, pdrr, scale;
  std::string table = "scale,evaluate_final";
  const std::size_t n_layers = sweep.empty() ? 0 : sweep.front().log.n_pdrr_layers;
  for (std::size_t l = 0; l < n_layers; ++l) table += ",pdrr_final_quarter_l" + std::to_string(l + 1);
  table += "\n";
  for (const auto& e : sweep) {
    const std::string name = e.log.config.resolved_label();
    emit_outputs(e.log, dir / name);
    ret.push_back(return_curve(e.log, name));
    for (auto& c : pdrr_curves(e.log, name)) pdrr.push_back(std::move(c));
    for (auto& c : scale_curves(e.log, name)) scale.push_back(std::move(c));
    bool scoreable = !e.log.trials.empty();
    for (const auto& t : e.log.trials) scoreable = scoreable && !t.episodes.empty();
    table += fmt_double(e.scale) + "," + (scoreable ? fmt_double(evaluate_final(e.log.trials)) : std::string("nan"));
    for (std::size_t l = 0; l < n_layers; ++l) {
      double v = std::nan("");
      try {
        v = final_quarter_pdrr(e.log.trials, l);
      } catch (const std::invalid_argument&) {
      }
      table += "," + fmt_double(v);
    }
    table += "\n";
  }
  detail::write_text_file(dir / "sweep_summary.csv", table);
  detail::write_text_file(dir / "plot_return.csv", curves_csv(ret));
  detail::write_text_file(dir / "plot_pdrr.csv", curves_csv(pdrr));
  detail::write_text_file(dir / "plot_scale.csv", curves_csv(scale));
}

}  // namespace rescale
