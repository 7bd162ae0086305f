#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace rescale {

struct AnsConfig {
  std::size_t tolerance = 100;  // T: steps without a new best estimate before a phase ends
  double c_inc = 8.0;
  double c_dec = 0.9;
  double beta = 0.9;

  void validate() const {
    if (!(c_inc > 1.0)) throw std::invalid_argument("ans: c_inc must exceed 1");
    if (!(c_dec > 0.0 && c_dec < 1.0)) throw std::invalid_argument("ans: c_dec must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("ans: beta must lie in (0, 1)");
  }
};

struct AnsDecision {
  enum class Kind { Continue, Rescale, Stop };
  Kind kind = Kind::Continue;
  double multiplier = 1.0;  // set for Rescale only

  static AnsDecision keep_going() { return {Kind::Continue, 1.0}; }
  static AnsDecision rescale(double c) { return {Kind::Rescale, c}; }
  static AnsDecision stop() { return {Kind::Stop, 1.0}; }

  bool is_rescale() const { return kind == Kind::Rescale; }
  bool is_stop() const { return kind == Kind::Stop; }

  friend bool operator==(const AnsDecision&, const AnsDecision&) = default;
};

inline std::string to_string(const AnsDecision& d) {
  switch (d.kind) {
    case AnsDecision::Kind::Continue: return "continue";
    case AnsDecision::Kind::Rescale: {
      char buf[48];
      std::snprintf(buf, sizeof buf, "rescale:%.17g", d.multiplier);
      return buf;
    }
    case AnsDecision::Kind::Stop: return "stop";
  }
  return "continue";
}

// Adaptive reward-scale search. Each phase tracks a bias-corrected EMA of returns and its
// running maximum; a phase ends once the maximum has not improved for more than T steps.
// The first phases multiply the scale by c_inc; the first phase that fails to beat its
// predecessor switches to c_dec for good, and a c_dec phase that fails to beat its
// predecessor stops the search.
class ScaleController {
 public:
  explicit ScaleController(AnsConfig config = {}) : config_(config) { config_.validate(); }

  // One EMA step on a return. Increments t and returns the bias-corrected estimate.
  double ema_update(double ret) {
    if (!std::isfinite(ret)) throw std::domain_error("ans: non-finite return");
    ++t_;
    m_ = config_.beta * m_ + (1.0 - config_.beta) * ret;
    // Same value as m_ / (1 - beta^t), written as a gain on the corrected estimate so the first
    // step and constant streams are exact in floating point.
    const double gain = (1.0 - config_.beta) / (1.0 - std::pow(config_.beta, static_cast<double>(t_)));
    m_hat_ = t_ == 1 ? ret : m_hat_ + gain * (ret - m_hat_);
    return m_hat_;
  }

  AnsDecision step(double ret) {
    if (stopped_) throw std::logic_error("ans: step after stop");
    ema_update(ret);
    ++t_stop_;
    if (m_hat_ > m_hat_max_) {
      m_hat_max_ = m_hat_;
      t_stop_ = 0;
    }
    if (t_stop_ <= config_.tolerance) return AnsDecision::keep_going();

    if (reverse_ && m_hat_max_ <= r_prev_) {
      stopped_ = true;
      return AnsDecision::stop();
    }
    if (!reverse_ && m_hat_max_ <= r_prev_) {
      c_ = config_.c_dec;
      reverse_ = true;
    }
    scale_ *= c_;
    ++n_rescales_;
    r_prev_ = m_hat_max_;
    t_ = 0;
    t_stop_ = 0;
    m_ = 0.0;
    m_hat_max_ = -std::numeric_limits<double>::infinity();
    return AnsDecision::rescale(c_);
  }

  const AnsConfig& config() const { return config_; }
  std::size_t t() const { return t_; }
  std::size_t t_stop() const { return t_stop_; }
  double m() const { return m_; }
  double m_hat() const { return m_hat_; }
  double m_hat_max() const { return m_hat_max_; }
  double r_prev() const { return r_prev_; }
  bool reverse() const { return reverse_; }
  bool stopped() const { return stopped_; }
  double scale() const { return scale_; }  // cumulative product of emitted multipliers
  std::size_t rescale_count() const { return n_rescales_; }

 private:
  AnsConfig config_;
  std::size_t t_ = 0;
  std::size_t t_stop_ = 0;
  double m_ = 0.0;
  double m_hat_ = 0.0;
  double m_hat_max_ = -std::numeric_limits<double>::infinity();
  double r_prev_ = -std::numeric_limits<double>::infinity();
  double c_ = config_.c_inc;
  bool reverse_ = false;
  bool stopped_ = false;
  double scale_ = 1.0;
  std::size_t n_rescales_ = 0;
};

// Upper bound on the number of scale changes when the best scale lies in [1, s_max]:
// ceil(log_{c_inc} s_max) - floor(log_{c_dec} c_inc).
inline long max_steps_bound(double c_inc, double c_dec, double s_max) {
  if (!(c_inc > 1.0) || !(c_dec > 0.0 && c_dec < 1.0) || !(s_max >= 1.0))
    throw std::invalid_argument("max_steps_bound: need c_inc > 1, 0 < c_dec < 1, s_max >= 1");
  // Snap values within rounding of an integer so exact powers (64 = 8^2) are not pushed up.
  auto snap = [](double x) {
    const double r = std::round(x);
    return std::abs(x - r) < 1e-9 ? r : x;
  };
  const double up = std::ceil(snap(std::log(s_max) / std::log(c_inc)));
  const double down = std::floor(snap(std::log(c_inc) / std::log(c_dec)));
  return static_cast<long>(up - down);
}

}  // namespace rescale
