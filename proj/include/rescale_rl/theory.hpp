#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rescale {

// Probability bounds for a pseudo-dying neuron becoming active when one more sample joins
// the window. The neuron is z = w.p + b over inputs p whose norms ||p|| are modelled as
// Normal(mean, std) fitted over the B window samples.

// Case 1: w.p_i < 0 and |w.p_i| >= |b| on the whole window.
// Bound: 1/2 [1 + erf(-1 / sqrt(2B))].
inline double prop1_bound_case1(std::size_t batch) {
  if (batch < 2) throw std::invalid_argument("prop1 case 1: batch size must be >= 2");
  return 0.5 * (1.0 + std::erf(-1.0 / std::sqrt(2.0 * static_cast<double>(batch))));
}

// Case 2: b < 0 and |w.p_i| <= |b| on the whole window, with |cos| between w and p at least
// |cos_min|. With L = |b| / (||w|| |cos_min|):
// Bound: 1/2 [1 - erf(sqrt(2(B-1)/B) (1 - mean / L))]. Zero when cos_min is 0.
inline double prop1_bound_case2(std::size_t batch, double mean_norm, double bias, double w_norm, double cos_min) {
  if (batch < 2) throw std::invalid_argument("prop1 case 2: batch size must be >= 2");
  if (!(bias < 0.0)) throw std::invalid_argument("prop1 case 2: bias must be negative");
  if (!(w_norm > 0.0)) throw std::invalid_argument("prop1 case 2: weight norm must be positive");
  if (cos_min == 0.0) return 0.0;
  const double b = static_cast<double>(batch);
  const double limit = std::abs(bias) / (w_norm * std::abs(cos_min));
  return 0.5 * (1.0 - std::erf(std::sqrt(2.0 * (b - 1.0) / b) * (1.0 - mean_norm / limit)));
}

enum class Prop1Case { Case1, Case2, Inapplicable };

inline std::string to_string(Prop1Case c) {
  switch (c) {
    case Prop1Case::Case1: return "case1";
    case Prop1Case::Case2: return "case2";
    case Prop1Case::Inapplicable: return "inapplicable";
  }
  return "inapplicable";
}

struct Prop1Scenario {
  Prop1Case kind = Prop1Case::Case1;
  std::size_t batch = 2;
  double bias = -1.0;
  double w_norm = 1.0;
  double cos_min = 1.0;    // Case 2 only
  double mean_norm = 1.0;  // fitted mean of ||p||
  double std_norm = 0.0;   // fitted standard deviation of ||p||

  // ||p|| below which the neuron activates (Case 1) or above which it activates (Case 2).
  double threshold() const {
    return kind == Prop1Case::Case2 ? std::abs(bias) / (w_norm * std::abs(cos_min)) : std::abs(bias) / w_norm;
  }

  double bound() const {
    switch (kind) {
      case Prop1Case::Case1: return prop1_bound_case1(batch);
      case Prop1Case::Case2: return prop1_bound_case2(batch, mean_norm, bias, w_norm, cos_min);
      case Prop1Case::Inapplicable: return 0.0;
    }
    return 0.0;
  }

  // Conditions under which the bound is derived: the window sits on the dying side of the
  // threshold and the fitted spread respects the variance bound used in the derivation.
  bool valid() const {
    if (batch < 2 || !(w_norm > 0.0) || std_norm < 0.0) return false;
    const double t = threshold();
    const double b = static_cast<double>(batch);
    if (kind == Prop1Case::Case1) {
      if (!(mean_norm >= t)) return false;
      const double max_var = b * (t - mean_norm) * (t - mean_norm);
      return std_norm * std_norm <= max_var * (1.0 + 1e-12);
    }
    if (kind == Prop1Case::Case2) {
      if (!(bias < 0.0) || cos_min == 0.0 || !(mean_norm > 0.0 && mean_norm <= t)) return false;
      const double max_var = b / (b - 1.0) * t * t / 4.0;
      return std_norm * std_norm <= max_var * (1.0 + 1e-12);
    }
    return false;
  }
};

struct MonteCarloEstimate {
  double probability = 0.0;
  double ci_half_width = 0.0;  // 95% Wilson interval
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t rejected = 0;  // negative-norm draws that were resampled

  double rejection_rate() const {
    const double total = static_cast<double>(samples + rejected);
    return total > 0 ? static_cast<double>(rejected) / total : 0.0;
  }
};

struct WilsonInterval {
  double low;
  double high;
};

inline WilsonInterval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Empirical probability that a fresh ||p|| ~ Normal(mean, std) lands on the active side of the
// threshold. Negative draws are rejected and redrawn. Samples are split into fixed-size chunks,
// each with its own generator derived from (seed, chunk index), so results do not depend on the
// thread count. In case 2 the fitted mean and std are taken as the true parameters of the new
// draw, which is an interpretation: the bound itself is derived from batch estimates.
inline MonteCarloEstimate prop1_monte_carlo(const Prop1Scenario& sc, std::uint64_t n_samples, std::uint64_t seed,
                                            unsigned threads = 1) {
  if (n_samples < 1000) throw std::invalid_argument("prop1 monte carlo: need at least 1000 samples");
  if (sc.kind == Prop1Case::Inapplicable) throw std::invalid_argument("prop1 monte carlo: scenario is inapplicable");
  if (sc.std_norm < 0.0) throw std::invalid_argument("prop1 monte carlo: negative std");
  if (sc.std_norm == 0.0 && sc.mean_norm < 0.0) throw std::invalid_argument("prop1 monte carlo: negative point mass");

  constexpr std::uint64_t chunk = 1 << 16;
  const std::uint64_t n_chunks = (n_samples + chunk - 1) / chunk;
  const double t = sc.threshold();
  const bool below = sc.kind == Prop1Case::Case1;
  std::vector<std::uint64_t> hits(n_chunks, 0), rejects(n_chunks, 0);

  auto run_chunk = [&](std::uint64_t c) {
    std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(c + 1)));
    std::normal_distribution<double> nd(sc.mean_norm, sc.std_norm);
    const std::uint64_t begin = c * chunk;
    const std::uint64_t count = std::min(chunk, n_samples - begin);
    std::uint64_t h = 0, r = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
      double x = sc.std_norm == 0.0 ? sc.mean_norm : nd(rng);
      while (x < 0.0) {
        ++r;
        x = nd(rng);
      }
      h += below ? (x < t) : (x > t);
    }
    hits[c] = h;
    rejects[c] = r;
  };

  if (threads <= 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::uint64_t c = w; c < n_chunks; c += threads) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  MonteCarloEstimate est;
  std::uint64_t total_hits = 0;
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    total_hits += hits[c];
    est.rejected += rejects[c];
  }
  est.samples = n_samples;
  est.probability = static_cast<double>(total_hits) / static_cast<double>(n_samples);
  const auto ci = wilson_interval(total_hits, n_samples);
  est.ci_low = ci.low;
  est.ci_high = ci.high;
  est.ci_half_width = 0.5 * (ci.high - ci.low);
  return est;
}

// Random scenario satisfying the case's preconditions. Norm distributions are kept well away
// from zero (mean >= 4 std) so the normal model's negative tail is negligible.
inline Prop1Scenario random_prop1_scenario(Prop1Case kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> batch_dist(2, 512);
  Prop1Scenario sc;
  sc.kind = kind;
  sc.batch = batch_dist(rng);
  sc.w_norm = 0.5 + 2.0 * u(rng);
  sc.bias = -(0.5 + 4.0 * u(rng));
  const double b = static_cast<double>(sc.batch);
  if (kind == Prop1Case::Case1) {
    const double t = sc.threshold();
    const double gap = t * (0.001 + 0.2 * u(rng));
    sc.mean_norm = t + gap;
    const double max_std = std::sqrt(b) * gap;
    sc.std_norm = std::min(max_std * u(rng), sc.mean_norm / 4.0);
  } else {
    sc.cos_min = 0.1 + 0.9 * u(rng);
    const double t = sc.threshold();
    sc.mean_norm = t * (0.5 + 0.5 * u(rng));
    const double max_std = std::sqrt(b / (b - 1.0)) * t / 2.0;
    sc.std_norm = std::min(max_std * u(rng), sc.mean_norm / 4.0);
  }
  return sc;
}

// Case 1 scenario at the largest spread the derivation allows; the bound is attained there.
inline Prop1Scenario extremal_case1_scenario(std::size_t batch, double threshold, double gap) {
  Prop1Scenario sc;
  sc.kind = Prop1Case::Case1;
  sc.batch = batch;
  sc.w_norm = 1.0;
  sc.bias = -threshold;
  sc.mean_norm = threshold + gap;
  sc.std_norm = std::sqrt(static_cast<double>(batch)) * gap;
  return sc;
}

}  // namespace rescale
