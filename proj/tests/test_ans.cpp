#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "rescale_rl/ans.hpp"

using namespace rescale;

namespace {

AnsConfig short_tolerance(std::size_t t) {
  AnsConfig c;
  c.tolerance = t;
  return c;
}

struct LandscapeRun {
  std::vector<double> multipliers;
  std::vector<double> visited{1.0};
  bool stopped = false;
  double final_scale = 1.0;
};

// Feeds g(current scale) every step until the controller stops.
LandscapeRun run_landscape(const std::function<double(double)>& g, AnsConfig cfg, std::size_t max_steps = 100000) {
  ScaleController ctl(cfg);
  LandscapeRun run;
  for (std::size_t i = 0; i < max_steps && !ctl.stopped(); ++i) {
    const auto d = ctl.step(g(ctl.scale()));
    if (d.is_rescale()) {
      run.multipliers.push_back(d.multiplier);
      run.visited.push_back(ctl.scale());
    }
  }
  run.stopped = ctl.stopped();
  run.final_scale = ctl.scale();
  return run;
}

}  // namespace

TEST(Ans, FirstEstimateEqualsFirstReturn) {
  for (double r : {3.7, -0.25, 1e-9, 12345.0}) {
    ScaleController ctl;
    EXPECT_EQ(ctl.ema_update(r), r);
    EXPECT_EQ(ctl.t(), 1u);
  }
}

TEST(Ans, ConstantStreamIsFixedPoint) {
  for (double beta : {0.5, 0.9, 0.99}) {
    AnsConfig cfg;
    cfg.beta = beta;
    ScaleController ctl(cfg);
    for (int i = 0; i < 2000; ++i) EXPECT_NEAR(ctl.ema_update(-4.2), -4.2, 1e-12);
  }
}

TEST(Ans, BiasCorrectionByHand) {
  ScaleController ctl;
  ctl.ema_update(1.0);
  const double m_hat = ctl.ema_update(3.0);
  // m = 0.9 * 0.1 + 0.1 * 3 = 0.39, corrected by 1 - 0.81
  EXPECT_NEAR(m_hat, 0.39 / 0.19, 1e-15);
  EXPECT_THROW(ctl.ema_update(std::numeric_limits<double>::quiet_NaN()), std::domain_error);

  ScaleController two;
  two.ema_update(10.0);
  EXPECT_NEAR(two.ema_update(20.0), 2.9 / 0.19, 1e-12);
  EXPECT_NEAR(two.m(), 2.9, 1e-15);
}

TEST(Ans, EstimateMatchesDividedAccumulator) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(5.0, 30.0);
  for (double beta : {0.3, 0.9, 0.999}) {
    AnsConfig cfg;
    cfg.beta = beta;
    ScaleController ctl(cfg);
    double m = 0.0;
    for (int t = 1; t <= 3000; ++t) {
      const double r = nd(rng);
      m = beta * m + (1.0 - beta) * r;
      const double expect = m / (1.0 - std::pow(beta, t));
      EXPECT_NEAR(ctl.ema_update(r), expect, 1e-12 * std::max(1.0, std::abs(expect))) << beta << " t=" << t;
    }
  }
}

TEST(Ans, ScriptedSequence) {
  ScaleController ctl(short_tolerance(2));
  std::vector<AnsDecision> seen;
  auto phase = [&](double best) {
    seen.push_back(ctl.step(best));
    for (int i = 0; i < 3; ++i) seen.push_back(ctl.step(0.0));
  };
  phase(1.0);
  phase(2.0);
  phase(1.5);
  phase(1.0);
  ASSERT_EQ(seen.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    if (i == 3) EXPECT_EQ(seen[i], AnsDecision::rescale(8.0));
    else if (i == 7) EXPECT_EQ(seen[i], AnsDecision::rescale(8.0));
    else if (i == 11) EXPECT_EQ(seen[i], AnsDecision::rescale(0.9));
    else if (i == 15) EXPECT_EQ(seen[i], AnsDecision::stop());
    else EXPECT_EQ(seen[i], AnsDecision::keep_going()) << "step " << i;
  }
  EXPECT_TRUE(ctl.stopped());
  EXPECT_TRUE(ctl.reverse());
  EXPECT_NEAR(ctl.scale(), 57.6, 1e-12);
  EXPECT_EQ(ctl.rescale_count(), 3u);
  EXPECT_THROW(ctl.step(1.0), std::logic_error);
}

TEST(Ans, PhaseResetsOnRescale) {
  ScaleController ctl(short_tolerance(1));
  ctl.step(5.0);
  ctl.step(0.0);
  const auto d = ctl.step(0.0);
  ASSERT_TRUE(d.is_rescale());
  EXPECT_EQ(ctl.t(), 0u);
  EXPECT_EQ(ctl.t_stop(), 0u);
  EXPECT_EQ(ctl.m(), 0.0);
  EXPECT_EQ(ctl.m_hat_max(), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(ctl.r_prev(), 5.0);
}

TEST(Ans, ImprovementMustBeStrict) {
  ScaleController ctl(short_tolerance(1));
  ctl.step(2.0);
  EXPECT_EQ(ctl.t_stop(), 0u);
  ctl.step(2.0);  // m_hat == 2 exactly: no improvement
  EXPECT_EQ(ctl.t_stop(), 1u);
}

TEST(Ans, ReverseKeepsDecreasingWhileImproving) {
  // With T = 0 each phase is one improving return followed by one that ends the phase.
  ScaleController ctl(short_tolerance(0));
  auto phase = [&](double best) {
    EXPECT_EQ(ctl.step(best), AnsDecision::keep_going());
    return ctl.step(-1000.0);
  };
  EXPECT_EQ(phase(1.0), AnsDecision::rescale(8.0));  // beats -inf
  EXPECT_EQ(phase(0.5), AnsDecision::rescale(0.9));  // worse: reverse
  EXPECT_EQ(phase(0.7), AnsDecision::rescale(0.9));  // better than 0.5: keep going down
  EXPECT_EQ(phase(0.6), AnsDecision::stop());
  EXPECT_NEAR(ctl.scale(), 8.0 * 0.81, 1e-12);
}

TEST(Ans, ConcaveLandscapeInvariants) {
  for (double s_star = 1.0; s_star <= 64.0; s_star *= 1.37) {
    for (auto g : {std::function<double(double)>([&](double s) { return -(s - s_star) * (s - s_star); }),
                   std::function<double(double)>([&](double s) {
                     const double d = std::log(s) - std::log(s_star);
                     return -d * d;
                   })}) {
      const auto run = run_landscape(g, short_tolerance(3));
      ASSERT_TRUE(run.stopped);
      bool reversed = false;
      for (double m : run.multipliers) {
        if (m == 0.9) reversed = true;
        else EXPECT_FALSE(reversed) << "c_inc after reversing";
      }
      EXPECT_TRUE(reversed);
      // the search stops one c_dec step past the last improving scale
      ASSERT_GE(run.visited.size(), 3u);
      const double last_good = run.visited[run.visited.size() - 2];
      EXPECT_NEAR(run.final_scale, last_good * 0.9, 1e-9 * last_good);
      EXPECT_LE(g(run.final_scale), g(last_good));
    }
  }
}

TEST(Ans, MaxStepsBound) {
  EXPECT_EQ(max_steps_bound(8.0, 0.9, 64.0), 22);
  EXPECT_EQ(max_steps_bound(8.0, 0.9, 1.0), 20);
  EXPECT_EQ(max_steps_bound(8.0, 0.9, 65.0), 23);
  EXPECT_EQ(max_steps_bound(2.0, 0.5, 8.0), 4);
  EXPECT_THROW(max_steps_bound(1.0, 0.9, 8.0), std::invalid_argument);
  EXPECT_THROW(max_steps_bound(8.0, 1.5, 8.0), std::invalid_argument);
}

TEST(Ans, InvalidConfig) {
  AnsConfig c;
  c.c_inc = 1.0;
  EXPECT_THROW(ScaleController{c}, std::invalid_argument);
  c = {};
  c.beta = 1.0;
  EXPECT_THROW(ScaleController{c}, std::invalid_argument);
  EXPECT_EQ(to_string(AnsDecision::rescale(0.9)), "rescale:0.90000000000000002");
  EXPECT_EQ(to_string(AnsDecision::stop()), "stop");
}
