#include <gtest/gtest.h>

#include <memory>
#include <random>

#include "test_util.hpp"

using namespace dtarget;

namespace {

Observation at(const EnvStrip& s, const Sensor& sensor, std::size_t t, int soc) { return Observation(s, sensor, {t, soc}); }

}  // namespace

TEST(Threshold, Validation) {
  EXPECT_NO_THROW(ThresholdRule{}.validate());
  EXPECT_THROW((ThresholdRule{60, 50, 100}.validate()), ParameterError);
  EXPECT_THROW(GreedyRadar(ThresholdRule{5, 50, 40}), ParameterError);
}

TEST(Random, ZeroProbabilityNeverSamples) {
  std::mt19937_64 rng(3);
  const auto strip = testutil::random_strip(31, 500, rng);
  RandomPolicy p(0.0, 9);
  const auto log = run_episode(strip, SimModel{}, p, 100);
  EXPECT_EQ(log.off_fraction(), 1.0);
}

TEST(Random, EnergyLimitsAlwaysSampling) {
  const EnvStrip strip(31, 10000);
  RandomPolicy p(1.0, 9);
  const auto log = run_episode(strip, SimModel{}, p, 100, {false, false});
  EXPECT_NEAR(1.0 - log.off_fraction(), 0.2, 0.01);
  EXPECT_EQ(log.violations, 0u);
}

TEST(Random, SeededAndResettable) {
  std::mt19937_64 rng(4);
  const auto strip = testutil::random_strip(31, 2000, rng);
  RandomPolicy a(0.2, 17), b(0.2, 17), c(0.2, 18);
  const auto la = run_episode(strip, SimModel{}, a, 100);
  const auto lb = run_episode(strip, SimModel{}, b, 100);
  const auto la2 = run_episode(strip, SimModel{}, a, 100);
  const auto lc = run_episode(strip, SimModel{}, c, 100);
  EXPECT_EQ(la.total_reward, lb.total_reward);
  EXPECT_EQ(la.off_steps, la2.off_steps);
  EXPECT_EQ(la.total_reward, la2.total_reward);
  EXPECT_NE(la.total_reward, lc.total_reward);
  EXPECT_THROW(RandomPolicy(1.5), ParameterError);
}

TEST(Random, SamplesNadirOnly) {
  EnvStrip strip(31, 20);
  strip.set(3, 10, RewardClass::High);
  RandomPolicy p(1.0, 1);
  const Sensor s;
  const auto a = p.decide(at(strip, s, 10, 100));
  ASSERT_TRUE(a.is_sample());
  ASSERT_TRUE(a.target);
  EXPECT_EQ(a.target->row, 15);
  EXPECT_EQ(step(strip, SimModel{}, {10, 100}, a).reward, 1.0);
}

TEST(GreedyNadir, Thresholds) {
  const Sensor s;
  GreedyNadir p;
  EnvStrip strip(31, 20);
  strip.set(15, 5, RewardClass::High);
  strip.set(15, 6, RewardClass::Mid);
  EXPECT_TRUE(p.decide(at(strip, s, 5, 5)).is_sample());
  EXPECT_FALSE(p.decide(at(strip, s, 5, 4)).is_sample());
  EXPECT_FALSE(p.decide(at(strip, s, 6, 49)).is_sample());
  EXPECT_TRUE(p.decide(at(strip, s, 6, 50)).is_sample());
  EXPECT_TRUE(p.decide(at(strip, s, 7, 100)).is_sample());
  EXPECT_FALSE(p.decide(at(strip, s, 7, 99)).is_sample());
}

TEST(GreedyLateral, LineOnly) {
  const Sensor s;
  GreedyLateral p;
  EnvStrip strip(31, 40);
  EXPECT_FALSE(p.decide(at(strip, s, 20, 60)).is_sample());

  strip.set(27, 20, RewardClass::High);
  const auto a = p.decide(at(strip, s, 20, 10));
  ASSERT_TRUE(a.is_sample());
  EXPECT_EQ(a.target->row, 27);
  EXPECT_EQ(a.target->t, 20u);

  EnvStrip ahead(31, 40);
  ahead.set(15, 22, RewardClass::High);
  EXPECT_FALSE(p.decide(at(ahead, s, 20, 60)).is_sample());
}

TEST(GreedyRadar, WholeDisc) {
  const Sensor s;
  GreedyRadar p;
  EnvStrip strip(31, 40);
  EXPECT_FALSE(p.decide(at(strip, s, 20, 99)).is_sample());
  EXPECT_TRUE(p.decide(at(strip, s, 20, 100)).is_sample());
  strip.set(20, 28, RewardClass::High);
  const auto a = p.decide(at(strip, s, 20, 5));
  ASSERT_TRUE(a.is_sample());
  EXPECT_EQ(a.target->row, 20);
  EXPECT_EQ(a.target->t, 28u);
  EXPECT_FALSE(p.decide(at(strip, s, 20, 4)).is_sample());
}

TEST(GreedyRadar, BeatsLateralOnSyntheticStrips) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    GenParams g;
    g.seed = seed;
    g.length = 5000;
    const auto strip = generate_synthetic(g);
    GreedyRadar radar;
    GreedyLateral lateral;
    EXPECT_GE(run_episode(strip, SimModel{}, radar, 100, {false, false}).total_reward,
              run_episode(strip, SimModel{}, lateral, 100, {false, false}).total_reward);
  }
}

TEST(GreedyWindow, Budget) {
  GreedyWindow w;
  EXPECT_EQ(w.budget(5, 57), 11);
  EXPECT_EQ(w.budget(20, 57), 3 + 11);
  EXPECT_EQ(w.budget(100, 0), 23);
}

TEST(GreedyWindow, HighAlwaysSampledWhenFeasible) {
  const Sensor s;
  EnvStrip strip(31, 100);
  for (std::size_t t = 21; t <= 78; ++t) strip.set(0, t, RewardClass::High);
  strip.set(15, 20, RewardClass::High);
  for (auto ranking : {WindowRanking::Column, WindowRanking::Reach}) {
    GreedyWindow w(EnergyModel{}, ranking, std::nullopt);
    EXPECT_TRUE(w.decide(at(strip, s, 20, 5)).is_sample());
    EXPECT_FALSE(w.decide(at(strip, s, 20, 4)).is_sample());
    GreedyWindow reserved(EnergyModel{}, ranking);
    EXPECT_TRUE(reserved.decide(at(strip, s, 20, 5)).is_sample());
  }
}

TEST(GreedyWindow, ColumnRuleWaitsForBetterColumns) {
  const Sensor s;
  GreedyWindow w(EnergyModel{}, WindowRanking::Column, std::nullopt);
  // soc 20 gives B = 3 + 11 = 14.
  EnvStrip strip(31, 200);
  for (std::size_t k = 1; k <= 14; ++k) strip.set(0, 50 + 3 * k, RewardClass::Mid);
  EXPECT_FALSE(w.decide(at(strip, s, 50, 20)).is_sample());
  strip.set(0, 50 + 3 * 14, RewardClass::Low);
  EXPECT_TRUE(w.decide(at(strip, s, 50, 20)).is_sample());
}

TEST(GreedyWindow, EmptyLookaheadSamplesMid) {
  const Sensor s;
  EnvStrip strip(31, 60);
  strip.set(15, 60, RewardClass::Mid);
  GreedyWindow literal(EnergyModel{}, WindowRanking::Column, std::nullopt);
  EXPECT_TRUE(literal.decide(at(strip, s, 60, 5)).is_sample());
  GreedyWindow reach(EnergyModel{}, WindowRanking::Reach, std::nullopt);
  EXPECT_TRUE(reach.decide(at(strip, s, 60, 5)).is_sample());
  GreedyWindow reserved;
  EXPECT_FALSE(reserved.decide(at(strip, s, 60, 14)).is_sample());
  EXPECT_TRUE(reserved.decide(at(strip, s, 60, 15)).is_sample());
}

TEST(GreedyWindow, ReachCountsStepsNotColumns) {
  const Sensor s;
  GreedyWindow w(EnergyModel{}, WindowRanking::Reach, std::nullopt);
  // One High pixel on the nadir row 30 columns ahead stays in the disc for 31 future steps,
  // which exceeds B = 14 at soc 20, so a Low now is skipped.
  EnvStrip strip(31, 200);
  strip.set(15, 80, RewardClass::High);
  EXPECT_FALSE(w.decide(at(strip, s, 50, 20)).is_sample());
  // At the edge row it is reachable only from t+30 exactly: 1 step < B.
  EnvStrip edge(31, 200);
  edge.set(0, 80, RewardClass::High);
  EXPECT_TRUE(w.decide(at(edge, s, 50, 20)).is_sample());
}

TEST(Baselines, NeverInfeasible) {
  std::mt19937_64 rng(21);
  std::vector<std::unique_ptr<Policy>> ps;
  ps.push_back(std::make_unique<RandomPolicy>(0.5, 3));
  ps.push_back(std::make_unique<GreedyNadir>());
  ps.push_back(std::make_unique<GreedyLateral>());
  ps.push_back(std::make_unique<GreedyRadar>());
  ps.push_back(std::make_unique<GreedyWindow>());
  ps.push_back(std::make_unique<GreedyWindow>(EnergyModel{}, WindowRanking::Column, std::nullopt));
  ps.push_back(std::make_unique<GreedyWindow>(EnergyModel{}, WindowRanking::Reach, std::nullopt));
  for (int i = 0; i < 10; ++i) {
    const auto strip = testutil::random_strip(31, 800, rng, 0.02 * i, 0.05 * i);
    const int soc0 = static_cast<int>(rng() % 101);
    for (auto& p : ps) {
      const auto log = run_episode(strip, SimModel{}, *p, soc0);
      ASSERT_EQ(log.violations, 0u) << p->name();
      ASSERT_GE(log.min_soc, 0);
      ASSERT_LE(log.max_soc, 100);
    }
  }
}

TEST(Baselines, OrderingOnSyntheticStrips) {
  std::array<double, 5> sum{};
  for (std::uint64_t seed = 100; seed < 104; ++seed) {
    GenParams g;
    g.seed = seed;
    g.length = 10000;
    const auto strip = generate_synthetic(g);
    const SimModel model;
    RandomPolicy r(0.2, seed);
    GreedyNadir n;
    GreedyLateral l;
    GreedyRadar d;
    GreedyWindow w;
    Policy* ps[5] = {&r, &n, &l, &d, &w};
    for (int k = 0; k < 5; ++k) sum[k] += run_episode(strip, model, *ps[k], 100, {false, false}).total_reward;
  }
  for (int k = 1; k < 5; ++k) EXPECT_LT(sum[k - 1], sum[k]) << k;
}
