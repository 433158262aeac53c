#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "test_util.hpp"

using namespace dtarget;

namespace {

QLearnParams sweeps(int n) {
  QLearnParams p;
  p.sweeps = n;
  return p;
}

/// Tiny strips where every timestep has distinct presence flags, so no two steps share a Q state.
std::vector<EnvStrip> unaliased_strips(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto model = testutil::tiny_model();
  std::vector<EnvStrip> out;
  while (out.size() < count) {
    const std::size_t T = 4 + rng() % 9;
    auto s = testutil::random_strip(9, T, rng, 0.03, 0.06);
    const auto f = strip_presence_flags(s, model.sensor);
    if (std::set<std::uint8_t>(f.begin(), f.end()).size() == f.size()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(QState, Indexing) {
  const EnvStrip strip(31, 200);
  const Observation obs(strip, Sensor{}, {10, 75});
  const auto s = featurize_q(obs);
  EXPECT_EQ(s.flags, kRadarLow | kLookLow);
  EXPECT_EQ(s.index(), 4809u);
  EXPECT_EQ((QState{0, 0}.index()), 0u);
  EXPECT_EQ((QState{100, 63}.index()), 6463u);
  EXPECT_EQ(QTable().states(), 6464u);
}

TEST(QState, Bijection) {
  std::set<std::size_t> seen;
  for (int soc = 0; soc <= 100; ++soc)
    for (int f = 0; f < kQFlagCombos; ++f) {
      const QState s{soc, static_cast<std::uint8_t>(f)};
      ASSERT_EQ(QState::from_index(s.index()), s);
      seen.insert(s.index());
    }
  EXPECT_EQ(seen.size(), 6464u);
  EXPECT_EQ(*seen.rbegin(), 6463u);
}

TEST(QState, FlagsFollowSensors) {
  EnvStrip strip(31, 200);
  strip.set(15, 60, RewardClass::High);
  // Ahead of the disc but inside the lookahead window.
  EXPECT_EQ(featurize_q(Observation(strip, Sensor{}, {20, 50})).flags, kRadarLow | kLookLow | kLookHigh);
  // Inside the disc and no longer ahead.
  EXPECT_EQ(featurize_q(Observation(strip, Sensor{}, {60, 50})).flags, kRadarLow | kRadarHigh | kLookLow);
  // Last column: nothing ahead.
  EXPECT_EQ(featurize_q(Observation(strip, Sensor{}, {200, 50})).flags, kRadarLow);
}

TEST(QUpdate, Arithmetic) {
  QTable t;
  const auto p = sweeps(1);
  q_update(t, 10, ActionKind::Sample, 100.0, std::nullopt, p);
  EXPECT_DOUBLE_EQ(t.q(10, ActionKind::Sample), 40.0);
  t.q(20, ActionKind::Off) = 40.0;
  q_update(t, 20, ActionKind::Off, 0.0, std::size_t{10}, p);
  EXPECT_DOUBLE_EQ(t.q(20, ActionKind::Off), 39.84);
  for (int i = 0; i < 200; ++i) q_update(t, 30, ActionKind::Sample, 10.0, std::nullopt, p);
  EXPECT_NEAR(t.q(30, ActionKind::Sample), 10.0, 1e-9);
  EXPECT_EQ(t.visits(30, ActionKind::Sample), 200u);
}

TEST(QLearnParams, Validation) {
  QLearnParams p;
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.gamma = 1.0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = {};
  p.sweeps = -1;
  EXPECT_THROW(p.validate(), ParameterError);
  EXPECT_THROW(train_dp_sweep(std::span<const EnvStrip>{}, SimModel{}, {}), ParameterError);
}

TEST(EpsilonGreedy, ZeroEpsilonOnAllLowNeverSamples) {
  const EnvStrip strip(9, 100);
  QLearnParams p;
  p.epsilon = 0.0;
  const auto t = train_epsilon_greedy(strip, testutil::tiny_model(), p, 3);
  for (std::size_t s = 0; s < t.states(); ++s) EXPECT_EQ(t.visits(s, ActionKind::Sample), 0u);
}

TEST(EpsilonGreedy, FullEpsilonExploresBothActions) {
  std::mt19937_64 rng(5);
  const auto strip = testutil::random_strip(9, 400, rng);
  QLearnParams p;
  p.epsilon = 1.0;
  p.seed = 3;
  const auto t = train_epsilon_greedy(strip, testutil::tiny_model(), p, 5);
  std::size_t off = 0, sample = 0;
  for (std::size_t s = 0; s < t.states(); ++s) {
    off += t.visits(s, ActionKind::Off);
    sample += t.visits(s, ActionKind::Sample);
  }
  EXPECT_EQ(off + sample, 2000u);
  EXPECT_GT(sample, 200u);
  EXPECT_GT(off, sample);
  EXPECT_EQ(t, train_epsilon_greedy(strip, testutil::tiny_model(), p, 5));
}

TEST(DpSweep, ZeroSweepsIsZeroTable) {
  const EnvStrip strip(9, 10, 7.0f, RewardClass::High);
  const std::vector<EnvStrip> strips{strip};
  const auto t = train_dp_sweep(strips, testutil::tiny_model(), sweeps(0));
  EXPECT_EQ(t, QTable());
  auto pol = q_policy(t);
  EXPECT_FALSE(pol.decide(Observation(strip, testutil::tiny_model().sensor, {1, 100})).is_sample());
}

TEST(DpSweep, TwoStepExample) {
  // Nadir-only radar: Low then High from soc 5; the greedy policy waits for the High.
  EnvStrip strip(9, 2);
  strip.set(4, 2, RewardClass::High);
  const SimModel model{Sensor::from_pixels(0, 5), {}, {}};
  const std::vector<EnvStrip> strips{strip};
  const auto t = train_dp_sweep(strips, model, sweeps(50));
  auto pol = q_policy(t);
  const auto log = run_episode(strip, model, pol, 5);
  ASSERT_EQ(log.steps.size(), 2u);
  EXPECT_EQ(log.steps[0].action, ActionKind::Off);
  EXPECT_EQ(log.steps[1].action, ActionKind::Sample);
  EXPECT_EQ(log.total_reward, 100.0);
}

TEST(DpSweep, ConvergesToDpOnTinyStrips) {
  const auto model = testutil::tiny_model();
  std::mt19937_64 rng(77);
  for (const auto& strip : unaliased_strips(20, 11)) {
    const std::vector<EnvStrip> strips{strip};
    const auto t = train_dp_sweep(strips, model, sweeps(200));
    const auto dp = build_dp_table(strip, model);
    auto pol = q_policy(t);
    const int soc0 = static_cast<int>(rng() % 30);
    const auto log = run_episode(strip, model, pol, soc0, {false, false});
    EXPECT_EQ(log.total_reward, static_cast<double>(dp.value(1, soc0))) << "T=" << strip.length() << " soc0=" << soc0;
  }
}

TEST(DpSweep, HorizonLimitsUpdates) {
  std::mt19937_64 rng(6);
  const std::vector<EnvStrip> strips{testutil::random_strip(9, 50, rng)};
  const auto model = testutil::tiny_model();
  const auto full = train_dp_sweep(strips, model, sweeps(1));
  const auto part = train_dp_sweep(strips, model, sweeps(1), 10);
  std::size_t full_visits = 0, part_visits = 0;
  for (std::size_t s = 0; s < full.states(); ++s)
    for (auto a : {ActionKind::Off, ActionKind::Sample}) {
      full_visits += full.visits(s, a);
      part_visits += part.visits(s, a);
    }
  // 101 Off and 96 Sample updates per timestep.
  EXPECT_EQ(full_visits, 50u * 197u);
  EXPECT_EQ(part_visits, 10u * 197u);
  EXPECT_EQ(train_dp_sweep(strips, model, sweeps(1), 500), full);
}

TEST(QPolicy, MasksInfeasibleSample) {
  QTable t;
  for (std::size_t s = 0; s < t.states(); ++s) t.q(s, ActionKind::Sample) = 1000.0;
  auto pol = q_policy(t);
  const EnvStrip strip(31, 20, 7.0f, RewardClass::High);
  EXPECT_FALSE(pol.decide(Observation(strip, Sensor{}, {3, 4})).is_sample());
  EXPECT_TRUE(pol.decide(Observation(strip, Sensor{}, {3, 5})).is_sample());
  std::mt19937_64 rng(1);
  const auto log = run_episode(testutil::random_strip(31, 500, rng), SimModel{}, pol, 30);
  EXPECT_EQ(log.violations, 0u);
}

TEST(DpSweep, Deterministic) {
  std::mt19937_64 rng(12);
  const std::vector<EnvStrip> strips{testutil::random_strip(9, 60, rng), testutil::random_strip(9, 40, rng)};
  const auto model = testutil::tiny_model();
  EXPECT_EQ(train_dp_sweep(strips, model, sweeps(3)), train_dp_sweep(strips, model, sweeps(3)));
}

TEST(QIo, RoundTrip) {
  testutil::TempDir dir("q");
  std::mt19937_64 rng(13);
  const std::vector<EnvStrip> strips{testutil::random_strip(9, 30, rng)};
  const auto t = train_dp_sweep(strips, testutil::tiny_model(), sweeps(2));
  save_qtable(t, dir / "q.dtq", sweeps(2));
  const auto back = load_qtable(dir / "q.dtq");
  ASSERT_EQ(back.states(), t.states());
  for (std::size_t s = 0; s < t.states(); ++s)
    for (auto a : {ActionKind::Off, ActionKind::Sample})
      ASSERT_EQ(back.q(s, a), static_cast<double>(static_cast<float>(t.q(s, a))));
  EXPECT_TRUE(std::filesystem::exists(dir / "q.dtq.manifest"));

  std::ofstream(dir / "bad.dtq", std::ios::binary) << "DTQ1\x05";
  EXPECT_THROW(load_qtable(dir / "bad.dtq"), FormatError);
  EXPECT_THROW(load_qtable(dir / "missing.dtq"), IoError);
}
