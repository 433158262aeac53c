// Generates two strips, trains a Q-table on one and compares a few policies on the other.

#include <cstdio>

#include "dtarget/dtarget.hpp"

int main() {
  using namespace dtarget;
  GenParams gen;
  gen.length = 5000;
  gen.seed = 11;
  const EnvStrip train = generate_synthetic(gen);
  gen.seed = 12;
  const EnvStrip test = generate_synthetic(gen);

  const SimModel model;
  const auto qtable = train_dp_sweep(std::span(&train, 1), model, QLearnParams{});
  const auto table = build_dp_table(test, model);
  const double best = table.value(1, 100);

  GreedyRadar radar;
  GreedyWindow window;
  QPolicy q(qtable);
  ExpertPolicy dp(table, test);
  for (Policy* p : {static_cast<Policy*>(&radar), static_cast<Policy*>(&window), static_cast<Policy*>(&q),
                    static_cast<Policy*>(&dp)}) {
    const auto log = run_episode(test, model, *p, 100, {false, false});
    std::printf("%-14s reward %8.0f  %6.2f%% of DP  off %.3f\n", p->name().c_str(), log.total_reward,
                100.0 * log.total_reward / best, log.off_fraction());
  }
}
