#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "satsim.hpp"

namespace dtarget {

/// Presence bits of the discrete Q state, in index order.
enum QFlag : std::uint8_t {
  kRadarLow = 1u << 0,
  kRadarMid = 1u << 1,
  kRadarHigh = 1u << 2,
  kLookLow = 1u << 3,
  kLookMid = 1u << 4,
  kLookHigh = 1u << 5,
};

inline constexpr int kQFlagCount = 6;
inline constexpr int kQFlagCombos = 1 << kQFlagCount;

/// SOC plus six class-presence flags (radar disc and lookahead window).
struct QState {
  int soc = 0;
  std::uint8_t flags = 0;

  std::size_t index() const { return static_cast<std::size_t>(soc) * kQFlagCombos + flags; }

  static QState from_index(std::size_t i) {
    return {static_cast<int>(i / kQFlagCombos), static_cast<std::uint8_t>(i % kQFlagCombos)};
  }

  friend bool operator==(const QState&, const QState&) = default;
};

/// Presence flags for an observation; the SOC part of the state is added by the caller.
inline std::uint8_t presence_flags(const Observation& obs) {
  std::uint8_t flags = 0;
  obs.for_each_radar_cell([&](const RadarOffset&, RewardClass c) { flags |= static_cast<std::uint8_t>(1u << index_of(c)); });
  constexpr std::uint8_t all_look = kLookLow | kLookMid | kLookHigh;
  for (std::size_t k = 1; k <= obs.lookahead_columns() && (flags & all_look) != all_look; ++k)
    for (std::size_t row = 0; row < obs.lookahead_rows(); ++row)
      flags |= static_cast<std::uint8_t>(1u << (3 + index_of(obs.lookahead(k, row))));
  return flags;
}

inline QState featurize_q(const Observation& obs) { return {obs.soc(), presence_flags(obs)}; }

/// Presence flags for every timestep of a strip (index t-1); SOC-independent, so training computes them once.
inline std::vector<std::uint8_t> strip_presence_flags(const EnvStrip& strip, const Sensor& sensor) {
  std::vector<std::uint8_t> out(strip.length());
  for (std::size_t t = 1; t <= strip.length(); ++t) out[t - 1] = presence_flags(Observation(strip, sensor, {t, 0}));
  return out;
}

struct QLearnParams {
  double alpha = 0.4;
  double gamma = 0.99;
  double epsilon = 0.1;
  int sweeps = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must lie in [0, 1]");
    if (sweeps < 0) throw ParameterError("sweeps must be non-negative");
  }
};

class QTable {
 public:
  explicit QTable(int soc_levels = 101)
      : levels_(soc_levels), q_(states()), visits_(states()) {}

  std::size_t states() const { return static_cast<std::size_t>(levels_) * kQFlagCombos; }
  int soc_levels() const { return levels_; }

  double q(std::size_t s, ActionKind a) const { return q_[s][static_cast<std::size_t>(a)]; }
  double& q(std::size_t s, ActionKind a) { return q_[s][static_cast<std::size_t>(a)]; }
  std::uint32_t visits(std::size_t s, ActionKind a) const { return visits_[s][static_cast<std::size_t>(a)]; }
  void visit(std::size_t s, ActionKind a) { ++visits_[s][static_cast<std::size_t>(a)]; }

  double max_q(std::size_t s) const { return std::max(q_[s][0], q_[s][1]); }

  std::size_t visited_states() const {
    std::size_t n = 0;
    for (const auto& v : visits_) n += (v[0] + v[1]) > 0;
    return n;
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  int levels_;
  std::vector<std::array<double, 2>> q_;
  std::vector<std::array<std::uint32_t, 2>> visits_;
};

/// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); a terminal transition has no s'.
inline void q_update(QTable& table, std::size_t s, ActionKind a, double r, std::optional<std::size_t> next,
                     const QLearnParams& params) {
  const double future = next ? table.max_q(*next) : 0.0;
  double& q = table.q(s, a);
  q += params.alpha * (r + params.gamma * future - q);
  table.visit(s, a);
}

/// Greedy action with infeasible Sample masked out; exact ties go to Off.
inline ActionKind greedy_action(const QTable& table, std::size_t s, int soc, const EnergyModel& energy) {
  if (!energy.can_sample(soc)) return ActionKind::Off;
  return table.q(s, ActionKind::Sample) > table.q(s, ActionKind::Off) ? ActionKind::Sample : ActionKind::Off;
}

/// Forward episodes from `soc0` with epsilon-greedy exploration.
inline QTable train_epsilon_greedy(const EnvStrip& strip, const SimModel& model, const QLearnParams& params,
                                   int episodes, int soc0 = 100) {
  params.validate();
  if (episodes < 0) throw ParameterError("episode count must be non-negative");
  QTable table(model.energy.levels());
  const auto flags = strip_presence_flags(strip, model.sensor);
  const auto reward = sample_rewards(strip, model);
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t T = strip.length();

  for (int e = 0; e < episodes; ++e) {
    int soc = soc0;
    for (std::size_t t = 1; t <= T; ++t) {
      const std::size_t s = QState{soc, flags[t - 1]}.index();
      ActionKind a;
      if (unit(rng) <= params.epsilon) {
        a = coin(rng) ? ActionKind::Sample : ActionKind::Off;
        if (!model.energy.can_sample(soc)) a = ActionKind::Off;
      } else {
        a = greedy_action(table, s, soc, model.energy);
      }
      const double r = a == ActionKind::Sample ? reward[t - 1] : 0.0;
      const int next_soc = soc_transition(model.energy, soc, a);
      const auto next = t < T ? std::optional(QState{next_soc, flags[t]}.index()) : std::nullopt;
      q_update(table, s, a, r, next, params);
      soc = next_soc;
    }
  }
  return table;
}

/// Backward sweeps over stored data: for every strip, t = T..1, every SOC and every feasible action,
/// the transition is simulated and applied with q_update. Strips are visited in the given order.
/// A non-zero `horizon` restricts each sweep to t <= horizon (successor states still come from the strip).
inline QTable train_dp_sweep(std::span<const EnvStrip> strips, const SimModel& model, const QLearnParams& params,
                             std::size_t horizon = 0) {
  params.validate();
  if (strips.empty()) throw ParameterError("training set is empty");
  QTable table(model.energy.levels());

  std::vector<std::vector<std::uint8_t>> flags;
  std::vector<std::vector<double>> rewards;
  for (const auto& strip : strips) {
    flags.push_back(strip_presence_flags(strip, model.sensor));
    rewards.push_back(sample_rewards(strip, model));
  }

  const int levels = model.energy.levels();
  for (int sweep = 0; sweep < params.sweeps; ++sweep) {
    for (std::size_t k = 0; k < strips.size(); ++k) {
      const std::size_t T = strips[k].length();
      const std::size_t last = horizon ? std::min(horizon, T) : T;
      for (std::size_t t = last; t >= 1; --t) {
        const std::uint8_t f = flags[k][t - 1];
        for (int soc = 0; soc < levels; ++soc) {
          const std::size_t s = QState{soc, f}.index();
          for (auto a : {ActionKind::Off, ActionKind::Sample}) {
            if (a == ActionKind::Sample && !model.energy.can_sample(soc)) continue;
            const int next_soc = soc_transition(model.energy, soc, a);
            const double r = a == ActionKind::Sample ? rewards[k][t - 1] : 0.0;
            const auto next = t < T ? std::optional(QState{next_soc, flags[k][t]}.index()) : std::nullopt;
            q_update(table, s, a, r, next, params);
          }
        }
      }
    }
  }
  return table;
}

/// Table lookup policy; placement by best_target.
class QPolicy final : public Policy {
 public:
  explicit QPolicy(const QTable& table, EnergyModel energy = {}) : table_(&table), energy_(energy) {}

  Action decide(const Observation& obs) override {
    const QState s = featurize_q(obs);
    return greedy_action(*table_, s.index(), obs.soc(), energy_) == ActionKind::Sample ? Action::sample()
                                                                                       : Action::off();
  }

  std::string name() const override { return "qlearn"; }

 private:
  const QTable* table_;
  EnergyModel energy_;
};

inline QPolicy q_policy(const QTable& table, EnergyModel energy = {}) { return QPolicy(table, energy); }

// Q-table file: "DTQ1" | u32 n_states | u32 n_actions | f32 values row-major (state, action).
// Hyperparameters go to the `<path>.manifest` sidecar.

inline void save_qtable(const QTable& table, const std::filesystem::path& path, const QLearnParams& params = {}) {
  io::Writer w;
  w.magic("DTQ1");
  w.u32(static_cast<std::uint32_t>(table.states()));
  w.u32(2);
  for (std::size_t s = 0; s < table.states(); ++s)
    for (auto a : {ActionKind::Off, ActionKind::Sample}) w.f32(static_cast<float>(table.q(s, a)));
  w.save(path);

  auto mpath = path;
  mpath += ".manifest";
  std::ofstream m(mpath, std::ios::trunc);
  if (!m) throw IoError("cannot write manifest for '" + path.string() + "'");
  m.precision(17);
  m << "format=DTQ1\nalpha=" << params.alpha << "\ngamma=" << params.gamma << "\nsweeps=" << params.sweeps
    << "\nseed=" << params.seed << "\n";
}

inline QTable load_qtable(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic("DTQ1");
  const std::size_t dims_at = r.offset();
  const std::uint32_t states = r.u32();
  const std::uint32_t actions = r.u32();
  if (actions != 2 || states == 0 || states % kQFlagCombos != 0) throw FormatError(dims_at, "bad Q-table dimensions");
  QTable table(static_cast<int>(states / kQFlagCombos));
  for (std::size_t s = 0; s < states; ++s)
    for (auto a : {ActionKind::Off, ActionKind::Sample}) table.q(s, a) = r.f32();
  r.expect_end();
  return table;
}

}  // namespace dtarget
