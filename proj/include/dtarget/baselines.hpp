#pragma once

#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <vector>
#include <random>
#include <string>

#include "satsim.hpp"

namespace dtarget {

/// Minimum SOC at which each class is worth a sample. Feasibility (soc >= discharge) applies on top.
struct ThresholdRule {
  int need_high = 5;
  int need_mid = 50;
  int need_low = 100;

  void validate() const {
    if (!(need_high <= need_mid && need_mid <= need_low)) throw ParameterError("need_high <= need_mid <= need_low violated");
  }

  int need(RewardClass c) const {
    switch (c) {
      case RewardClass::High: return need_high;
      case RewardClass::Mid: return need_mid;
      case RewardClass::Low: return need_low;
    }
    return need_low;
  }
};

namespace detail {

inline Pixel nadir_pixel(const Observation& obs) { return {obs.strip().center_row(), obs.t()}; }

}  // namespace detail

/// Samples nadir with probability p whenever the battery allows it.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(double p_sample = 0.2, std::uint64_t seed = 0, EnergyModel energy = {})
      : p_(p_sample), seed_(seed), energy_(energy), rng_(seed) {
    if (!(p_ >= 0.0 && p_ <= 1.0)) throw ParameterError("p_sample must lie in [0, 1]");
  }

  Action decide(const Observation& obs) override {
    if (!energy_.can_sample(obs.soc())) return Action::off();
    if (coin_(rng_) < p_) return Action::sample_at(detail::nadir_pixel(obs));
    return Action::off();
  }

  std::string name() const override { return "random"; }
  void reset() override { rng_.seed(seed_); }

 private:
  double p_;
  std::uint64_t seed_;
  EnergyModel energy_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> coin_{0.0, 1.0};
};

/// Fixed nadir pointing; samples when the class below clears its SOC threshold.
class GreedyNadir final : public Policy {
 public:
  explicit GreedyNadir(ThresholdRule rule = {}, EnergyModel energy = {}) : rule_(rule), energy_(energy) { rule_.validate(); }

  Action decide(const Observation& obs) override {
    const RewardClass c = obs.nadir_class();
    if (energy_.can_sample(obs.soc()) && obs.soc() >= rule_.need(c)) return Action::sample_at(detail::nadir_pixel(obs));
    return Action::off();
  }

  std::string name() const override { return "greedy_nadir"; }

 private:
  ThresholdRule rule_;
  EnergyModel energy_;
};

/// Searches the cross-track line through nadir for the best class.
class GreedyLateral final : public Policy {
 public:
  explicit GreedyLateral(ThresholdRule rule = {}, EnergyModel energy = {}) : rule_(rule), energy_(energy) { rule_.validate(); }

  Action decide(const Observation& obs) override {
    if (!energy_.can_sample(obs.soc())) return Action::off();
    const auto target = detail::best_in(obs.strip(), obs.sensor().lateral_offsets(), obs.t());
    if (target && obs.soc() >= rule_.need(target->cls)) return Action::sample_at(target->pixel);
    return Action::off();
  }

  std::string name() const override { return "greedy_lateral"; }

 private:
  ThresholdRule rule_;
  EnergyModel energy_;
};

/// Searches the full radar disc for the best class.
class GreedyRadar final : public Policy {
 public:
  explicit GreedyRadar(ThresholdRule rule = {}, EnergyModel energy = {}) : rule_(rule), energy_(energy) { rule_.validate(); }

  Action decide(const Observation& obs) override {
    if (!energy_.can_sample(obs.soc())) return Action::off();
    const auto target = obs.best_target();
    if (target && obs.soc() >= rule_.need(target->cls)) return Action::sample_at(target->pixel);
    return Action::off();
  }

  std::string name() const override { return "greedy_radar"; }

 private:
  ThresholdRule rule_;
  EnergyModel energy_;
};

/// What the lookahead ranking in GreedyWindow counts as one future opportunity.
enum class WindowRanking {
  /// Best class of each lookahead column (all rows).
  Column,
  /// Best class reachable by the radar disc at each future step t+k, k in [1, L], using only
  /// pixels already visible. Counts how long a target stays in reach, not just its width.
  Reach,
};

/// Budget-ranked lookahead rule. With r_now the best class in the disc and R the future
/// opportunities over the lookahead plus r_now, the affordable sample count over the window is
///   B = floor((soc - discharge) / (discharge - recharge)) + floor(L * recharge / discharge),
/// capped to [1, |R|]. Sample iff r_now ranks within the top B of R (ties favour now).
class GreedyWindow final : public Policy {
 public:
  explicit GreedyWindow(EnergyModel energy = {}, WindowRanking ranking = WindowRanking::Reach,
                        std::optional<ThresholdRule> reserve = ThresholdRule{5, 15, 100})
      : energy_(energy), ranking_(ranking), reserve_(reserve) {
    energy_.validate();
    if (reserve_) reserve_->validate();
  }

  /// Sample budget for a given SOC and lookahead length, before capping.
  int budget(int soc, std::size_t lookahead) const {
    const int net = energy_.sample_discharge - energy_.recharge_per_step;
    return (soc - energy_.sample_discharge) / net +
           static_cast<int>(lookahead * static_cast<std::size_t>(energy_.recharge_per_step) /
                            static_cast<std::size_t>(energy_.sample_discharge));
  }

  Action decide(const Observation& obs) override {
    if (!energy_.can_sample(obs.soc())) return Action::off();
    const auto target = obs.best_target();
    if (!target) return Action::off();
    const RewardClass now = target->cls;
    const std::size_t cols = obs.lookahead_columns();
    const int b = std::clamp(budget(obs.soc(), cols), 1, static_cast<int>(cols) + 1);
    if (reserve_ && obs.soc() < reserve_->need(now)) return Action::off();
    if (now == RewardClass::High) return Action::sample_at(target->pixel);

    // r_now is within the top B iff fewer than B entries of R are strictly better.
    const int better = ranking_ == WindowRanking::Column ? better_columns(obs, now, b) : better_reach(obs, now, b);
    if (better < b) return Action::sample_at(target->pixel);
    return Action::off();
  }

  std::string name() const override { return "greedy_window"; }
  WindowRanking ranking() const { return ranking_; }

 private:
  static int better_columns(const Observation& obs, RewardClass now, int limit) {
    int better = 0;
    for (std::size_t k = 1; k <= obs.lookahead_columns() && better < limit; ++k) {
      for (std::size_t row = 0; row < obs.lookahead_rows(); ++row) {
        if (obs.lookahead(k, row) > now) {
          ++better;
          break;
        }
      }
    }
    return better;
  }

  /// For every visible column c in [t - r, t + L], the smallest |row - nadir| holding a class
  /// better than `now`; a future step t+k can reach column c iff drow^2 + (c - t - k)^2 <= r^2.
  int better_reach(const Observation& obs, RewardClass now, int limit) {
    const int r = obs.sensor().radar_radius();
    const auto cols = static_cast<int>(obs.lookahead_columns());
    const int center = obs.strip().center_row();
    const auto height = static_cast<int>(obs.lookahead_rows());
    constexpr int kNone = std::numeric_limits<int>::max();

    // Index j covers column t - r + j. Columns <= t come from the radar disc, the rest from the lookahead.
    nearest_.assign(static_cast<std::size_t>(r + cols + 1), kNone);
    obs.for_each_radar_cell([&](const RadarOffset& o, RewardClass c) {
      if (o.dcol > 0 || c <= now) return;
      auto& slot = nearest_[static_cast<std::size_t>(o.dcol + r)];
      slot = std::min(slot, std::abs(o.drow));
    });
    for (int k = 1; k <= cols; ++k) {
      int best = kNone;
      for (int row = 0; row < height; ++row)
        if (obs.lookahead(static_cast<std::size_t>(k), static_cast<std::size_t>(row)) > now)
          best = std::min(best, std::abs(row - center));
      nearest_[static_cast<std::size_t>(r + k)] = best;
    }

    int better = 0;
    for (int k = 1; k <= cols && better < limit; ++k) {
      // Disc at t+k spans columns t+k-r .. t+k+r, clipped to what is visible.
      const int lo = k;           // index of column t+k-r
      const int hi = std::min(k + 2 * r, r + cols);
      for (int j = lo; j <= hi; ++j) {
        const int d = nearest_[static_cast<std::size_t>(j)];
        if (d == kNone) continue;
        const int dc = j - r - k;
        if (d * d + dc * dc <= r * r) {
          ++better;
          break;
        }
      }
    }
    return better;
  }

  EnergyModel energy_;
  WindowRanking ranking_;
  std::optional<ThresholdRule> reserve_;
  std::vector<int> nearest_;
};

}  // namespace dtarget
