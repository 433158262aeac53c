#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "worldgen.hpp"

namespace dtarget {

/// Physical sensor description. Pixel footprints derive from ground distance = altitude * tan(angle).
struct SensorGeometry {
  double altitude_km = 400.0;
  double radar_half_angle_deg = 15.0;
  double lookahead_half_angle_deg = 45.0;
  double pixel_size_km = 7.0;

  void validate() const {
    if (!(altitude_km > 0.0 && pixel_size_km > 0.0)) throw ParameterError("altitude and pixel size must be positive");
    if (!(0.0 < radar_half_angle_deg && radar_half_angle_deg < lookahead_half_angle_deg &&
          lookahead_half_angle_deg < 90.0))
      throw ParameterError("need 0 < radar half-angle < lookahead half-angle < 90 degrees");
  }

  int radar_radius_px() const { return pixels_for(radar_half_angle_deg); }
  int lookahead_len_px() const { return pixels_for(lookahead_half_angle_deg); }

 private:
  int pixels_for(double deg) const {
    return static_cast<int>(std::lround(altitude_km * std::tan(deg * std::numbers::pi / 180.0) / pixel_size_km));
  }
};

/// Offset of a radar-reachable pixel from nadir, in (row, column) pixels.
struct RadarOffset {
  int drow;
  int dcol;
  int dist2;
};

/// Pixel-space sensor model: radar disc offsets (pre-sorted by placement priority) and lookahead length.
class Sensor {
 public:
  Sensor() : Sensor(SensorGeometry{}) {}

  explicit Sensor(const SensorGeometry& g) {
    g.validate();
    init(g.radar_radius_px(), g.lookahead_len_px());
  }

  static Sensor from_pixels(int radar_radius, int lookahead_len) {
    if (radar_radius < 0 || lookahead_len < 0) throw ParameterError("sensor extents must be non-negative");
    Sensor s(Uninit{});
    s.init(radar_radius, lookahead_len);
    return s;
  }

  int radar_radius() const { return radar_radius_; }
  int lookahead_len() const { return lookahead_len_; }

  /// Disc offsets ordered by (distance to nadir, row, column): the first offset holding the best
  /// class is the placement target.
  std::span<const RadarOffset> radar_offsets() const { return offsets_; }

  /// Offsets on the cross-track line through nadir (current column only), same ordering.
  std::span<const RadarOffset> lateral_offsets() const { return lateral_; }

  bool in_radar(int drow, long long dcol) const {
    return static_cast<long long>(drow) * drow + dcol * dcol <= static_cast<long long>(radar_radius_) * radar_radius_;
  }

 private:
  struct Uninit {};
  explicit Sensor(Uninit) {}

  void init(int radius, int lookahead) {
    radar_radius_ = radius;
    lookahead_len_ = lookahead;
    offsets_.clear();
    for (int dr = -radius; dr <= radius; ++dr)
      for (int dc = -radius; dc <= radius; ++dc)
        if (dr * dr + dc * dc <= radius * radius) offsets_.push_back({dr, dc, dr * dr + dc * dc});
    std::sort(offsets_.begin(), offsets_.end(), [](const RadarOffset& a, const RadarOffset& b) {
      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
      if (a.drow != b.drow) return a.drow < b.drow;
      return a.dcol < b.dcol;
    });
    lateral_.clear();
    std::copy_if(offsets_.begin(), offsets_.end(), std::back_inserter(lateral_),
                 [](const RadarOffset& o) { return o.dcol == 0; });
  }

  int radar_radius_ = 0;
  int lookahead_len_ = 0;
  std::vector<RadarOffset> offsets_;
  std::vector<RadarOffset> lateral_;
};

/// Integer state-of-charge dynamics. Sampling drains `sample_discharge` then the step recharges.
struct EnergyModel {
  int sample_discharge = 5;
  int recharge_per_step = 1;
  int soc_min = 0;
  int soc_max = 100;

  void validate() const {
    if (!(sample_discharge > recharge_per_step && recharge_per_step > 0))
      throw ParameterError("need sample_discharge > recharge_per_step > 0");
    if (soc_min != 0 || soc_max <= 0) throw ParameterError("SOC range must be [0, soc_max] with soc_max > 0");
  }

  bool can_sample(int soc) const { return soc >= sample_discharge; }
  int levels() const { return soc_max - soc_min + 1; }
};

/// Everything about the satellite that is fixed for an experiment.
struct SimModel {
  Sensor sensor;
  EnergyModel energy;
  RewardModel rewards;
};

struct SatState {
  std::size_t t = 1;  // 1-based timestep
  int soc = 100;

  friend bool operator==(const SatState&, const SatState&) = default;
};

enum class ActionKind : std::uint8_t { Off = 0, Sample = 1 };

inline const char* to_string(ActionKind a) { return a == ActionKind::Sample ? "sample" : "off"; }

struct Pixel {
  int row;
  std::size_t t;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct Target {
  Pixel pixel;
  RewardClass cls;
};

/// Binary decision. A Sample without an explicit target is placed by `best_target`; policies
/// restricted to a sub-footprint (nadir, lateral line) name their pixel explicitly.
struct Action {
  ActionKind kind = ActionKind::Off;
  std::optional<Pixel> target;

  static Action off() { return {}; }
  static Action sample() { return {ActionKind::Sample, std::nullopt}; }
  static Action sample_at(Pixel p) { return {ActionKind::Sample, p}; }

  bool is_sample() const { return kind == ActionKind::Sample; }
};

namespace detail {

inline void check_t(const EnvStrip& strip, std::size_t t) {
  if (t < 1 || t > strip.length())
    throw BoundsError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(strip.length()) + "]");
}

/// First pixel, in placement order, holding the best class among `offsets`.
inline std::optional<Target> best_in(const EnvStrip& strip, std::span<const RadarOffset> offsets, std::size_t t) {
  const int center = strip.center_row();
  std::optional<Target> best;
  for (const auto& o : offsets) {
    const int row = center + o.drow;
    const long long col = static_cast<long long>(t) + o.dcol;
    if (!strip.contains(row, col)) continue;
    const RewardClass c = strip.cell0(static_cast<std::size_t>(row), static_cast<std::size_t>(col - 1));
    if (!best || c > best->cls) {
      best = Target{{row, static_cast<std::size_t>(col)}, c};
      if (c == RewardClass::High) break;
    }
  }
  return best;
}

}  // namespace detail

/// Highest-reward pixel in the radar footprint, closest to nadir; ties by smaller row then column.
inline std::optional<Target> best_target(const EnvStrip& strip, const Sensor& sensor, std::size_t t) {
  detail::check_t(strip, t);
  return detail::best_in(strip, sensor.radar_offsets(), t);
}

/// Same rule restricted to the cross-track line through nadir.
inline std::optional<Target> best_lateral_target(const EnvStrip& strip, const Sensor& sensor, std::size_t t) {
  detail::check_t(strip, t);
  return detail::best_in(strip, sensor.lateral_offsets(), t);
}

/// Reward of sampling at each timestep (placement by best_target), indexed t-1.
inline std::vector<double> sample_rewards(const EnvStrip& strip, const SimModel& model) {
  std::vector<double> r(strip.length());
  for (std::size_t t = 1; t <= strip.length(); ++t) {
    const auto target = best_target(strip, model.sensor, t);
    r[t - 1] = target ? model.rewards.value(target->cls) : 0.0;
  }
  return r;
}

inline int soc_transition(const EnergyModel& energy, int soc, ActionKind action) {
  if (soc < energy.soc_min || soc > energy.soc_max) throw BoundsError("SOC " + std::to_string(soc) + " out of range");
  if (action == ActionKind::Off) return std::min(energy.soc_max, soc + energy.recharge_per_step);
  if (!energy.can_sample(soc))
    throw InfeasibleActionError("cannot sample at SOC " + std::to_string(soc) + " (need " +
                                std::to_string(energy.sample_discharge) + ")");
  return std::clamp(soc - energy.sample_discharge + energy.recharge_per_step, energy.soc_min, energy.soc_max);
}

/// Read-only view of what the satellite sees at a state: the radar disc around nadir and the
/// lookahead columns t+1 .. min(t + L, T) over all rows. Cheap to construct; borrows the strip.
class Observation {
 public:
  Observation(const EnvStrip& strip, const Sensor& sensor, SatState state)
      : strip_(&strip), sensor_(&sensor), state_(state) {}

  const EnvStrip& strip() const { return *strip_; }
  const Sensor& sensor() const { return *sensor_; }
  SatState state() const { return state_; }
  std::size_t t() const { return state_.t; }
  int soc() const { return state_.soc; }

  /// Calls fn(offset, class) for every in-bounds radar pixel, in placement order.
  template <class Fn>
  void for_each_radar_cell(Fn&& fn) const {
    const int center = strip_->center_row();
    for (const auto& o : sensor_->radar_offsets()) {
      const int row = center + o.drow;
      const long long col = static_cast<long long>(state_.t) + o.dcol;
      if (!strip_->contains(row, col)) continue;
      fn(o, strip_->cell0(static_cast<std::size_t>(row), static_cast<std::size_t>(col - 1)));
    }
  }

  std::size_t radar_cell_count() const {
    std::size_t n = 0;
    for_each_radar_cell([&](const RadarOffset&, RewardClass) { ++n; });
    return n;
  }

  RewardClass nadir_class() const { return strip_->cell0(static_cast<std::size_t>(strip_->center_row()), state_.t - 1); }

  std::size_t lookahead_columns() const {
    const std::size_t left = strip_->length() - state_.t;
    return std::min(left, static_cast<std::size_t>(sensor_->lookahead_len()));
  }

  std::size_t lookahead_rows() const { return strip_->height(); }

  /// Lookahead cell `k` columns ahead (k in [1, lookahead_columns()]).
  RewardClass lookahead(std::size_t k, std::size_t row) const { return strip_->cell0(row, state_.t + k - 1); }

  std::optional<Target> best_target() const { return detail::best_in(*strip_, sensor_->radar_offsets(), state_.t); }

 private:
  const EnvStrip* strip_;
  const Sensor* sensor_;
  SatState state_;
};

inline Observation observe(const EnvStrip& strip, const Sensor& sensor, SatState state) {
  detail::check_t(strip, state.t);
  return Observation(strip, sensor, state);
}

struct StepOutcome {
  SatState next;
  double reward = 0.0;
  std::optional<Target> sampled;
};

/// Deterministic transition. Throws on an infeasible Sample or a target outside the radar disc.
inline StepOutcome step(const EnvStrip& strip, const SimModel& model, SatState state, const Action& action) {
  detail::check_t(strip, state.t);
  StepOutcome out;
  out.next = {state.t + 1, soc_transition(model.energy, state.soc, action.kind)};
  if (!action.is_sample()) return out;

  if (action.target) {
    const Pixel p = *action.target;
    const long long dcol = static_cast<long long>(p.t) - static_cast<long long>(state.t);
    if (!strip.contains(p.row, static_cast<long long>(p.t)) ||
        !model.sensor.in_radar(p.row - strip.center_row(), dcol))
      throw InfeasibleActionError("sample target outside the radar footprint");
    out.sampled = Target{p, strip.at(p.row, p.t)};
  } else {
    out.sampled = best_target(strip, model.sensor, state.t);
  }
  if (out.sampled) out.reward = model.rewards.value(out.sampled->cls);
  return out;
}

/// A decision rule mapping observations to actions.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action decide(const Observation& obs) = 0;
  virtual std::string name() const = 0;
  /// Restores the initial internal state (PRNG) so every episode is reproducible.
  virtual void reset() {}
};

struct StepRecord {
  std::size_t t;
  int soc;
  ActionKind action;
  std::optional<RewardClass> cls;
  double reward;
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  std::array<std::size_t, 3> samples_per_class{};
  std::size_t off_steps = 0;
  std::size_t violations = 0;
  double total_reward = 0.0;
  int final_soc = 0;
  int min_soc = 0;
  int max_soc = 0;
  /// Wall time spent inside decide(), only filled when timing is requested.
  std::chrono::nanoseconds decide_time{0};

  std::size_t length() const { return off_steps + samples_per_class[0] + samples_per_class[1] + samples_per_class[2]; }
  std::size_t sample_steps() const { return samples_per_class[0] + samples_per_class[1] + samples_per_class[2]; }
  double off_fraction() const { return length() ? static_cast<double>(off_steps) / static_cast<double>(length()) : 0.0; }
  double class_fraction(RewardClass c) const {
    return length() ? static_cast<double>(samples_per_class[index_of(c)]) / static_cast<double>(length()) : 0.0;
  }
};

struct EpisodeOptions {
  bool record_steps = true;
  bool time_decisions = false;
};

/// Rolls `policy` over the whole strip from SOC `soc0`. Infeasible decisions become Off and are
/// counted in `violations`.
inline EpisodeLog run_episode(const EnvStrip& strip, const SimModel& model, Policy& policy, int soc0,
                              EpisodeOptions options = {}) {
  if (soc0 < model.energy.soc_min || soc0 > model.energy.soc_max)
    throw ParameterError("initial SOC " + std::to_string(soc0) + " out of range");
  policy.reset();
  EpisodeLog log;
  if (options.record_steps) log.steps.reserve(strip.length());
  SatState state{1, soc0};
  log.min_soc = log.max_soc = soc0;
  using clock = std::chrono::steady_clock;

  for (std::size_t t = 1; t <= strip.length(); ++t) {
    state.t = t;
    const Observation obs(strip, model.sensor, state);
    Action action;
    try {
      if (options.time_decisions) {
        const auto start = clock::now();
        action = policy.decide(obs);
        log.decide_time += clock::now() - start;
      } else {
        action = policy.decide(obs);
      }
    } catch (const std::exception& e) {
      throw EpisodeError(t, std::string(policy.name()) + ": " + e.what());
    }

    StepOutcome out;
    try {
      out = step(strip, model, state, action);
    } catch (const InfeasibleActionError&) {
      ++log.violations;
      out = step(strip, model, state, Action::off());
    }

    if (out.sampled) {
      ++log.samples_per_class[index_of(out.sampled->cls)];
    } else {
      ++log.off_steps;
    }
    log.total_reward += out.reward;
    if (options.record_steps)
      log.steps.push_back({t, state.soc, out.sampled ? ActionKind::Sample : ActionKind::Off,
                           out.sampled ? std::optional(out.sampled->cls) : std::nullopt, out.reward});
    state = out.next;
    log.min_soc = std::min(log.min_soc, state.soc);
    log.max_soc = std::max(log.max_soc, state.soc);
  }
  log.final_soc = state.soc;
  return log;
}

/// CSV export: t,soc,action,class,reward (soc is the level before acting).
inline void write_episode_csv(const EpisodeLog& log, std::ostream& out) {
  out << "t,soc,action,class,reward\n";
  for (const auto& s : log.steps) {
    out << s.t << ',' << s.soc << ',' << to_string(s.action) << ',' << (s.cls ? to_string(*s.cls) : "none") << ','
        << s.reward << '\n';
  }
}

}  // namespace dtarget
