#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "satsim.hpp"

namespace dtarget {

/// Memoised reward-to-go D(t, soc, a) for one strip, dense over t in [1, T], soc in [0, soc_max]
/// and a in {Off, Sample}. Infeasible Sample cells hold -infinity.
class DpTable {
 public:
  static constexpr float kInfeasible = -std::numeric_limits<float>::infinity();
  static constexpr std::size_t kActions = 2;

  DpTable() = default;
  DpTable(std::size_t length, int soc_levels, std::uint64_t strip_hash)
      : length_(length), levels_(soc_levels), strip_hash_(strip_hash),
        values_(length * static_cast<std::size_t>(soc_levels) * kActions, 0.0f) {}

  std::size_t length() const { return length_; }
  int soc_levels() const { return levels_; }
  std::uint64_t strip_hash() const { return strip_hash_; }
  const std::vector<float>& values() const { return values_; }

  float at(std::size_t t, int soc, ActionKind a) const { return values_[index(t, soc, a)]; }
  float& at(std::size_t t, int soc, ActionKind a) { return values_[index(t, soc, a)]; }

  /// max_a D(t, soc, a)
  float value(std::size_t t, int soc) const {
    return std::max(at(t, soc, ActionKind::Off), at(t, soc, ActionKind::Sample));
  }

  void check(std::size_t t, int soc) const {
    if (t < 1 || t > length_) throw BoundsError("DP timestep " + std::to_string(t) + " out of range");
    if (soc < 0 || soc >= levels_) throw BoundsError("DP SOC " + std::to_string(soc) + " out of range");
  }

  friend bool operator==(const DpTable&, const DpTable&) = default;

 private:
  std::size_t index(std::size_t t, int soc, ActionKind a) const {
    return ((t - 1) * static_cast<std::size_t>(levels_) + static_cast<std::size_t>(soc)) * kActions +
           static_cast<std::size_t>(a);
  }

  std::size_t length_ = 0;
  int levels_ = 0;
  std::uint64_t strip_hash_ = 0;
  std::vector<float> values_;
};

struct DpOptions {
  std::size_t memory_cap_bytes = std::size_t{1} << 30;
};

inline std::size_t dp_memory_estimate(std::size_t length, int soc_levels) {
  return length * static_cast<std::size_t>(soc_levels) * DpTable::kActions * sizeof(float);
}

/// Backward induction from the last timestep:
///   D(t, soc, a) = r(t, a) + max_a' D(t+1, soc'(soc, a), a'),  D(T, soc, a) = r(T, a).
inline DpTable build_dp_table(const EnvStrip& strip, const SimModel& model, DpOptions options = {}) {
  model.energy.validate();
  const int levels = model.energy.levels();
  const std::size_t need = dp_memory_estimate(strip.length(), levels);
  if (need > options.memory_cap_bytes)
    throw ResourceError("DP table needs " + std::to_string(need) + " bytes, cap is " +
                        std::to_string(options.memory_cap_bytes));

  const auto reward = sample_rewards(strip, model);
  DpTable table(strip.length(), levels, strip.hash());
  const std::size_t T = strip.length();
  for (std::size_t t = T; t >= 1; --t) {
    for (int soc = 0; soc < levels; ++soc) {
      const int off_next = soc_transition(model.energy, soc, ActionKind::Off);
      table.at(t, soc, ActionKind::Off) = t < T ? table.value(t + 1, off_next) : 0.0f;
      if (model.energy.can_sample(soc)) {
        const int next = soc_transition(model.energy, soc, ActionKind::Sample);
        const float future = t < T ? table.value(t + 1, next) : 0.0f;
        table.at(t, soc, ActionKind::Sample) = static_cast<float>(reward[t - 1]) + future;
      } else {
        table.at(t, soc, ActionKind::Sample) = DpTable::kInfeasible;
      }
    }
  }
  return table;
}

/// How expert_action resolves D(t, soc, Off) == D(t, soc, Sample). Both choices are optimal.
enum class TieBreak { Off, Sample };

/// argmax_a D(t, soc, a) over feasible actions; equal values resolve to Off unless told otherwise.
inline ActionKind expert_action(const DpTable& table, std::size_t t, int soc, TieBreak tie = TieBreak::Off) {
  table.check(t, soc);
  const float sample = table.at(t, soc, ActionKind::Sample);
  const float off = table.at(t, soc, ActionKind::Off);
  if (sample == DpTable::kInfeasible) return ActionKind::Off;
  if (tie == TieBreak::Sample) return sample >= off ? ActionKind::Sample : ActionKind::Off;
  return sample > off ? ActionKind::Sample : ActionKind::Off;
}

/// Replays the DP table on the strip it was built for.
class ExpertPolicy final : public Policy {
 public:
  ExpertPolicy(const DpTable& table, const EnvStrip& strip) : table_(&table), strip_(&strip) {
    if (table.strip_hash() != strip.hash() || table.length() != strip.length())
      throw DataError("DP table was built for a different strip");
  }

  Action decide(const Observation& obs) override {
    if (&obs.strip() != strip_) throw DataError("expert policy queried on a foreign strip");
    return expert_action(*table_, obs.t(), obs.soc()) == ActionKind::Sample ? Action::sample() : Action::off();
  }

  std::string name() const override { return "dp"; }

 private:
  const DpTable* table_;
  const EnvStrip* strip_;
};

inline ExpertPolicy dp_policy(const DpTable& table, const EnvStrip& strip) { return ExpertPolicy(table, strip); }

struct BruteForceResult {
  double value = 0.0;
  std::vector<ActionKind> actions;
};

inline constexpr std::size_t kBruteForceMaxLength = 20;

/// Exhaustive search over all 2^T action sequences (infeasible branches pruned). The first
/// optimal sequence in lexicographic order (Off < Sample) is returned.
inline BruteForceResult brute_force_optimal(const EnvStrip& strip, const SimModel& model, int soc0) {
  if (strip.length() > kBruteForceMaxLength)
    throw ParameterError("brute force refuses T > " + std::to_string(kBruteForceMaxLength));
  if (soc0 < model.energy.soc_min || soc0 > model.energy.soc_max) throw ParameterError("initial SOC out of range");
  const auto reward = sample_rewards(strip, model);
  const std::size_t T = strip.length();

  BruteForceResult best;
  bool have_best = false;
  std::vector<ActionKind> path;
  path.reserve(T);

  auto search = [&](auto&& self, std::size_t t, int soc, double acc) -> void {
    if (t > T) {
      if (!have_best || acc > best.value) {
        best.value = acc;
        best.actions = path;
        have_best = true;
      }
      return;
    }
    path.push_back(ActionKind::Off);
    self(self, t + 1, soc_transition(model.energy, soc, ActionKind::Off), acc);
    path.back() = ActionKind::Sample;
    if (model.energy.can_sample(soc))
      self(self, t + 1, soc_transition(model.energy, soc, ActionKind::Sample), acc + reward[t - 1]);
    path.pop_back();
  };
  search(search, 1, soc0, 0.0);
  return best;
}

// DP dump: "DTD1" | u32 length | u32 soc_levels | u32 n_actions | u64 strip_hash | f32 values
// ordered (t, soc, action).

inline void save_dp_table(const DpTable& table, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("DTD1");
  w.u32(static_cast<std::uint32_t>(table.length()));
  w.u32(static_cast<std::uint32_t>(table.soc_levels()));
  w.u32(static_cast<std::uint32_t>(DpTable::kActions));
  w.u64(table.strip_hash());
  for (float v : table.values()) w.f32(v);
  w.save(path);
}

inline DpTable load_dp_table(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic("DTD1");
  const std::size_t dims_at = r.offset();
  const std::uint32_t length = r.u32();
  const std::uint32_t levels = r.u32();
  const std::uint32_t actions = r.u32();
  const std::uint64_t hash = r.u64();
  if (length == 0 || levels == 0 || actions != DpTable::kActions) throw FormatError(dims_at, "bad DP table dimensions");
  if (std::uint64_t{length} * levels * actions > (std::uint64_t{1} << 32)) throw FormatError(dims_at, "dimension overflow");
  DpTable table(length, static_cast<int>(levels), hash);
  for (std::size_t t = 1; t <= length; ++t)
    for (int soc = 0; soc < static_cast<int>(levels); ++soc)
      for (auto a : {ActionKind::Off, ActionKind::Sample}) table.at(t, soc, a) = r.f32();
  r.expect_end();
  return table;
}

}  // namespace dtarget
