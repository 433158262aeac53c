#pragma once

// Experiment harness: dataset resolution, learner training, evaluation, reports, training-size
// curves and decision latency.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "baselines.hpp"
#include "bclone.hpp"
#include "dporacle.hpp"
#include "qlearn.hpp"
#include "satsim.hpp"
#include "worldgen.hpp"

namespace dtarget {

inline constexpr std::size_t kDeskScaleLength = 10000;
inline constexpr std::size_t kFullScaleLength = 86400;

inline const std::vector<std::string>& known_policies() {
  static const std::vector<std::string> names{"random",       "greedy_nadir", "greedy_lateral", "greedy_radar",
                                              "greedy_window", "bc",           "qlearn",         "dp"};
  return names;
}

/// One dataset: a file on disk or a generator spec.
struct DatasetSpec {
  std::string name;
  std::optional<std::filesystem::path> path;
  std::optional<GenParams> synthetic;
};

struct BcConfig {
  TrainParams train;
  BcMode mode = BcMode::Deterministic;
  TieBreak demo_tie = TieBreak::Sample;
  bool balance = true;
  std::uint64_t demo_seed = 7;
  std::uint64_t policy_seed = 5;
};

struct BenchConfig {
  Scenario scenario = Scenario::CloudAvoidance;
  SensorGeometry geometry;
  EnergyModel energy;
  RewardModel rewards;
  std::vector<DatasetSpec> datasets;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> roster;
  QLearnParams qlearn;
  BcConfig bc;
  ThresholdRule threshold;
  ThresholdRule window_reserve{5, 15, 100};
  double random_p = 0.2;
  std::uint64_t random_seed = 1;
  int soc0 = 100;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> cache_dir;
  std::size_t dp_memory_cap_bytes = std::size_t{1} << 30;

  SimModel model() const {
    SimModel m{Sensor(geometry), energy, rewards};
    m.rewards.scenario = scenario;
    return m;
  }

  bool uses(const std::string& policy) const { return std::find(roster.begin(), roster.end(), policy) != roster.end(); }

  void validate() const {
    try {
      geometry.validate();
      energy.validate();
      rewards.validate();
      qlearn.validate();
      bc.train.validate();
      threshold.validate();
      window_reserve.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    if (!(random_p >= 0.0 && random_p <= 1.0)) throw ConfigError("random.p must lie in [0, 1]");
    if (soc0 < energy.soc_min || soc0 > energy.soc_max) throw ConfigError("soc0 out of range");
    for (const auto& p : roster)
      if (std::find(known_policies().begin(), known_policies().end(), p) == known_policies().end())
        throw ConfigError("unknown policy '" + p + "'");
    for (const auto* split : {&train, &test})
      for (auto i : *split)
        if (i >= datasets.size()) throw ConfigError("split index " + std::to_string(i) + " out of range");
    for (auto i : train)
      if (std::find(test.begin(), test.end(), i) != test.end())
        throw ConfigError("dataset '" + datasets[i].name + "' is in both train and test splits");
    if ((uses("bc") || uses("qlearn")) && train.empty()) throw ConfigError("learners in roster but no training datasets");
    for (const auto& d : datasets) {
      if (d.path.has_value() == d.synthetic.has_value()) throw ConfigError("dataset '" + d.name + "' needs exactly one source");
      if (d.synthetic) {
        try {
          d.synthetic->validate();
        } catch (const ParameterError& e) {
          throw ConfigError("dataset '" + d.name + "': " + e.what());
        }
      }
    }
  }
};

/// `count` synthetic datasets seeded seed, seed+1, ...; the first half trains, the rest test.
inline void set_synthetic_datasets(BenchConfig& config, std::size_t count, std::uint64_t seed, const GenParams& base) {
  config.datasets.clear();
  config.train.clear();
  config.test.clear();
  for (std::size_t i = 0; i < count; ++i) {
    GenParams p = base;
    p.seed = seed + i;
    config.datasets.push_back({"syn" + std::to_string(p.seed), std::nullopt, p});
    (i < count / 2 ? config.train : config.test).push_back(i);
  }
}

inline BenchConfig default_bench_config() {
  BenchConfig c;
  c.roster = known_policies();
  GenParams g;
  g.length = kDeskScaleLength;
  set_synthetic_datasets(c, 20, 1000, g);
  return c;
}

/// Replaces every seed in the config with one derived from `seed`.
inline void reseed(BenchConfig& config, std::uint64_t seed) {
  std::uint64_t k = 0;
  for (auto& d : config.datasets)
    if (d.synthetic) d.synthetic->seed = seed + k++;
  config.qlearn.seed = seed;
  config.bc.train.seed = seed;
  config.bc.demo_seed = seed + 1;
  config.bc.policy_seed = seed + 2;
  config.random_seed = seed + 3;
}

inline void set_full_scale(BenchConfig& config) {
  for (auto& d : config.datasets)
    if (d.synthetic) d.synthetic->length = kFullScaleLength;
}

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  std::optional<ConfigReader> child(const char* key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return ConfigReader(*it, where_ + "." + key);
  }

  const json* raw(const char* key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) throw ConfigError("unknown key " + where_ + "." + k);
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

inline void read_gen_params(ConfigReader& r, GenParams& g) {
  r.get("height", g.height);
  r.get("length", g.length);
  r.get("pixel_size_km", g.pixel_size_km);
  r.get("prevalence", g.prevalence);
  r.get("blob_scale", g.blob_scale);
  r.get("clustering", g.clustering);
  r.get("system_length", g.system_length);
}

inline BcMode parse_bc_mode(const std::string& s) {
  if (s == "stochastic") return BcMode::Stochastic;
  if (s == "deterministic") return BcMode::Deterministic;
  throw ConfigError("bc.mode must be 'stochastic' or 'deterministic'");
}

inline TieBreak parse_tie(const std::string& s) {
  if (s == "off") return TieBreak::Off;
  if (s == "sample") return TieBreak::Sample;
  throw ConfigError("bc.demo_tie must be 'off' or 'sample'");
}

inline void read_threshold(ConfigReader& r, ThresholdRule& t) {
  r.get("high", t.need_high);
  r.get("mid", t.need_mid);
  r.get("low", t.need_low);
  r.finish();
}

}  // namespace detail

/// Reads a JSON config tree on top of the defaults. Relative dataset paths resolve against `base_dir`.
inline BenchConfig parse_bench_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::ConfigReader;
  BenchConfig c = default_bench_config();
  ConfigReader r(j, "config");

  std::string scenario = to_string(c.scenario);
  r.get("scenario", scenario);
  try {
    c.scenario = parse_scenario(scenario);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (auto g = r.child("geometry")) {
    g->get("altitude_km", c.geometry.altitude_km);
    g->get("radar_half_angle_deg", c.geometry.radar_half_angle_deg);
    g->get("lookahead_half_angle_deg", c.geometry.lookahead_half_angle_deg);
    g->get("pixel_size_km", c.geometry.pixel_size_km);
    g->finish();
  }
  if (auto e = r.child("energy")) {
    e->get("sample_discharge", c.energy.sample_discharge);
    e->get("recharge_per_step", c.energy.recharge_per_step);
    e->get("soc_max", c.energy.soc_max);
    e->finish();
  }
  if (auto w = r.child("rewards")) {
    w->get("low", c.rewards.reward_low);
    w->get("mid", c.rewards.reward_mid);
    w->get("high", c.rewards.reward_high);
    w->finish();
  }

  if (auto d = r.child("datasets")) {
    c.datasets.clear();
    c.train.clear();
    c.test.clear();
    if (auto s = d->child("synthetic")) {
      std::size_t count = 20;
      std::uint64_t seed = 1000;
      GenParams g;
      g.length = kDeskScaleLength;
      s->get("count", count);
      s->get("seed", seed);
      detail::read_gen_params(*s, g);
      s->finish();
      set_synthetic_datasets(c, count, seed, g);
    }
    std::vector<std::string> paths;
    d->get("paths", paths);
    for (const auto& p : paths) {
      std::filesystem::path full = p;
      if (full.is_relative() && !base_dir.empty()) full = base_dir / full;
      c.datasets.push_back({std::filesystem::path(p).stem().string(), full, std::nullopt});
    }
    d->finish();
    if (!paths.empty()) {
      // Files join the default split after any synthetic sets: first half trains.
      const std::size_t first = c.datasets.size() - paths.size();
      for (std::size_t i = 0; i < paths.size(); ++i) (i < paths.size() / 2 ? c.train : c.test).push_back(first + i);
    }
  }
  if (auto s = r.child("split")) {
    c.train.clear();
    c.test.clear();
    s->get("train", c.train);
    s->get("test", c.test);
    s->finish();
  }

  r.get("roster", c.roster);
  if (auto q = r.child("qlearn")) {
    q->get("alpha", c.qlearn.alpha);
    q->get("gamma", c.qlearn.gamma);
    q->get("sweeps", c.qlearn.sweeps);
    q->get("seed", c.qlearn.seed);
    q->finish();
  }
  if (auto b = r.child("bc")) {
    std::string mode = c.bc.mode == BcMode::Stochastic ? "stochastic" : "deterministic";
    std::string tie = c.bc.demo_tie == TieBreak::Off ? "off" : "sample";
    std::string loss = c.bc.train.loss == LossKind::CrossEntropy ? "cross_entropy" : "mean_squared";
    b->get("keep_prob", c.bc.train.keep_prob);
    b->get("learning_rate", c.bc.train.learning_rate);
    b->get("batch_size", c.bc.train.batch_size);
    b->get("max_epochs", c.bc.train.max_epochs);
    b->get("patience", c.bc.train.patience);
    b->get("validation_fraction", c.bc.train.validation_fraction);
    b->get("seed", c.bc.train.seed);
    b->get("loss", loss);
    b->get("mode", mode);
    b->get("demo_tie", tie);
    b->get("balance", c.bc.balance);
    b->get("demo_seed", c.bc.demo_seed);
    b->get("policy_seed", c.bc.policy_seed);
    b->finish();
    c.bc.mode = detail::parse_bc_mode(mode);
    c.bc.demo_tie = detail::parse_tie(tie);
    if (loss == "cross_entropy") c.bc.train.loss = LossKind::CrossEntropy;
    else if (loss == "mean_squared") c.bc.train.loss = LossKind::MeanSquared;
    else throw ConfigError("bc.loss must be 'cross_entropy' or 'mean_squared'");
  }
  if (auto t = r.child("threshold")) detail::read_threshold(*t, c.threshold);
  if (auto t = r.child("window_reserve")) detail::read_threshold(*t, c.window_reserve);
  if (auto p = r.child("random")) {
    p->get("p", c.random_p);
    p->get("seed", c.random_seed);
    p->finish();
  }
  r.get("soc0", c.soc0);
  std::string out = c.out_dir.string();
  r.get("out", out);
  c.out_dir = out;
  if (const auto* cache = r.raw("cache_dir")) {
    if (!cache->is_string()) throw ConfigError("config.cache_dir must be a string");
    c.cache_dir = cache->get<std::string>();
  }
  double cap_mb = static_cast<double>(c.dp_memory_cap_bytes) / (1024.0 * 1024.0);
  r.get("dp_memory_cap_mb", cap_mb);
  if (!(cap_mb > 0.0)) throw ConfigError("dp_memory_cap_mb must be positive");
  c.dp_memory_cap_bytes = static_cast<std::size_t>(cap_mb * 1024.0 * 1024.0);
  r.finish();
  c.validate();
  return c;
}

inline BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_bench_config(j, path.parent_path());
}

/// Loads or generates every dataset in config order.
inline std::vector<EnvStrip> resolve_datasets(const BenchConfig& config) {
  std::vector<EnvStrip> out;
  out.reserve(config.datasets.size());
  for (const auto& d : config.datasets) {
    if (d.path) {
      if (!std::filesystem::exists(*d.path)) throw DataError("dataset '" + d.name + "' not found: " + d.path->string());
      out.push_back(load_dataset(*d.path));
    } else {
      out.push_back(generate_synthetic(*d.synthetic));
    }
  }
  return out;
}

/// Hash of everything besides the strip that a DP table depends on.
inline std::uint64_t model_fingerprint(const SimModel& m) {
  io::Writer w;
  w.u32(static_cast<std::uint32_t>(m.sensor.radar_radius()));
  w.u32(static_cast<std::uint32_t>(m.sensor.lookahead_len()));
  w.u32(static_cast<std::uint32_t>(m.energy.sample_discharge));
  w.u32(static_cast<std::uint32_t>(m.energy.recharge_per_step));
  w.u32(static_cast<std::uint32_t>(m.energy.soc_max));
  for (auto c : kRewardClasses) w.f32(static_cast<float>(m.rewards.value(c)));
  return io::fnv1a(w.bytes());
}

/// DP tables keyed by strip hash and model, memoised in memory and optionally on disk.
class DpCache {
 public:
  DpCache(SimModel model, std::optional<std::filesystem::path> dir, std::size_t cap_bytes)
      : model_(std::move(model)), dir_(std::move(dir)), cap_(cap_bytes), fingerprint_(model_fingerprint(model_)) {}

  const DpTable& get(const EnvStrip& strip, const std::string& name) {
    const std::uint64_t key = strip.hash();
    if (auto it = tables_.find(key); it != tables_.end()) return it->second;
    std::optional<std::filesystem::path> file;
    if (dir_) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "dp_%016llx_%016llx.dtd", static_cast<unsigned long long>(key),
                    static_cast<unsigned long long>(fingerprint_));
      file = *dir_ / buf;
      if (std::filesystem::exists(*file)) {
        try {
          auto t = load_dp_table(*file);
          if (t.strip_hash() == key && t.length() == strip.length() && t.soc_levels() == model_.energy.levels())
            return tables_.emplace(key, std::move(t)).first->second;
        } catch (const FormatError&) {
          // Stale or damaged cache entry: rebuild below.
        }
      }
    }
    DpTable table;
    try {
      table = build_dp_table(strip, model_, {cap_});
    } catch (const ResourceError& e) {
      throw ResourceError("dataset '" + name + "': " + e.what());
    }
    if (file) {
      std::filesystem::create_directories(*dir_);
      save_dp_table(table, *file);
    }
    return tables_.emplace(key, std::move(table)).first->second;
  }

 private:
  SimModel model_;
  std::optional<std::filesystem::path> dir_;
  std::size_t cap_;
  std::uint64_t fingerprint_;
  std::map<std::uint64_t, DpTable> tables_;
};

/// Learned artefacts shared by every evaluation in a run.
struct Learners {
  std::optional<QTable> q;
  std::optional<Mlp> bc;
  std::size_t demonstrations = 0;
};

/// Trains the rostered learners on the given strips. A non-zero `horizon` limits training to t <= horizon.
inline Learners train_learners(const BenchConfig& config, std::span<const EnvStrip> strips,
                               std::span<const std::string> names, DpCache& cache, std::size_t horizon = 0) {
  const SimModel model = config.model();
  Learners out;
  if (config.uses("qlearn")) out.q = train_dp_sweep(strips, model, config.qlearn, horizon);
  if (config.uses("bc")) {
    DemoSet demos;
    for (std::size_t i = 0; i < strips.size(); ++i) {
      const auto& table = cache.get(strips[i], names[i]);
      demos.append(collect_demonstrations(table, strips[i], model, config.bc.train.keep_prob, config.bc.demo_seed + i,
                                          config.bc.demo_tie, horizon));
    }
    if (config.bc.balance) demos = balance_dataset(demos, config.bc.demo_seed);
    if (demos.size() < 2) throw DataError("too few demonstrations to train behavioural cloning");
    out.demonstrations = demos.size();
    out.bc = train_bc(demos, config.bc.train).model;
  }
  return out;
}

inline std::unique_ptr<Policy> make_policy(const std::string& name, const BenchConfig& config, const Learners& learners,
                                           const DpTable* table, const EnvStrip* strip) {
  if (name == "random") return std::make_unique<RandomPolicy>(config.random_p, config.random_seed, config.energy);
  if (name == "greedy_nadir") return std::make_unique<GreedyNadir>(config.threshold, config.energy);
  if (name == "greedy_lateral") return std::make_unique<GreedyLateral>(config.threshold, config.energy);
  if (name == "greedy_radar") return std::make_unique<GreedyRadar>(config.threshold, config.energy);
  if (name == "greedy_window")
    return std::make_unique<GreedyWindow>(config.energy, WindowRanking::Reach, config.window_reserve);
  if (name == "qlearn") {
    if (!learners.q) throw ConfigError("qlearn requested but no Q-table was trained");
    return std::make_unique<QPolicy>(*learners.q, config.energy);
  }
  if (name == "bc") {
    if (!learners.bc) throw ConfigError("bc requested but no model was trained");
    return std::make_unique<BcPolicy>(*learners.bc, config.bc.mode, config.bc.policy_seed, config.energy);
  }
  if (name == "dp") {
    if (!table || !strip) throw ConfigError("dp policy needs a table");
    return std::make_unique<ExpertPolicy>(*table, *strip);
  }
  throw ConfigError("unknown policy '" + name + "'");
}

struct ReportRow {
  std::string policy;
  std::string dataset;
  double total_reward = 0.0;
  double dp_reward = 0.0;
  double percent_of_dp = 0.0;
  std::array<double, 3> class_fraction{};  // Low, Mid, High sample-time fractions
  double off_fraction = 0.0;
  std::size_t violations = 0;
  double latency_us = 0.0;  // mean per decide(); not part of the reproducible report

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct PolicySummary {
  std::string policy;
  double mean_percent = 0.0;
  double min_percent = 0.0;
  double max_percent = 0.0;
  std::array<double, 3> class_fraction{};
  double off_fraction = 0.0;
  std::size_t violations = 0;
  double latency_us = 0.0;
};

struct BenchReport {
  Scenario scenario = Scenario::CloudAvoidance;
  std::vector<std::string> roster;
  std::vector<ReportRow> rows;

  std::vector<PolicySummary> summary() const {
    std::vector<PolicySummary> out;
    for (const auto& p : roster) {
      PolicySummary s{p};
      std::size_t n = 0;
      s.min_percent = std::numeric_limits<double>::infinity();
      s.max_percent = -std::numeric_limits<double>::infinity();
      for (const auto& r : rows) {
        if (r.policy != p) continue;
        ++n;
        s.mean_percent += r.percent_of_dp;
        s.min_percent = std::min(s.min_percent, r.percent_of_dp);
        s.max_percent = std::max(s.max_percent, r.percent_of_dp);
        for (std::size_t c = 0; c < 3; ++c) s.class_fraction[c] += r.class_fraction[c];
        s.off_fraction += r.off_fraction;
        s.violations += r.violations;
        s.latency_us += r.latency_us;
      }
      if (n == 0) continue;
      const double k = 1.0 / static_cast<double>(n);
      s.mean_percent *= k;
      for (auto& f : s.class_fraction) f *= k;
      s.off_fraction *= k;
      s.latency_us *= k;
      out.push_back(s);
    }
    return out;
  }

  std::optional<PolicySummary> find(const std::string& policy) const {
    for (const auto& s : summary())
      if (s.policy == policy) return s;
    return std::nullopt;
  }
};

inline ReportRow evaluate_policy(Policy& policy, const EnvStrip& strip, const SimModel& model, int soc0, double dp_reward,
                                 const std::string& dataset) {
  const auto log = run_episode(strip, model, policy, soc0, {false, true});
  ReportRow row{policy.name(), dataset, log.total_reward, dp_reward};
  row.percent_of_dp = dp_reward > 0.0 ? 100.0 * log.total_reward / dp_reward : 100.0;
  for (auto c : kRewardClasses) row.class_fraction[index_of(c)] = log.class_fraction(c);
  row.off_fraction = log.off_fraction();
  row.violations = log.violations;
  row.latency_us = log.length() ? std::chrono::duration<double, std::micro>(log.decide_time).count() /
                                      static_cast<double>(log.length())
                                : 0.0;
  return row;
}

namespace detail {

inline std::vector<std::string> subset_names(const BenchConfig& config, std::span<const std::size_t> idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(config.datasets[i].name);
  return out;
}

inline std::vector<EnvStrip> subset(const std::vector<EnvStrip>& all, std::span<const std::size_t> idx) {
  std::vector<EnvStrip> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace detail

/// Trains learners on the training split, then evaluates every rostered policy on every test dataset.
inline BenchReport run_benchmark(const BenchConfig& config) {
  config.validate();
  const SimModel model = config.model();
  const auto all = resolve_datasets(config);
  DpCache cache(model, config.cache_dir, config.dp_memory_cap_bytes);

  const auto train = detail::subset(all, config.train);
  const auto train_names = detail::subset_names(config, config.train);
  const Learners learners = train_learners(config, train, train_names, cache);

  BenchReport report{config.scenario, config.roster, {}};
  for (auto i : config.test) {
    const auto& strip = all[i];
    const auto& name = config.datasets[i].name;
    const auto& table = cache.get(strip, name);
    const double dp_reward = table.value(1, config.soc0);
    for (const auto& p : config.roster) {
      auto policy = make_policy(p, config, learners, &table, &strip);
      report.rows.push_back(evaluate_policy(*policy, strip, model, config.soc0, dp_reward, name));
      report.rows.back().policy = p;
    }
  }
  return report;
}

struct CurvePoint {
  std::string learner;
  double fraction = 0.0;
  std::size_t horizon = 0;
  double min_percent = 0.0;
  double mean_percent = 0.0;
  double max_percent = 0.0;
};

struct CurveReport {
  std::vector<CurvePoint> points;
};

/// Percent-of-DP of each rostered learner trained on the first ceil(f * T) columns of every
/// training strip, for each fraction f. Behavioural cloning is retrained `repeats` times with
/// shifted seeds (Q sweeps are deterministic and run once); mean is over test datasets and
/// repeats, min/max over every evaluation.
inline CurveReport training_curve(const BenchConfig& config, std::span<const double> fractions,
                                  std::size_t repeats = 5) {
  config.validate();
  if (repeats == 0) throw ParameterError("repeats must be positive");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ParameterError("training fractions must lie in (0, 1]");
  const SimModel model = config.model();
  const auto all = resolve_datasets(config);
  DpCache cache(model, config.cache_dir, config.dp_memory_cap_bytes);
  const auto train = detail::subset(all, config.train);
  const auto train_names = detail::subset_names(config, config.train);
  std::size_t longest = 0;
  for (const auto& s : train) longest = std::max(longest, s.length());

  std::vector<std::string> learners;
  for (const auto& p : config.roster)
    if (p == "qlearn" || p == "bc") learners.push_back(p);

  CurveReport out;
  for (double f : fractions) {
    const auto horizon = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(f * static_cast<double>(longest))));
    for (const auto& name : learners) {
      CurvePoint pt{name, f, horizon, std::numeric_limits<double>::infinity(), 0.0,
                    -std::numeric_limits<double>::infinity()};
      std::size_t evaluations = 0;
      const std::size_t runs = name == "bc" ? repeats : 1;
      for (std::size_t r = 0; r < runs; ++r) {
        BenchConfig cfg = config;
        cfg.roster = {name};
        cfg.bc.train.seed += r;
        cfg.bc.demo_seed += r;
        const Learners trained = train_learners(cfg, train, train_names, cache, f >= 1.0 ? 0 : horizon);
        for (auto i : config.test) {
          const auto& table = cache.get(all[i], config.datasets[i].name);
          auto policy = make_policy(name, cfg, trained, &table, &all[i]);
          const auto row = evaluate_policy(*policy, all[i], model, config.soc0, table.value(1, config.soc0), "");
          pt.min_percent = std::min(pt.min_percent, row.percent_of_dp);
          pt.max_percent = std::max(pt.max_percent, row.percent_of_dp);
          pt.mean_percent += row.percent_of_dp;
          ++evaluations;
        }
      }
      if (evaluations == 0) pt.min_percent = pt.max_percent = 0.0;
      else pt.mean_percent /= static_cast<double>(evaluations);
      out.points.push_back(pt);
    }
  }
  return out;
}

struct LatencyStats {
  std::size_t steps = 0;
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
};

/// Wall time of decide() alone over `n_steps` steps from soc0, wrapping around the strip.
inline LatencyStats measure_latency(Policy& policy, const EnvStrip& strip, const SimModel& model, std::size_t n_steps,
                                    int soc0 = 100) {
  if (n_steps == 0) throw ParameterError("n_steps must be positive");
  using clock = std::chrono::steady_clock;
  policy.reset();
  std::vector<double> us;
  us.reserve(n_steps);
  SatState state{1, soc0};
  for (std::size_t i = 0; i < n_steps; ++i) {
    state.t = i % strip.length() + 1;
    const Observation obs(strip, model.sensor, state);
    const auto t0 = clock::now();
    Action a = policy.decide(obs);
    const auto t1 = clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    if (a.is_sample() && !model.energy.can_sample(state.soc)) a = Action::off();
    state.soc = step(strip, model, state, a).next.soc;
  }
  LatencyStats s{n_steps};
  for (double v : us) s.mean_us += v;
  s.mean_us /= static_cast<double>(n_steps);
  auto pct = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n_steps))) - 1;
    std::nth_element(us.begin(), us.begin() + static_cast<std::ptrdiff_t>(k), us.end());
    return us[k];
  };
  s.p50_us = pct(0.50);
  s.p99_us = pct(0.99);
  return s;
}

enum class ReportFormat { Csv, Markdown };

namespace detail {

inline std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline const std::string kReportHeader =
    "policy,dataset,total_reward,dp_reward,percent_of_dp,frac_low,frac_mid,frac_high,off_fraction,violations";

}  // namespace detail

inline std::string report_csv(const BenchReport& report) {
  using detail::fmt_exact;
  std::string s = detail::kReportHeader + "\n";
  for (const auto& r : report.rows) {
    s += r.policy + "," + r.dataset + "," + fmt_exact(r.total_reward) + "," + fmt_exact(r.dp_reward) + "," +
         fmt_exact(r.percent_of_dp) + "," + fmt_exact(r.class_fraction[0]) + "," + fmt_exact(r.class_fraction[1]) + "," +
         fmt_exact(r.class_fraction[2]) + "," + fmt_exact(r.off_fraction) + "," + std::to_string(r.violations) + "\n";
  }
  return s;
}

inline std::string latency_csv(const BenchReport& report) {
  std::string s = "policy,dataset,mean_decide_us\n";
  for (const auto& r : report.rows) s += r.policy + "," + r.dataset + "," + detail::fmt_fixed(r.latency_us, 4) + "\n";
  return s;
}

/// Rows of a CSV written by report_csv, latency left at zero.
inline std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != detail::kReportHeader) throw DataError("report CSV header mismatch");
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw DataError("report CSV line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    ReportRow r;
    r.policy = f[0];
    r.dataset = f[1];
    r.total_reward = std::stod(f[2]);
    r.dp_reward = std::stod(f[3]);
    r.percent_of_dp = std::stod(f[4]);
    for (std::size_t c = 0; c < 3; ++c) r.class_fraction[c] = std::stod(f[5 + c]);
    r.off_fraction = std::stod(f[8]);
    r.violations = std::stoull(f[9]);
    rows.push_back(r);
  }
  return rows;
}

/// Sampling-time table (per class plus off) and percent-of-DP table, one column per policy.
inline std::string report_markdown(const BenchReport& report) {
  const auto summary = report.summary();
  const auto labels = class_labels(report.scenario);
  std::string s = "## Percentage of time spent sampling\n\n| |";
  for (const auto& p : summary) s += " " + p.policy + " |";
  s += "\n|---|";
  for (std::size_t i = 0; i < summary.size(); ++i) s += "---|";
  s += "\n";
  for (std::size_t c = 0; c < 3; ++c) {
    s += std::string("| ") + labels[c] + " |";
    for (const auto& p : summary) s += " " + detail::fmt_fixed(100.0 * p.class_fraction[c], 2) + "% |";
    s += "\n";
  }
  s += "| off |";
  for (const auto& p : summary) s += " " + detail::fmt_fixed(100.0 * p.off_fraction, 2) + "% |";
  s += "\n\n## Average percent of total possible reward\n\n| policy | mean | min | max |\n|---|---|---|---|\n";
  for (const auto& p : summary)
    s += "| " + p.policy + " | " + detail::fmt_fixed(p.mean_percent, 2) + "% | " + detail::fmt_fixed(p.min_percent, 2) +
         "% | " + detail::fmt_fixed(p.max_percent, 2) + "% |\n";
  return s;
}

/// Writes report.csv + latency.csv, or report.md, into `dir`. Returns the files written.
inline std::vector<std::filesystem::path> emit_report(const BenchReport& report, ReportFormat format,
                                                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw IoError("output directory '" + dir.string() + "' is not usable");
  if (format == ReportFormat::Csv) {
    detail::write_text(dir / "report.csv", report_csv(report));
    detail::write_text(dir / "latency.csv", latency_csv(report));
    return {dir / "report.csv", dir / "latency.csv"};
  }
  detail::write_text(dir / "report.md", report_markdown(report));
  return {dir / "report.md"};
}

inline std::string curve_csv(const CurveReport& curve) {
  std::string s = "learner,fraction,horizon,min_percent,mean_percent,max_percent\n";
  for (const auto& p : curve.points)
    s += p.learner + "," + detail::fmt_exact(p.fraction) + "," + std::to_string(p.horizon) + "," +
         detail::fmt_exact(p.min_percent) + "," + detail::fmt_exact(p.mean_percent) + "," +
         detail::fmt_exact(p.max_percent) + "\n";
  return s;
}

}  // namespace dtarget
