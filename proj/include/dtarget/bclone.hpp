#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dporacle.hpp"
#include "mlp.hpp"
#include "satsim.hpp"

namespace dtarget {

inline constexpr std::size_t kBcFeatureCount = 13;

/// Continuous state, every entry in [0, 1]:
///   [0]      soc / soc_max
///   [1..3]   fraction of radar-disc pixels in Low, Mid, High
///   [4..6]   fraction of lookahead pixels in Low, Mid, High (0 when the window is empty)
///   [7..9]   distance from nadir to the nearest radar pixel of each class / radar radius (1 if absent)
///   [10..12] (first lookahead column holding each class - 1) / lookahead length (1 if absent)
using BcFeatures = std::array<double, kBcFeatureCount>;

namespace detail {

/// Features [1..12], which do not depend on SOC.
inline std::array<double, 12> scene_features(const Observation& obs) {
  std::array<double, 12> f{};
  std::array<std::size_t, 3> radar{};
  std::array<int, 3> nearest2{-1, -1, -1};
  std::size_t radar_total = 0;
  obs.for_each_radar_cell([&](const RadarOffset& o, RewardClass c) {
    const auto k = index_of(c);
    ++radar[k];
    ++radar_total;
    if (nearest2[k] < 0) nearest2[k] = o.dist2;  // offsets arrive nearest-first
  });

  std::array<std::size_t, 3> look{};
  std::array<std::size_t, 3> first_col{0, 0, 0};
  const std::size_t cols = obs.lookahead_columns();
  const std::size_t rows = obs.lookahead_rows();
  for (std::size_t k = 1; k <= cols; ++k) {
    for (std::size_t row = 0; row < rows; ++row) {
      const auto c = index_of(obs.lookahead(k, row));
      ++look[c];
      if (first_col[c] == 0) first_col[c] = k;
    }
  }
  const double look_total = static_cast<double>(cols * rows);
  const double radius = obs.sensor().radar_radius();
  const double span_len = obs.sensor().lookahead_len();

  for (std::size_t c = 0; c < 3; ++c) {
    f[c] = radar_total ? static_cast<double>(radar[c]) / static_cast<double>(radar_total) : 0.0;
    f[3 + c] = look_total > 0 ? static_cast<double>(look[c]) / look_total : 0.0;
    if (nearest2[c] < 0) f[6 + c] = 1.0;
    else f[6 + c] = radius > 0 ? std::min(1.0, std::sqrt(static_cast<double>(nearest2[c])) / radius) : 0.0;
    f[9 + c] = first_col[c] == 0 || span_len <= 0 ? 1.0 : static_cast<double>(first_col[c] - 1) / span_len;
  }
  return f;
}

inline BcFeatures with_soc(const std::array<double, 12>& scene, int soc, int soc_max) {
  BcFeatures x{};
  x[0] = static_cast<double>(soc) / static_cast<double>(soc_max);
  std::copy(scene.begin(), scene.end(), x.begin() + 1);
  return x;
}

}  // namespace detail

inline BcFeatures featurize_bc(const Observation& obs, int soc_max = 100) {
  return detail::with_soc(detail::scene_features(obs), obs.soc(), soc_max);
}

struct Demo {
  BcFeatures x;
  std::uint8_t action;  // 1 = Sample
  std::uint64_t strip_hash;
  std::uint32_t t;
  std::uint16_t soc;
};

struct DemoSet {
  std::vector<Demo> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  void append(const DemoSet& other) { items.insert(items.end(), other.items.begin(), other.items.end()); }
};

/// For each (t, soc), keep the expert's state-action pair with probability `keep_prob`.
inline DemoSet collect_demonstrations(const DpTable& table, const EnvStrip& strip, const SimModel& model,
                                      double keep_prob, std::uint64_t seed, TieBreak tie = TieBreak::Off,
                                      std::size_t max_t = 0) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ParameterError("keep_prob must lie in (0, 1]");
  if (table.strip_hash() != strip.hash() || table.length() != strip.length())
    throw DataError("DP table does not belong to this strip");
  const std::size_t T = max_t == 0 ? strip.length() : std::min(max_t, strip.length());
  const int levels = table.soc_levels();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DemoSet out;
  out.items.reserve(static_cast<std::size_t>(keep_prob * static_cast<double>(T * levels) * 1.1) + 16);
  const std::uint64_t hash = strip.hash();

  for (std::size_t t = 1; t <= T; ++t) {
    std::optional<std::array<double, 12>> scene;
    for (int soc = 0; soc < levels; ++soc) {
      if (unit(rng) >= keep_prob) continue;
      if (!scene) scene = detail::scene_features(Observation(strip, model.sensor, {t, soc}));
      const auto a = expert_action(table, t, soc, tie);
      out.items.push_back({detail::with_soc(*scene, soc, model.energy.soc_max),
                           static_cast<std::uint8_t>(a == ActionKind::Sample), hash, static_cast<std::uint32_t>(t),
                           static_cast<std::uint16_t>(soc)});
    }
  }
  return out;
}

/// Highest class present in the radar disc of a demo.
inline RewardClass dominant_radar_class(const Demo& d) {
  if (d.x[3] > 0.0) return RewardClass::High;
  if (d.x[2] > 0.0) return RewardClass::Mid;
  return RewardClass::Low;
}

/// Downsamples each dominant-class group to the smallest non-empty group, then shuffles.
/// Empty groups are reported through `warnings` and skipped.
inline DemoSet balance_dataset(const DemoSet& demos, std::uint64_t seed, std::vector<std::string>* warnings = nullptr) {
  std::array<std::vector<std::size_t>, 3> groups;
  for (std::size_t i = 0; i < demos.items.size(); ++i) groups[index_of(dominant_radar_class(demos.items[i]))].push_back(i);
  std::mt19937_64 rng(seed);
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (RewardClass c : kRewardClasses) {
    const auto& g = groups[index_of(c)];
    if (g.empty()) {
      if (warnings) warnings->push_back(std::string("no demonstrations with dominant class '") + to_string(c) + "'");
      continue;
    }
    smallest = std::min(smallest, g.size());
  }
  DemoSet out;
  if (smallest == std::numeric_limits<std::size_t>::max()) return out;
  std::vector<std::size_t> picked;
  for (auto& g : groups) {
    if (g.empty()) continue;
    std::shuffle(g.begin(), g.end(), rng);
    picked.insert(picked.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(smallest));
  }
  std::shuffle(picked.begin(), picked.end(), rng);
  out.items.reserve(picked.size());
  for (auto i : picked) out.items.push_back(demos.items[i]);
  return out;
}

struct TrainParams {
  double keep_prob = 0.01;
  LossKind loss = LossKind::CrossEntropy;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  int max_restarts = 4;

  void validate() const {
    if (max_restarts < 0) throw ParameterError("max_restarts must be non-negative");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ParameterError("keep_prob must lie in (0, 1]");
    if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (batch_size == 0) throw ParameterError("batch size must be positive");
    if (max_epochs <= 0 || patience <= 0) throw ParameterError("epochs and patience must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ParameterError("validation fraction must lie in [0, 1)");
  }
};

struct BcTrainResult {
  Mlp model;
  std::vector<double> train_loss;  // mean minibatch loss per epoch
  std::vector<double> val_loss;    // validation loss after each epoch
  int best_epoch = 0;
  int restarts = 0;  // fresh initialisations after a constant-output result
};

/// Minibatch Adam on the demonstrations with a seeded train/validation split; returns the
/// parameters with the lowest validation loss.
inline BcTrainResult train_bc(const DemoSet& demos, const TrainParams& params,
                              std::span<const std::size_t> architecture = kBcArchitecture) {
  params.validate();
  if (demos.size() < 2) throw ParameterError("need at least two demonstrations");
  std::mt19937_64 rng(params.seed);

  std::vector<std::size_t> order(demos.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::min(demos.size() - 1,
                              static_cast<std::size_t>(params.validation_fraction * static_cast<double>(demos.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  auto view = [&](const std::vector<std::size_t>& idx, std::vector<std::span<const double>>& xs, std::vector<double>& ys) {
    xs.clear();
    ys.clear();
    for (auto i : idx) {
      xs.emplace_back(demos.items[i].x);
      ys.push_back(demos.items[i].action);
    }
  };
  std::vector<std::span<const double>> val_x;
  std::vector<double> val_y;
  view(val, val_x, val_y);

  if (architecture.empty() || architecture.front() != kBcFeatureCount)
    throw ParameterError("architecture input must be 13 features");

  auto attempt = [&](std::uint64_t init_seed) {
    BcTrainResult result{Mlp::initialized(architecture, init_seed), {}, {}, 0};
    Mlp model = result.model;
    Adam adam(model.parameter_count(), params.learning_rate);
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> batch;
    std::vector<std::span<const double>> bx;
    std::vector<double> by;
    for (int epoch = 1; epoch <= params.max_epochs; ++epoch) {
      std::shuffle(train.begin(), train.end(), rng);
      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < train.size(); start += params.batch_size) {
        const std::size_t end = std::min(train.size(), start + params.batch_size);
        batch.assign(train.begin() + static_cast<std::ptrdiff_t>(start), train.begin() + static_cast<std::ptrdiff_t>(end));
        view(batch, bx, by);
        const auto g = mlp_grad(model, bx, by, params.loss);
        adam.step(model.params(), g.grad);
        epoch_loss += g.loss;
        ++batches;
      }
      result.train_loss.push_back(epoch_loss / static_cast<double>(batches));
      if (!std::isfinite(result.train_loss.back())) throw NumericError("training diverged at epoch " + std::to_string(epoch));

      // Without a validation split the training loss drives model selection.
      const double v = val.empty() ? result.train_loss.back() : mlp_loss(model, val_x, val_y, params.loss);
      result.val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        result.model = model;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= params.patience) {
        break;
      }
    }
    return result;
  };

  // A draw whose ReLUs are all dead from the start trains to a constant output; redraw it.
  auto constant = [&](const Mlp& m) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto i : train) {
      const double z = m.logit(demos.items[i].x);
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
    return hi - lo < 1e-9;
  };
  bool mixed = false;
  for (const auto& d : demos.items) mixed = mixed || d.action != demos.items.front().action;

  BcTrainResult result = attempt(rng());
  while (mixed && result.restarts < params.max_restarts && constant(result.model)) {
    const int restarts = result.restarts + 1;
    result = attempt(rng());
    result.restarts = restarts;
  }
  return result;
}

/// Fraction of demos where the thresholded model output matches the expert action.
inline double expert_agreement(const Mlp& model, const DemoSet& demos) {
  if (demos.empty()) return 0.0;
  std::size_t agree = 0;
  for (const auto& d : demos.items) agree += (model.forward(d.x) >= 0.5) == (d.action == 1);
  return static_cast<double>(agree) / static_cast<double>(demos.size());
}

enum class BcMode { Stochastic, Deterministic };

/// Network-driven policy; placement by best_target. Stochastic mode samples with the predicted probability.
class BcPolicy final : public Policy {
 public:
  BcPolicy(const Mlp& model, BcMode mode = BcMode::Stochastic, std::uint64_t seed = 0, EnergyModel energy = {})
      : model_(&model), mode_(mode), seed_(seed), energy_(energy), rng_(seed) {}

  Action decide(const Observation& obs) override {
    if (!energy_.can_sample(obs.soc())) return Action::off();
    const double p = model_->forward(featurize_bc(obs, energy_.soc_max));
    const bool fire = mode_ == BcMode::Stochastic ? unit_(rng_) < p : p >= 0.5;
    return fire ? Action::sample() : Action::off();
  }

  std::string name() const override { return "bc"; }
  void reset() override { rng_.seed(seed_); }

 private:
  const Mlp* model_;
  BcMode mode_;
  std::uint64_t seed_;
  EnergyModel energy_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

inline BcPolicy bc_policy(const Mlp& model, BcMode mode = BcMode::Stochastic, std::uint64_t seed = 0,
                          EnergyModel energy = {}) {
  return BcPolicy(model, mode, seed, energy);
}

}  // namespace dtarget
