#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "errors.hpp"

namespace dtarget {

/// Scientific value tier of a ground pixel. Ordered: a higher tier is always worth more.
enum class RewardClass : std::uint8_t { Low = 0, Mid = 1, High = 2 };

inline constexpr std::array<RewardClass, 3> kRewardClasses{RewardClass::Low, RewardClass::Mid, RewardClass::High};

constexpr std::size_t index_of(RewardClass c) { return static_cast<std::size_t>(c); }

inline const char* to_string(RewardClass c) {
  switch (c) {
    case RewardClass::Low: return "low";
    case RewardClass::Mid: return "mid";
    case RewardClass::High: return "high";
  }
  return "?";
}

enum class Scenario { CloudAvoidance, StormHunting };

/// Human labels for the three tiers; mechanics are identical across scenarios.
inline std::array<const char*, 3> class_labels(Scenario s) {
  if (s == Scenario::StormHunting) return {"no storm", "rainy anvil", "convective core"};
  return {"cloud", "mid-cloud", "clear"};
}

inline const char* to_string(Scenario s) {
  return s == Scenario::StormHunting ? "storm_hunting" : "cloud_avoidance";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "cloud_avoidance") return Scenario::CloudAvoidance;
  if (s == "storm_hunting") return Scenario::StormHunting;
  throw ParameterError("unknown scenario '" + s + "'");
}

struct RewardModel {
  double reward_off = 0.0;
  double reward_low = 1.0;
  double reward_mid = 10.0;
  double reward_high = 100.0;
  Scenario scenario = Scenario::CloudAvoidance;

  double value(RewardClass c) const {
    switch (c) {
      case RewardClass::Low: return reward_low;
      case RewardClass::Mid: return reward_mid;
      case RewardClass::High: return reward_high;
    }
    return reward_off;
  }

  void validate() const {
    if (reward_off != 0.0) throw ParameterError("reward_off must be 0");
    if (!(reward_low < reward_mid && reward_mid < reward_high))
      throw ParameterError("rewards must satisfy low < mid < high");
  }
};

/// The world: an H x T grid of reward classes, one column per timestep.
/// Timesteps are 1-based (t in [1, T]); rows are 0-based with nadir at H/2.
/// Storage is column-major so that a column is contiguous, matching the file layout.
class EnvStrip {
 public:
  EnvStrip() = default;

  EnvStrip(std::size_t height, std::size_t length, float pixel_size_km = 7.0f,
           RewardClass fill = RewardClass::Low)
      : height_(height), length_(length), pixel_size_km_(pixel_size_km) {
    if (height == 0 || length == 0) throw ParameterError("strip dimensions must be positive");
    if (height % 2 == 0) throw ParameterError("strip height must be odd so that nadir is well defined");
    cells_.assign(height * length, fill);
  }

  std::size_t height() const { return height_; }
  std::size_t length() const { return length_; }
  float pixel_size_km() const { return pixel_size_km_; }
  int center_row() const { return static_cast<int>(height_ / 2); }

  RewardClass at(int row, std::size_t t) const { return cells_[offset(row, t)]; }
  void set(int row, std::size_t t, RewardClass c) { cells_[offset(row, t)] = c; }

  /// Unchecked column-major access by zero-based column.
  RewardClass cell0(std::size_t row, std::size_t col) const { return cells_[col * height_ + row]; }
  void set0(std::size_t row, std::size_t col, RewardClass c) { cells_[col * height_ + row] = c; }

  bool contains(int row, long long t) const {
    return row >= 0 && row < static_cast<int>(height_) && t >= 1 && t <= static_cast<long long>(length_);
  }

  const std::vector<RewardClass>& cells() const { return cells_; }

  /// Leading columns [1, n] as a new strip.
  EnvStrip prefix(std::size_t n) const {
    if (n == 0 || n > length_) throw ParameterError("prefix length out of range");
    EnvStrip out(height_, n, pixel_size_km_);
    std::copy_n(cells_.begin(), n * height_, out.cells_.begin());
    return out;
  }

  /// Content hash over dimensions, pixel size and cells.
  std::uint64_t hash() const {
    io::Writer w;
    w.u64(height_);
    w.u64(length_);
    w.f32(pixel_size_km_);
    auto h = io::fnv1a(w.bytes());
    return io::fnv1a({reinterpret_cast<const std::uint8_t*>(cells_.data()), cells_.size()}, h);
  }

  friend bool operator==(const EnvStrip&, const EnvStrip&) = default;

 private:
  std::size_t offset(int row, std::size_t t) const {
    if (row < 0 || row >= static_cast<int>(height_) || t < 1 || t > length_)
      throw BoundsError("cell (" + std::to_string(row) + ", t=" + std::to_string(t) + ") outside strip");
    return (t - 1) * height_ + static_cast<std::size_t>(row);
  }

  std::size_t height_ = 0;
  std::size_t length_ = 0;
  float pixel_size_km_ = 7.0f;
  std::vector<RewardClass> cells_;
};

struct GenParams {
  std::array<double, 3> prevalence{0.8, 0.15, 0.05};  // Low, Mid, High
  std::array<double, 3> blob_scale{0.0, 9.0, 5.0};  // mean blob radius in pixels; Low is background
  /// Along-track clumping of blob seeds: 0 = uniform, higher = blobs gather into weather systems.
  double clustering = 0.0;
  /// Mean length of one weather system, in columns (only used when clustering > 0).
  double system_length = 400.0;
  std::uint64_t seed = 0;
  std::size_t height = 31;
  std::size_t length = 10000;
  float pixel_size_km = 7.0f;

  void validate() const {
    if (height == 0 || length == 0) throw ParameterError("generator dimensions must be positive");
    if (height % 2 == 0) throw ParameterError("generator height must be odd");
    double sum = 0.0;
    for (double p : prevalence) {
      if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("prevalence entries must lie in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("prevalence must sum to 1");
    for (std::size_t i = 1; i < 3; ++i)
      if (!(blob_scale[i] > 0.0)) throw ParameterError("blob_scale must be positive for Mid and High");
    if (clustering < 0.0) throw ParameterError("clustering must be non-negative");
    if (!(system_length > 0.0)) throw ParameterError("system_length must be positive");
  }
};

namespace detail {

/// Per-column seed density: a smoothed random field in [0, 1], or flat when clustering == 0.
inline std::vector<double> column_density(const GenParams& p, std::mt19937_64& rng) {
  std::vector<double> density(p.length, 1.0);
  if (p.clustering <= 0.0) return density;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Piecewise-linear interpolation between random knots spaced one system length apart.
  const double spacing = p.system_length;
  const std::size_t knots = static_cast<std::size_t>(std::ceil(static_cast<double>(p.length) / spacing)) + 2;
  std::vector<double> k(knots);
  for (auto& v : k) v = unit(rng);
  for (std::size_t c = 0; c < p.length; ++c) {
    const double x = static_cast<double>(c) / spacing;
    const auto i = static_cast<std::size_t>(x);
    const double f = x - static_cast<double>(i);
    const double base = k[i] * (1.0 - f) + k[i + 1] * f;
    density[c] = 1e-3 + std::pow(base, p.clustering);
  }
  return density;
}

}  // namespace detail

/// Seeded blob generator. High blobs are grown first, then Mid, each only over Low background,
/// so the painted counts hit their prevalence targets exactly (up to rounding).
inline EnvStrip generate_synthetic(const GenParams& params) {
  params.validate();
  EnvStrip strip(params.height, params.length, params.pixel_size_km);
  const std::size_t h = params.height;
  const std::size_t n = params.height * params.length;
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto density = detail::column_density(params, rng);
  std::discrete_distribution<std::size_t> pick_column(density.begin(), density.end());
  std::uniform_int_distribution<std::size_t> pick_row(0, h - 1);

  std::vector<std::uint32_t> stamp(n, 0);
  std::uint32_t blob_id = 0;
  std::vector<std::size_t> frontier;

  for (RewardClass cls : {RewardClass::High, RewardClass::Mid}) {
    const auto target = static_cast<std::size_t>(std::llround(params.prevalence[index_of(cls)] * static_cast<double>(n)));
    std::size_t painted = 0;
    while (painted < target) {
      // Seed on a Low cell; after a few misses fall back to a linear scan.
      std::size_t seed_cell = n;
      for (int attempt = 0; attempt < 64; ++attempt) {
        const std::size_t c = pick_column(rng) * h + pick_row(rng);
        if (strip.cell0(c % h, c / h) == RewardClass::Low) {
          seed_cell = c;
          break;
        }
      }
      if (seed_cell == n) {
        const std::size_t start = pick_column(rng) * h;
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t c = (start + k) % n;
          if (strip.cell0(c % h, c / h) == RewardClass::Low) {
            seed_cell = c;
            break;
          }
        }
      }
      if (seed_cell == n) break;

      const double radius = params.blob_scale[index_of(cls)] * (0.5 + unit(rng));
      auto area = static_cast<std::size_t>(std::max(1.0, std::round(std::numbers::pi * radius * radius)));
      area = std::min(area, target - painted);

      ++blob_id;
      frontier.clear();
      frontier.push_back(seed_cell);
      stamp[seed_cell] = blob_id;
      std::size_t grown = 0;
      while (grown < area && !frontier.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
        const std::size_t k = pick(rng);
        const std::size_t c = frontier[k];
        frontier[k] = frontier.back();
        frontier.pop_back();
        const std::size_t row = c % h;
        const std::size_t col = c / h;
        if (strip.cell0(row, col) != RewardClass::Low) continue;
        strip.set0(row, col, cls);
        ++grown;
        auto push = [&](std::size_t nc) {
          if (stamp[nc] != blob_id) {
            stamp[nc] = blob_id;
            frontier.push_back(nc);
          }
        };
        if (row > 0) push(c - 1);
        if (row + 1 < h) push(c + 1);
        if (col > 0) push(c - h);
        if (col + 1 < params.length) push(c + h);
      }
      painted += grown;
    }
  }
  return strip;
}

/// Fraction of cells in each class (Low, Mid, High).
inline std::array<double, 3> class_fractions(const EnvStrip& strip) {
  std::array<std::size_t, 3> counts{};
  for (auto c : strip.cells()) ++counts[index_of(c)];
  const double total = static_cast<double>(strip.cells().size());
  if (total == 0.0) return {0.0, 0.0, 0.0};
  return {counts[0] / total, counts[1] / total, counts[2] / total};
}

// ---------------------------------------------------------------------------
// Dataset files
//
//   "DTG1" | u32 height | u32 length | f32 pixel_size_km | height*length class bytes
//   (little-endian; column t contiguous; 0 = Low, 1 = Mid, 2 = High)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDatasetHeaderBytes = 16;
/// Largest payload we agree to allocate when loading (4 GiB).
inline constexpr std::uint64_t kMaxDatasetCells = std::uint64_t{1} << 32;

inline std::vector<std::uint8_t> encode_dataset(const EnvStrip& strip) {
  io::Writer w;
  w.magic("DTG1");
  w.u32(static_cast<std::uint32_t>(strip.height()));
  w.u32(static_cast<std::uint32_t>(strip.length()));
  w.f32(strip.pixel_size_km());
  w.raw({reinterpret_cast<const std::uint8_t*>(strip.cells().data()), strip.cells().size()});
  return w.bytes();
}

inline EnvStrip decode_dataset(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes));
  r.expect_magic("DTG1");
  const std::size_t dims_at = r.offset();
  const std::uint32_t height = r.u32();
  const std::uint32_t length = r.u32();
  const float px = r.f32();
  if (height == 0 || length == 0) throw FormatError(dims_at, "zero dimension");
  if (height % 2 == 0) throw FormatError(dims_at, "height must be odd");
  const std::uint64_t cells = std::uint64_t{height} * length;
  if (cells > kMaxDatasetCells) throw FormatError(dims_at, "dimension overflow");
  const auto payload = r.raw(static_cast<std::size_t>(cells));
  r.expect_end();
  EnvStrip strip(height, length, px);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (payload[i] > 2) throw FormatError(kDatasetHeaderBytes + i, "invalid class byte");
    strip.set0(i % height, i / height, static_cast<RewardClass>(payload[i]));
  }
  return strip;
}

/// Sidecar metadata written next to a dataset as `<path>.manifest`.
struct DatasetManifest {
  Scenario scenario = Scenario::CloudAvoidance;
  std::optional<std::uint64_t> seed;
  std::optional<std::array<double, 3>> prevalence;
};

inline std::filesystem::path manifest_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p += ".manifest";
  return p;
}

inline void save_dataset(const EnvStrip& strip, const std::filesystem::path& path,
                         const DatasetManifest& manifest = {}) {
  io::Writer w;
  w.raw(encode_dataset(strip));
  w.save(path);

  std::ofstream m(manifest_path(path), std::ios::trunc);
  if (!m) throw IoError("cannot write manifest for '" + path.string() + "'");
  m.precision(17);
  m << "format=DTG1\n";
  m << "scenario=" << to_string(manifest.scenario) << "\n";
  m << "height=" << strip.height() << "\n";
  m << "length=" << strip.length() << "\n";
  m << "pixel_size_km=" << strip.pixel_size_km() << "\n";
  if (manifest.seed) m << "seed=" << *manifest.seed << "\n";
  if (manifest.prevalence) {
    const auto& p = *manifest.prevalence;
    m << "prevalence=" << p[0] << "," << p[1] << "," << p[2] << "\n";
  }
}

inline EnvStrip load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("dataset not found: " + path.string());
  return decode_dataset(io::read_file(path));
}

/// Reads the key=value manifest; missing file yields defaults.
inline DatasetManifest load_manifest(const std::filesystem::path& dataset) {
  DatasetManifest out;
  std::ifstream in(manifest_path(dataset));
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "scenario") {
      out.scenario = parse_scenario(value);
    } else if (key == "seed") {
      out.seed = std::stoull(value);
    } else if (key == "prevalence") {
      std::array<double, 3> p{};
      std::istringstream ss(value);
      char comma = 0;
      ss >> p[0] >> comma >> p[1] >> comma >> p[2];
      if (ss) out.prevalence = p;
    }
  }
  return out;
}

}  // namespace dtarget
