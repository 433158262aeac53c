#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "dtarget/dtarget.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dtarget_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Uniformly random classes with the given High/Mid probabilities.
inline dtarget::EnvStrip random_strip(std::size_t h, std::size_t len, std::mt19937_64& rng, double p_high = 0.1,
                                      double p_mid = 0.2) {
  dtarget::EnvStrip s(h, len);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t c = 0; c < len; ++c)
    for (std::size_t r = 0; r < h; ++r) {
      const double x = u(rng);
      s.set0(r, c, x < p_high ? dtarget::RewardClass::High
                              : x < p_high + p_mid ? dtarget::RewardClass::Mid : dtarget::RewardClass::Low);
    }
  return s;
}

/// Model used by the tiny-instance tests: H=9, radar radius 2, lookahead 5.
inline dtarget::SimModel tiny_model() { return {dtarget::Sensor::from_pixels(2, 5), {}, {}}; }

}  // namespace testutil
