#pragma once

// Small dense network: ReLU hidden layers, single sigmoid output. Parameters live in one flat
// vector so that gradients, finite-difference checks and the optimiser all share one layout:
// for each layer, weights (out x in, row-major) followed by biases (out).

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "errors.hpp"

namespace dtarget {

inline constexpr std::array<std::size_t, 6> kBcArchitecture{13, 32, 16, 8, 4, 1};

enum class LossKind { CrossEntropy, MeanSquared };

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class Mlp {
 public:
  struct LayerView {
    std::size_t in;
    std::size_t out;
    std::size_t offset;  // first weight in the flat parameter vector

    friend bool operator==(const LayerView&, const LayerView&) = default;
  };

  Mlp() : Mlp(std::span<const std::size_t>(kBcArchitecture)) {}

  /// All-zero network with the given layer sizes (input first, output last = 1).
  explicit Mlp(std::span<const std::size_t> sizes) : sizes_(sizes.begin(), sizes.end()) {
    if (sizes_.size() < 2 || sizes_.back() != 1) throw ParameterError("MLP needs >= 2 layers and a single output");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ParameterError("MLP layer sizes must be positive");
      layers_.push_back({sizes_[l], sizes_[l + 1], offset});
      offset += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
    params_.assign(offset, 0.0);
  }

  /// Uniform init in +-sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
  static Mlp initialized(std::span<const std::size_t> sizes, std::uint64_t seed) {
    Mlp m(sizes);
    std::mt19937_64 rng(seed);
    for (const auto& L : m.layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t i = 0; i < L.in * L.out; ++i) m.params_[L.offset + i] = u(rng);
    }
    return m;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const std::vector<LayerView>& layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::size_t input_size() const { return sizes_.front(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Pre-sigmoid output. `acts` receives post-activation values per layer (acts[0] = input).
  double logit(std::span<const double> x, std::vector<std::vector<double>>* acts = nullptr) const {
    if (x.size() != input_size()) throw ParameterError("MLP input has wrong dimension");
    thread_local std::vector<std::vector<double>> scratch;
    auto& a = acts ? *acts : scratch;
    a.resize(sizes_.size());
    a[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      const double* w = params_.data() + L.offset;
      const double* b = w + L.in * L.out;
      auto& next = a[l + 1];
      next.resize(L.out);
      const bool hidden = l + 1 < layers_.size();
      for (std::size_t o = 0; o < L.out; ++o) {
        double z = b[o];
        const double* row = w + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) z += row[i] * a[l][i];
        next[o] = hidden ? (z > 0.0 ? z : 0.0) : z;
      }
    }
    const double z = a.back()[0];
    if (!std::isfinite(z)) throw NumericError("non-finite MLP output");
    return z;
  }

  /// P(Sample | x) in (0, 1).
  double forward(std::span<const double> x) const { return sigmoid(logit(x)); }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<LayerView> layers_;
  std::vector<double> params_;
};

inline double example_loss(double z, double y, LossKind kind) {
  if (kind == LossKind::CrossEntropy) {
    // log(1 + e^z) - y z, evaluated stably.
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
  }
  const double d = sigmoid(z) - y;
  return d * d;
}

struct GradResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean loss over the batch and its gradient with respect to every parameter.
inline GradResult mlp_grad(const Mlp& model, std::span<const std::span<const double>> xs, std::span<const double> ys,
                           LossKind kind = LossKind::CrossEntropy) {
  if (xs.size() != ys.size() || xs.empty()) throw ParameterError("batch inputs and labels must be non-empty and aligned");
  GradResult out;
  out.grad.assign(model.parameter_count(), 0.0);
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta;
  const auto params = model.params();
  const auto& layers = model.layers();

  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double z = model.logit(xs[n], &acts);
    const double y = ys[n];
    out.loss += example_loss(z, y, kind);
    const double p = sigmoid(z);
    const double dz = kind == LossKind::CrossEntropy ? p - y : 2.0 * (p - y) * p * (1.0 - p);
    delta.assign(1, dz);

    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& L = layers[l];
      const auto& input = acts[l];
      double* gw = out.grad.data() + L.offset;
      double* gb = gw + L.in * L.out;
      const double* w = params.data() + L.offset;
      for (std::size_t o = 0; o < L.out; ++o) {
        gb[o] += delta[o];
        double* grow = gw + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) grow[i] += delta[o] * input[i];
      }
      if (l == 0) break;
      // Back through the weights, then the ReLU of layer l's input (acts[l] > 0 iff unit active).
      prev_delta.assign(L.in, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        const double* row = w + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) prev_delta[i] += row[i] * delta[o];
      }
      for (std::size_t i = 0; i < L.in; ++i)
        if (input[i] <= 0.0) prev_delta[i] = 0.0;
      std::swap(delta, prev_delta);
    }
  }
  const double scale = 1.0 / static_cast<double>(xs.size());
  out.loss *= scale;
  for (auto& g : out.grad) g *= scale;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

/// Mean loss without gradients.
inline double mlp_loss(const Mlp& model, std::span<const std::span<const double>> xs, std::span<const double> ys,
                       LossKind kind = LossKind::CrossEntropy) {
  if (xs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) total += example_loss(model.logit(xs[n]), ys[n], kind);
  return total / static_cast<double>(xs.size());
}

/// Adaptive-moment optimiser state over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

// Model file: "DTM1" | u32 layer count | per layer (u32 in, u32 out, f32 weights row-major, f32 biases).

inline void save_mlp(const Mlp& model, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("DTM1");
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  const auto p = model.params();
  for (const auto& L : model.layers()) {
    w.u32(static_cast<std::uint32_t>(L.in));
    w.u32(static_cast<std::uint32_t>(L.out));
    for (std::size_t i = 0; i < L.in * L.out + L.out; ++i) w.f32(static_cast<float>(p[L.offset + i]));
  }
  w.save(path);
}

inline Mlp load_mlp(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic("DTM1");
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw FormatError(count_at, "bad layer count");
  std::vector<std::size_t> sizes;
  std::vector<float> values;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t at = r.offset();
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    if (in == 0 || out == 0 || in > 65536 || out > 65536) throw FormatError(at, "bad layer shape");
    if (l == 0) sizes.push_back(in);
    else if (sizes.back() != in) throw FormatError(at, "layer input does not match previous output");
    sizes.push_back(out);
    for (std::size_t i = 0; i < std::size_t{in} * out + out; ++i) values.push_back(r.f32());
  }
  r.expect_end();
  Mlp model(sizes);
  if (values.size() != model.parameter_count()) throw FormatError(r.offset(), "parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) model.params()[i] = values[i];
  return model;
}

}  // namespace dtarget
