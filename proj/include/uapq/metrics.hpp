#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <ranges>
#include <string>
#include <vector>

#include "uapq/error.hpp"
#include "uapq/image.hpp"

namespace uapq {

enum class MetricKind { builtin, external };

// score_hi doubles as the normalisation factor of the UAP training loss.
struct MetricDescriptor {
  std::string name;
  double score_lo = 0.0;
  double score_hi = 100.0;
  bool supports_gradient = false;
  MetricKind kind = MetricKind::builtin;

  void validate() const {
    if (name.empty()) throw ParameterError("metric name must be non-empty");
    if (!(score_lo < score_hi)) throw ParameterError("metric " + name + ": score_lo must be < score_hi");
  }
};

struct EvaluationCounts {
  std::uint64_t scores = 0;
  std::uint64_t gradients = 0;
  std::uint64_t total() const noexcept { return scores + gradients; }
};

// No-reference scorer. Inputs are raw fields so that pre-clamp perturbed
// images can be scored; every public call is counted.
class Metric {
 public:
  explicit Metric(MetricDescriptor d) : descriptor_(std::move(d)) { descriptor_.validate(); }
  virtual ~Metric() = default;
  Metric(const Metric&) = delete;
  Metric& operator=(const Metric&) = delete;

  const MetricDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::string& name() const noexcept { return descriptor_.name; }

  double score(const Field& img) const {
    score_calls_.fetch_add(1, std::memory_order_relaxed);
    return evaluate(img);
  }

  GradientField gradient(const Field& img) const {
    if (!descriptor_.supports_gradient) throw CapabilityError("metric " + name() + " does not provide gradients");
    gradient_calls_.fetch_add(1, std::memory_order_relaxed);
    return differentiate(img);
  }

  EvaluationCounts counts() const noexcept {
    return {score_calls_.load(std::memory_order_relaxed), gradient_calls_.load(std::memory_order_relaxed)};
  }
  void reset_counts() noexcept {
    score_calls_ = 0;
    gradient_calls_ = 0;
  }

 protected:
  virtual double evaluate(const Field& img) const = 0;
  virtual GradientField differentiate(const Field& /*img*/) const {
    throw CapabilityError("metric " + name() + " does not provide gradients");
  }

 private:
  MetricDescriptor descriptor_;
  mutable std::atomic<std::uint64_t> score_calls_{0};
  mutable std::atomic<std::uint64_t> gradient_calls_{0};
};

using MetricHandle = std::shared_ptr<Metric>;

template <std::ranges::input_range Images>
std::vector<double> score_batch(const Metric& m, const Images& imgs) {
  std::vector<double> out;
  const Field* first = nullptr;
  for (const auto& img : imgs) {
    const Field& f = img;
    if (first == nullptr) first = &f;
    else require_same_shape(*first, f, "score_batch");
    out.push_back(m.score(f));
  }
  return out;
}

// Video-level score: unweighted mean over frames.
inline double score_video(const Metric& m, const VideoFrames& v) {
  double acc = 0.0;
  for (const auto& f : v.frames) acc += m.score(f);
  return acc / static_cast<double>(v.frames.size());
}

// Central differences, unclamped.
inline GradientField finite_diff_gradient(const Metric& m, const Field& img, double h) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  Field probe = img;
  GradientField g(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double up = m.score(probe);
    probe.values()[i] = orig - h;
    const double down = m.score(probe);
    probe.values()[i] = orig;
    g.values()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform in [lo, hi) from a 64-bit hash.
inline double hash_uniform(std::uint64_t h, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(h >> 11) * 0x1.0p-53;
}

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  double uniform(double lo, double hi) {
    state_ += 0x9E3779B97F4A7C15ULL;
    return hash_uniform(splitmix64(state_), lo, hi);
  }

 private:
  std::uint64_t state_;
};

}  // namespace detail

// score = 100 * mean pixel value.
class MeanScorer final : public Metric {
 public:
  MeanScorer() : Metric({"MeanScorer", 0.0, 100.0, true, MetricKind::builtin}) {}

 protected:
  double evaluate(const Field& img) const override {
    const auto v = img.values();
    return 100.0 * std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  GradientField differentiate(const Field& img) const override {
    return GradientField(img.shape(), 100.0 / static_cast<double>(img.size()));
  }
};

// score = 100 * <w, x> / |x| with position-keyed weights in [-1, 1].
class LinearScorer final : public Metric {
 public:
  static constexpr std::uint64_t kSeed = 0x4C494E4541520001ULL;

  LinearScorer() : Metric({"LinearScorer", -100.0, 100.0, true, MetricKind::builtin}) {}

  static double weight(std::size_t y, std::size_t x, std::size_t c) {
    const std::uint64_t key = (static_cast<std::uint64_t>(y) << 40) ^ (static_cast<std::uint64_t>(x) << 8) ^ c;
    const double w = detail::hash_uniform(detail::splitmix64(kSeed ^ detail::splitmix64(key)), -1.0, 1.0);
    return w == 0.0 ? 0x1.0p-20 : w;
  }

  static Field weights(const Shape& s) {
    Field w(s);
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x)
        for (std::size_t c = 0; c < s.channels; ++c) w.at(y, x, c) = weight(y, x, c);
    return w;
  }

 protected:
  double evaluate(const Field& img) const override {
    double acc = 0.0;
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < img.width(); ++x)
        for (std::size_t c = 0; c < img.channels(); ++c) acc += weight(y, x, c) * img.at(y, x, c);
    return 100.0 * acc / static_cast<double>(img.size());
  }
  GradientField differentiate(const Field& img) const override {
    Field g = weights(img.shape());
    const double scale = 100.0 / static_cast<double>(img.size());
    for (double& v : g.values()) v *= scale;
    return g;
  }
};

// conv3x3(3->8) -> ReLU -> conv3x3(8->4) -> ReLU -> global average -> affine
// -> 100 * sigmoid. Zero padding keeps spatial size. Weights come from a
// fixed seed so scores are reproducible across builds.
class TinyConvScorer final : public Metric {
 public:
  static constexpr std::uint64_t kSeed = 0x54494E59434F4E56ULL;
  static constexpr std::size_t kIn = 3, kMid = 8, kOut = 4, kK = 3;

  struct Weights {
    std::array<double, kMid * kIn * kK * kK> conv1{};
    std::array<double, kMid> bias1{};
    std::array<double, kOut * kMid * kK * kK> conv2{};
    std::array<double, kOut> bias2{};
    std::array<double, kOut> head{};
    double head_bias = 0.0;
  };

  TinyConvScorer() : TinyConvScorer(make_weights()) {}
  explicit TinyConvScorer(Weights w)
      : Metric({"TinyConvScorer", 0.0, 100.0, true, MetricKind::builtin}), w_(std::move(w)) {}

  // Inputs the scorer is expected to see: unit-interval pixels plus a
  // perturbation of at most 0.1 before clamping.
  static constexpr double kInputLo = -0.1, kInputHi = 1.1;
  static constexpr double kMargin = 0.05;

  // Biases are set by interval arithmetic so every ReLU keeps a fixed sign
  // (with kMargin to spare) for inputs in [kInputLo, kInputHi]. The
  // activation pattern only changes outside that box, which keeps the
  // analytic gradient and central differences consistent.
  static Weights make_weights() {
    Weights w;
    detail::SplitMix rng(kSeed);
    for (auto& v : w.conv1) v = rng.uniform(-0.4, 0.4);
    for (auto& v : w.conv2) v = rng.uniform(-0.25, 0.25);
    for (auto& v : w.head) v = rng.uniform(-1.5, 1.5);
    w.head_bias = rng.uniform(-0.5, 0.5);

    // Zero padding contributes 0, which lies inside the input box.
    std::array<double, kMid> hi1{};
    for (std::size_t o = 0; o < kMid; ++o) {
      double lo = 0.0, hi = 0.0;
      for (std::size_t k = 0; k < kIn * kK * kK; ++k) {
        const double c = w.conv1[o * kIn * kK * kK + k];
        lo += std::min({c * kInputLo, c * kInputHi, 0.0});
        hi += std::max({c * kInputLo, c * kInputHi, 0.0});
      }
      w.bias1[o] = kMargin - lo;
      hi1[o] = hi + w.bias1[o];
    }
    for (std::size_t p = 0; p < kOut; ++p) {
      double lo = 0.0;
      for (std::size_t o = 0; o < kMid; ++o) {
        for (std::size_t k = 0; k < kK * kK; ++k) lo += std::min(0.0, w.conv2[(p * kMid + o) * kK * kK + k] * hi1[o]);
      }
      w.bias2[p] = kMargin - lo;
    }
    // Centre the logit for a mid-grey input so the sigmoid is not saturated.
    Field grey(Shape{8, 8, kIn}, 0.5);
    TinyConvScorer probe(w);
    w.head_bias -= probe.forward(grey).logit;
    return w;
  }
  const Weights& weights() const noexcept { return w_; }

 protected:
  struct Activations {
    std::size_t h = 0, w = 0;
    std::vector<double> pre1, pre2;  // [channel][y][x]
    std::array<double, kOut> pooled{};
    double logit = 0.0;
  };

  static std::size_t c1(std::size_t o, std::size_t i, std::size_t dy, std::size_t dx) {
    return ((o * kIn + i) * kK + dy) * kK + dx;
  }
  static std::size_t c2(std::size_t p, std::size_t o, std::size_t dy, std::size_t dx) {
    return ((p * kMid + o) * kK + dy) * kK + dx;
  }

  Activations forward(const Field& img) const {
    if (img.channels() != kIn) throw ShapeError("TinyConvScorer expects 3-channel input");
    Activations a;
    a.h = img.height();
    a.w = img.width();
    const std::size_t H = a.h, W = a.w, plane = H * W;
    a.pre1.assign(kMid * plane, 0.0);
    for (std::size_t o = 0; o < kMid; ++o) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double acc = w_.bias1[o];
          for (std::size_t dy = 0; dy < kK; ++dy) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t dx = 0; dx < kK; ++dx) {
              const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
              for (std::size_t i = 0; i < kIn; ++i) acc += w_.conv1[c1(o, i, dy, dx)] * img.at(yy, xx, i);
            }
          }
          a.pre1[o * plane + y * W + x] = acc;
        }
      }
    }
    a.pre2.assign(kOut * plane, 0.0);
    for (std::size_t p = 0; p < kOut; ++p) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double acc = w_.bias2[p];
          for (std::size_t dy = 0; dy < kK; ++dy) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t dx = 0; dx < kK; ++dx) {
              const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
              for (std::size_t o = 0; o < kMid; ++o) {
                acc += w_.conv2[c2(p, o, dy, dx)] * std::max(0.0, a.pre1[o * plane + yy * W + xx]);
              }
            }
          }
          a.pre2[p * plane + y * W + x] = acc;
        }
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < plane; ++k) sum += std::max(0.0, a.pre2[p * plane + k]);
      a.pooled[p] = sum / static_cast<double>(plane);
    }
    a.logit = w_.head_bias;
    for (std::size_t p = 0; p < kOut; ++p) a.logit += w_.head[p] * a.pooled[p];
    return a;
  }

  static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

  double evaluate(const Field& img) const override { return 100.0 * sigmoid(forward(img).logit); }

  GradientField differentiate(const Field& img) const override {
    const Activations a = forward(img);
    const std::size_t H = a.h, W = a.w, plane = H * W;
    const double s = sigmoid(a.logit);
    const double dlogit = 100.0 * s * (1.0 - s);

    std::vector<double> d2(kOut * plane, 0.0);
    for (std::size_t p = 0; p < kOut; ++p) {
      const double dp = dlogit * w_.head[p] / static_cast<double>(plane);
      for (std::size_t k = 0; k < plane; ++k) d2[p * plane + k] = a.pre2[p * plane + k] > 0.0 ? dp : 0.0;
    }

    // Scatter through conv2 into the gradient of relu(pre1), then gate.
    std::vector<double> d1(kMid * plane, 0.0);
    for (std::size_t p = 0; p < kOut; ++p) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double g = d2[p * plane + y * W + x];
          if (g == 0.0) continue;
          for (std::size_t dy = 0; dy < kK; ++dy) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t dx = 0; dx < kK; ++dx) {
              const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
              for (std::size_t o = 0; o < kMid; ++o) d1[o * plane + yy * W + xx] += w_.conv2[c2(p, o, dy, dx)] * g;
            }
          }
        }
      }
    }
    for (std::size_t k = 0; k < d1.size(); ++k) {
      if (a.pre1[k] <= 0.0) d1[k] = 0.0;
    }

    GradientField grad(img.shape());
    for (std::size_t o = 0; o < kMid; ++o) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double g = d1[o * plane + y * W + x];
          if (g == 0.0) continue;
          for (std::size_t dy = 0; dy < kK; ++dy) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t dx = 0; dx < kK; ++dx) {
              const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
              for (std::size_t i = 0; i < kIn; ++i) grad.at(yy, xx, i) += w_.conv1[c1(o, i, dy, dx)] * g;
            }
          }
        }
      }
    }
    return grad;
  }

 private:
  Weights w_;
};

// score = clamp(100 - k * mean|Laplacian|, 0, 100). The 4-neighbour
// Laplacian uses edge replication and runs per channel. High-frequency
// energy lowers the score, so additive noise can only hurt it.
class NoiseGuardScorer final : public Metric {
 public:
  static constexpr double kPenalty = 100.0;

  NoiseGuardScorer() : Metric({"NoiseGuardScorer", 0.0, 100.0, false, MetricKind::builtin}) {}

  static double mean_abs_laplacian(const Field& img) {
    const std::size_t H = img.height(), W = img.width();
    double acc = 0.0;
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t up = y == 0 ? 0 : y - 1, down = std::min(H - 1, y + 1);
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t left = x == 0 ? 0 : x - 1, right = std::min(W - 1, x + 1);
        for (std::size_t c = 0; c < img.channels(); ++c) {
          const double lap = 4.0 * img.at(y, x, c) - img.at(up, x, c) - img.at(down, x, c) - img.at(y, left, c) -
                             img.at(y, right, c);
          acc += std::abs(lap);
        }
      }
    }
    return acc / static_cast<double>(img.size());
  }

 protected:
  double evaluate(const Field& img) const override {
    return std::clamp(100.0 - kPenalty * mean_abs_laplacian(img), 0.0, 100.0);
  }
};

inline std::vector<MetricHandle> builtin_registry() {
  return {std::make_shared<MeanScorer>(), std::make_shared<LinearScorer>(), std::make_shared<TinyConvScorer>(),
          std::make_shared<NoiseGuardScorer>()};
}

// Case-insensitive lookup by name; nullptr when absent.
inline MetricHandle find_builtin(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  for (auto& m : builtin_registry()) {
    if (lower(m->name()) == lower(name)) return m;
  }
  return nullptr;
}

}  // namespace uapq
