#pragma once

// Seeded procedural content for desk-scale runs: smooth sums of sinusoids
// with a faint per-pixel texture. Values stay inside roughly [0.12, 0.83],
// so a +0.1 shift never clamps.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "uapq/image.hpp"
#include "uapq/metrics.hpp"

namespace uapq::synthetic {

struct Wave {
  double fy, fx, phase, velocity;
  double amp[3];
};

struct Recipe {
  double base[3];
  Wave waves[3];
  std::uint64_t texture_seed;
};

inline Recipe make_recipe(std::uint64_t seed) {
  detail::SplitMix rng(detail::splitmix64(seed ^ 0x5EED5EED5EEDULL));
  Recipe r{};
  for (double& b : r.base) b = rng.uniform(0.40, 0.55);
  for (auto& w : r.waves) {
    w.fy = rng.uniform(0.5, 6.0);
    w.fx = rng.uniform(0.5, 6.0);
    w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    w.velocity = rng.uniform(-0.4, 0.4);
    for (double& a : w.amp) a = rng.uniform(0.03, 0.09);
  }
  r.texture_seed = detail::splitmix64(seed + 17);
  return r;
}

inline ImageTensor render(const Recipe& r, std::size_t height, std::size_t width, double t = 0.0,
                          std::uint64_t frame = 0) {
  Field f(Shape{height, width, 3});
  for (std::size_t y = 0; y < height; ++y) {
    const double v = static_cast<double>(y) / static_cast<double>(height);
    for (std::size_t x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(width);
      for (std::size_t c = 0; c < 3; ++c) {
        double s = r.base[c];
        for (const auto& w : r.waves) {
          s += w.amp[c] * std::sin(2.0 * std::numbers::pi * (w.fy * v + w.fx * u) + w.phase + w.velocity * t);
        }
        const std::uint64_t h =
            detail::splitmix64(r.texture_seed ^ detail::splitmix64(((frame * height + y) * width + x) * 3 + c));
        s += detail::hash_uniform(h, -0.01, 0.01);
        f.at(y, x, c) = s;
      }
    }
  }
  return clamp_unit(f);
}

inline ImageTensor image(std::uint64_t seed, std::size_t height = 256, std::size_t width = 256) {
  return render(make_recipe(seed), height, width);
}

inline std::vector<ImageTensor> images(std::size_t n, std::uint64_t seed, std::size_t height = 256,
                                       std::size_t width = 256) {
  std::vector<ImageTensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(image(detail::splitmix64(seed) + i, height, width));
  return out;
}

inline VideoFrames video(std::uint64_t seed, std::size_t frames = 8, std::size_t height = 128, std::size_t width = 128,
                         double frame_rate = 25.0) {
  const Recipe r = make_recipe(seed);
  std::vector<ImageTensor> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) out.push_back(render(r, height, width, static_cast<double>(t), t));
  return VideoFrames(std::move(out), frame_rate);
}

// "synthetic:N" style specs. Returns 0 when the spec is not synthetic.
inline std::size_t parse_count(const std::string& spec) {
  static const std::string prefix = "synthetic:";
  if (spec.rfind(prefix, 0) != 0) return 0;
  const std::string rest = spec.substr(prefix.size());
  std::size_t n = 0;
  try {
    std::size_t used = 0;
    n = std::stoul(rest, &used);
    if (used != rest.size()) n = 0;
  } catch (const std::exception&) {
    n = 0;
  }
  if (n == 0) throw ConfigError("bad synthetic source '" + spec + "': expected synthetic:<count> with count >= 1");
  return n;
}

}  // namespace uapq::synthetic
