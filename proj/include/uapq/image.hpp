#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uapq/error.hpp"

namespace uapq {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  constexpr std::size_t size() const noexcept { return height * width * channels; }
  constexpr std::size_t pixels() const noexcept { return height * width; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

// Unconstrained real raster, row-major and channel-interleaved. Carries
// perturbation tiles, gradients and pre-clamp perturbed inputs.
class Field {
 public:
  Field() = default;
  explicit Field(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Field(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("field data length " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return (y * shape_.width + x) * shape_.channels + c;
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return data_[index(y, x, c)]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return data_[index(y, x, c)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

using GradientField = Field;

inline void require_same_shape(const Field& a, const Field& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// Raster whose every element lies in [0,1]. Channels are 1 or 3.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Shape shape, double fill = 0.0) : field_(shape, fill) {
    check_channels();
    if (!(fill >= 0.0 && fill <= 1.0)) throw ParameterError("image fill value outside [0,1]");
  }

  // Throws when any element falls outside [0,1]; use clamp_unit() to coerce.
  static ImageTensor from_field(Field field) {
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double v = field.values()[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ParameterError("image element " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
      }
    }
    return ImageTensor(std::move(field), Unchecked{});
  }

  const Field& field() const noexcept { return field_; }
  operator const Field&() const noexcept { return field_; }  // NOLINT(google-explicit-constructor)

  const Shape& shape() const noexcept { return field_.shape(); }
  std::size_t height() const noexcept { return field_.height(); }
  std::size_t width() const noexcept { return field_.width(); }
  std::size_t channels() const noexcept { return field_.channels(); }
  std::size_t size() const noexcept { return field_.size(); }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return field_.at(y, x, c); }
  std::span<const double> values() const noexcept { return field_.values(); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  struct Unchecked {};
  ImageTensor(Field f, Unchecked) : field_(std::move(f)) { check_channels(); }
  void check_channels() const {
    if (field_.channels() != 1 && field_.channels() != 3) {
      throw ShapeError("image channels must be 1 or 3, got " + std::to_string(field_.channels()));
    }
  }

  friend ImageTensor clamp_unit(const Field& f);
  Field field_;
};

inline ImageTensor clamp_unit(const Field& f) {
  Field out = f;
  for (double& v : out.values()) v = std::min(1.0, std::max(0.0, v));
  return ImageTensor(std::move(out), ImageTensor::Unchecked{});
}

struct VideoFrames {
  std::vector<ImageTensor> frames;
  double frame_rate = 25.0;

  VideoFrames() = default;
  VideoFrames(std::vector<ImageTensor> f, double rate) : frames(std::move(f)), frame_rate(rate) { validate(); }

  void validate() const {
    if (frames.empty()) throw ParameterError("video has no frames");
    if (!(frame_rate > 0.0)) throw ParameterError("video frame rate must be positive");
    for (const auto& fr : frames) {
      if (fr.shape() != frames.front().shape()) throw ShapeError("video frames differ in dimensions");
    }
  }
  const Shape& shape() const { return frames.front().shape(); }
  double duration() const { return static_cast<double>(frames.size()) / frame_rate; }
};

// Trainable tile, every entry within [-clip_bound, +clip_bound].
class Perturbation {
 public:
  static constexpr std::size_t kDefaultTile = 256;
  static constexpr double kDefaultClip = 0.1;

  Perturbation() : Perturbation(Shape{kDefaultTile, kDefaultTile, 3}) {}
  explicit Perturbation(Shape tile, double clip_bound = kDefaultClip) : tile_(tile, 0.0), clip_bound_(clip_bound) {
    if (!(clip_bound > 0.0)) throw ParameterError("clip bound must be positive");
    if (tile.height == 0 || tile.width == 0 || tile.channels == 0) throw ShapeError("empty perturbation tile");
  }
  Perturbation(Field tile, double clip_bound) : Perturbation(tile.shape(), clip_bound) {
    for (double v : tile.values()) {
      if (!(std::abs(v) <= clip_bound)) {
        throw ParameterError("perturbation value " + std::to_string(v) + " exceeds clip bound " +
                             std::to_string(clip_bound));
      }
    }
    tile_ = std::move(tile);
  }

  const Field& tile() const noexcept { return tile_; }
  const Shape& shape() const noexcept { return tile_.shape(); }
  double clip_bound() const noexcept { return clip_bound_; }
  double max_abs() const noexcept { return tile_.max_abs(); }

  friend bool operator==(const Perturbation&, const Perturbation&) = default;

 private:
  Field tile_;
  double clip_bound_;
};

struct ContrastMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  double at(std::size_t y, std::size_t x) const noexcept { return data[y * width + x]; }
};

inline double mse(const Field& ref, const Field& dist) {
  require_same_shape(ref, dist, "mse");
  if (ref.size() == 0) return 0.0;
  double acc = 0.0;
  const auto a = ref.values();
  const auto b = dist.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline constexpr double kDefaultPsnrCap = 99.0;

// Peak 1.0. Values above the cap (including identical inputs) report the cap.
inline double psnr(const Field& ref, const Field& dist, double cap = kDefaultPsnrCap) {
  const double e = mse(ref, dist);
  if (e == 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / e));
}

inline Field tile_perturbation(const Perturbation& p, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ParameterError("tiling target must be at least 1x1");
  const Field& t = p.tile();
  const std::size_t th = t.height(), tw = t.width(), ch = t.channels();
  Field out(Shape{height, width, ch});
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t ty = y % th;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t tx = x % tw;
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = t.at(ty, tx, c);
    }
  }
  return out;
}

inline Perturbation scale_to_amplitude(const Perturbation& p, double amplitude) {
  if (!(amplitude > 0.0)) throw ParameterError("amplitude must be > 0");
  const double peak = p.max_abs();
  if (peak == 0.0) throw DegenerateError("cannot scale an all-zero perturbation");
  const double factor = amplitude / peak;
  Field scaled = p.tile();
  for (double& v : scaled.values()) v *= factor;
  // Rounding can push the peak a hair above the amplitude; the bound follows it.
  const double bound = std::max(amplitude, scaled.max_abs());
  return Perturbation(std::move(scaled), bound);
}

namespace detail {

inline void check_perturbation_channels(const ImageTensor& img, const Perturbation& p) {
  if (img.channels() != p.shape().channels) {
    throw ShapeError("image has " + std::to_string(img.channels()) + " channels, perturbation has " +
                     std::to_string(p.shape().channels));
  }
}

}  // namespace detail

inline ImageTensor apply_perturbation(const ImageTensor& img, const Perturbation& p) {
  detail::check_perturbation_channels(img, p);
  Field out = img.field();
  const Field& t = p.tile();
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) += t.at(y % t.height(), x % t.width(), c);
      }
    }
  }
  return clamp_unit(out);
}

inline ImageTensor apply_perturbation(const ImageTensor& img, const Perturbation& p, const ContrastMask& mask) {
  detail::check_perturbation_channels(img, p);
  if (mask.height != img.height() || mask.width != img.width()) {
    throw ShapeError("contrast mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                     " does not match image " + to_string(img.shape()));
  }
  Field out = img.field();
  const Field& t = p.tile();
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double m = mask.at(y, x);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        out.at(y, x, c) += m * t.at(y % t.height(), x % t.width(), c);
      }
    }
  }
  return clamp_unit(out);
}

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline std::vector<double> luminance(const ImageTensor& img) {
  std::vector<double> lum(img.height() * img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      lum[y * img.width() + x] = img.channels() == 1 ? img.at(y, x, 0)
                                                     : kLumaR * img.at(y, x, 0) + kLumaG * img.at(y, x, 1) +
                                                           kLumaB * img.at(y, x, 2);
    }
  }
  return lum;
}

// Local standard deviation of luminance over a window x window neighbourhood
// (edge replication), then divided by the global maximum. Returned unscaled
// when `rescale` is false.
inline ContrastMask contrast_mask(const ImageTensor& img, std::size_t window = 7, bool rescale = true) {
  const std::size_t h = img.height(), w = img.width();
  if (window % 2 == 0 || window < 3 || window > std::min(h, w)) {
    throw ParameterError("contrast window must be odd, >= 3 and <= min(height, width); got " +
                         std::to_string(window));
  }
  const auto lum = luminance(img);
  const std::size_t r = window / 2;
  const std::size_t pw = w + 2 * r;

  // Edge-replicated luminance plane.
  std::vector<double> padded((h + 2 * r) * pw);
  for (std::size_t y = 0; y < h + 2 * r; ++y) {
    const std::size_t sy = std::min(h - 1, y < r ? 0 : y - r);
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t sx = std::min(w - 1, x < r ? 0 : x - r);
      padded[y * pw + x] = lum[sy * w + sx];
    }
  }

  const double n = static_cast<double>(window * window);
  ContrastMask mask{h, w, std::vector<double>(h * w)};
  double peak = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double sum = 0.0;
      for (std::size_t dy = 0; dy < window; ++dy) {
        const double* row = &padded[(y + dy) * pw + x];
        for (std::size_t dx = 0; dx < window; ++dx) sum += row[dx];
      }
      const double mean = sum / n;
      double sq = 0.0;
      for (std::size_t dy = 0; dy < window; ++dy) {
        const double* row = &padded[(y + dy) * pw + x];
        for (std::size_t dx = 0; dx < window; ++dx) {
          const double d = row[dx] - mean;
          sq += d * d;
        }
      }
      const double sd = std::sqrt(sq / n);
      mask.data[y * w + x] = sd;
      peak = std::max(peak, sd);
    }
  }
  // The window mean of a constant plane can be off by an ulp.
  constexpr double kFlat = 1e-12;
  if (peak <= kFlat) {
    std::fill(mask.data.begin(), mask.data.end(), 0.0);
  } else if (rescale) {
    for (double& v : mask.data) v /= peak;
  }
  return mask;
}

}  // namespace uapq
