#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "uapq/error.hpp"
#include "uapq/image.hpp"
#include "uapq/metrics.hpp"
#include "uapq/parallel.hpp"

namespace uapq {

// Shortest round-trip decimal form; the byte-stable representation used in
// every CSV the toolkit writes.
inline std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double learning_rate = 0.001;
  double clip_bound = 0.1;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t jobs = 1;

  void validate() const {
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (!(clip_bound > 0.0)) throw ParameterError("clip_bound must be > 0");
  }
};

// Bias-corrected Adam.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (!(state.beta1 > 0.0 && state.beta1 < 1.0 && state.beta2 > 0.0 && state.beta2 < 1.0)) {
    throw ParameterError("adam betas must lie in (0, 1)");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

namespace detail {

inline Field add_unclamped(const Field& img, const Field& p) {
  require_same_shape(img, p, "perturbed input (image vs perturbation tile)");
  Field out = img;
  auto o = out.values();
  const auto q = p.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += q[i];
  return out;
}

}  // namespace detail

// 1 - mean_i score(batch_i + p) / a with a = score_hi. Perturbed inputs are
// scored without clamping.
template <std::ranges::input_range Batch>
double uap_loss(const Metric& m, const Batch& batch, const Field& p) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& img : batch) {
    acc += m.score(detail::add_unclamped(img, p));
    ++n;
  }
  if (n == 0) throw ParameterError("uap_loss: empty batch");
  return 1.0 - (acc / static_cast<double>(n)) / m.descriptor().score_hi;
}

template <std::ranges::input_range Batch>
double uap_loss(const Metric& m, const Batch& batch, const Perturbation& p) {
  return uap_loss(m, batch, p.tile());
}

struct LossAndGradient {
  double loss = 0.0;
  Field gradient;
};

// Loss and its gradient with respect to the perturbation tile:
// -(1/a) * mean_i grad score(batch_i + p). Per-image work may run on several
// threads; the reduction always sums in batch order.
inline LossAndGradient uap_loss_and_gradient(const Metric& m, std::span<const ImageTensor* const> batch,
                                             const Field& p, std::size_t jobs = 1) {
  if (batch.empty()) throw ParameterError("uap_loss: empty batch");
  std::vector<double> scores(batch.size());
  std::vector<Field> grads(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    const Field x = detail::add_unclamped(*batch[i], p);
    scores[i] = m.score(x);
    grads[i] = m.gradient(x);
  });
  const double a = m.descriptor().score_hi;
  const double n = static_cast<double>(batch.size());
  LossAndGradient out{0.0, Field(p.shape())};
  double mean_score = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mean_score += scores[i];
    auto g = out.gradient.values();
    const auto gi = grads[i].values();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += gi[k];
  }
  out.loss = 1.0 - (mean_score / n) / a;
  for (double& v : out.gradient.values()) v *= -1.0 / (a * n);
  return out;
}

// Training inputs at the tile size. Images of another size are
// centre-cropped when large enough and bilinearly resized otherwise; each
// adjustment is recorded.
struct TrainingSet {
  std::vector<ImageTensor> images;
  std::vector<std::string> adjustments;
};

inline ImageTensor resize_bilinear(const ImageTensor& img, std::size_t height, std::size_t width) {
  Field out(Shape{height, width, img.channels()});
  const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height() - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width() - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return clamp_unit(out);
}

inline ImageTensor center_crop(const ImageTensor& img, std::size_t height, std::size_t width) {
  const std::size_t oy = (img.height() - height) / 2, ox = (img.width() - width) / 2;
  Field out(Shape{height, width, img.channels()});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
  return ImageTensor::from_field(std::move(out));
}

inline TrainingSet make_training_set(std::vector<ImageTensor> images, const Shape& tile,
                                     const std::vector<std::string>& names = {}) {
  TrainingSet set;
  set.images.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    ImageTensor img = std::move(images[i]);
    const std::string label = i < names.size() ? names[i] : "image " + std::to_string(i);
    if (img.channels() != tile.channels) {
      if (img.channels() != 1) throw ShapeError(label + ": unsupported channel count");
      Field rgb(Shape{img.height(), img.width(), tile.channels});
      for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
          for (std::size_t c = 0; c < tile.channels; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
      img = ImageTensor::from_field(std::move(rgb));
      set.adjustments.push_back(label + ": grey expanded to " + std::to_string(tile.channels) + " channels");
    }
    if (img.height() != tile.height || img.width() != tile.width) {
      const std::string from = to_string(img.shape());
      if (img.height() >= tile.height && img.width() >= tile.width) {
        img = center_crop(img, tile.height, tile.width);
        set.adjustments.push_back(label + ": centre-cropped from " + from);
      } else {
        img = resize_bilinear(img, tile.height, tile.width);
        set.adjustments.push_back(label + ": resized from " + from);
      }
    }
    set.images.push_back(std::move(img));
  }
  return set;
}

struct TrainStep {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;       // before the step
  double max_abs_p = 0.0;  // after the step and the clip
};

struct TrainResult {
  Perturbation perturbation;
  std::vector<TrainStep> log;
  std::vector<double> epoch_mean_loss;
};

// Called after every optimiser step (post-clip) with the live parameters.
using TrainObserver = std::function<void(const TrainStep&, std::span<const double> params)>;

namespace detail {

// Fisher-Yates with a counter-based generator: same order on every platform.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed, std::uint64_t epoch) {
  std::uint64_t state = splitmix64(seed ^ splitmix64(epoch + 1));
  for (std::size_t i = idx.size(); i > 1; --i) {
    state = splitmix64(state);
    const std::size_t j = static_cast<std::size_t>(
        (static_cast<unsigned __int128>(state) * static_cast<unsigned __int128>(i)) >> 64);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

// Projected Adam ascent on the metric score: zero initialisation, one Adam
// step per batch followed by an elementwise clip to [-clip, clip].
inline TrainResult train_uap(const Metric& m, std::span<const ImageTensor> dataset, const TrainConfig& cfg,
                             const TrainObserver& observer = {}) {
  cfg.validate();
  if (!m.descriptor().supports_gradient) {
    throw CapabilityError("metric " + m.name() + " does not provide gradients; cannot train a perturbation");
  }
  if (dataset.empty()) throw ParameterError("training dataset is empty");
  const Shape tile = dataset.front().shape();
  for (const auto& img : dataset) require_same_shape(dataset.front(), img, "training dataset");

  Field params(tile, 0.0);
  AdamState adam(params.size());
  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) detail::shuffle_indices(order, cfg.seed, epoch);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const ImageTensor*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&dataset[order[k]]);

      const LossAndGradient lg = uap_loss_and_gradient(m, batch, params, cfg.jobs);
      adam_step(adam, params.values(), lg.gradient.values(), cfg.learning_rate);
      for (double& v : params.values()) v = std::clamp(v, -cfg.clip_bound, cfg.clip_bound);

      const TrainStep step{epoch, batches, lg.loss, params.max_abs()};
      result.log.push_back(step);
      if (observer) observer(step, params.values());
      epoch_loss += lg.loss;
      ++batches;
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.perturbation = Perturbation(std::move(params), cfg.clip_bound);
  return result;
}

inline void write_training_log(std::ostream& out, const std::vector<TrainStep>& log) {
  out << "epoch,batch,loss,max_abs_p\n";
  for (const auto& s : log) {
    out << s.epoch << ',' << s.batch << ',' << format_real(s.loss) << ',' << format_real(s.max_abs_p) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Per-image attack under an MSE budget.

struct MadcConfig {
  std::size_t steps = 1000;
  double mse_budget = 0.0004;
  double step_size = 0.001;

  void validate() const {
    if (!(mse_budget > 0.0)) throw ParameterError("mse_budget must be > 0");
    if (!(step_size > 0.0)) throw ParameterError("step_size must be > 0");
  }
};

struct MadcResult {
  ImageTensor image;
  double initial_score = 0.0;
  double final_score = 0.0;
  double mse = 0.0;
  bool zero_gradient = false;
  std::size_t best_step = 0;  // 0 = the input itself
  EvaluationCounts evaluations;
};

// Gradient ascent with L-inf normalised steps, radial projection onto the
// MSE ball around the input, then clamping. Returns the best iterate seen.
// Costs one score for the input plus one gradient and one score per step.
inline MadcResult madc_attack(const Metric& m, const ImageTensor& img, const MadcConfig& cfg) {
  cfg.validate();
  if (!m.descriptor().supports_gradient) throw CapabilityError("metric " + m.name() + " does not provide gradients");

  MadcResult r;
  r.image = img;
  r.initial_score = r.final_score = m.score(img);
  ++r.evaluations.scores;

  Field x = img.field();
  const auto ref = img.values();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const GradientField g = m.gradient(x);
    ++r.evaluations.gradients;
    const double gmax = g.max_abs();
    if (gmax == 0.0 && step == 1) {
      r.zero_gradient = true;
      return r;
    }
    auto xv = x.values();
    if (gmax > 0.0) {
      const auto gv = g.values();
      for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += cfg.step_size * gv[i] / gmax;
    }
    double e = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) e += (xv[i] - ref[i]) * (xv[i] - ref[i]);
    e /= static_cast<double>(xv.size());
    if (e > cfg.mse_budget) {
      const double shrink = std::sqrt(cfg.mse_budget / e);
      for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = ref[i] + (xv[i] - ref[i]) * shrink;
    }
    ImageTensor candidate = clamp_unit(x);
    x = candidate.field();
    const double s = m.score(candidate);
    ++r.evaluations.scores;
    if (s > r.final_score) {
      r.final_score = s;
      r.image = std::move(candidate);
      r.best_step = step;
    }
  }
  r.mse = mse(img, r.image);
  return r;
}

}  // namespace uapq
