#pragma once

// RD-curve based robustness rating of a no-reference metric.
//
// For every target metric: its (K+1)*N RD curves are min/max normalised
// jointly, the proxy (PSNR) curves of all metrics are normalised with one
// pooled range, and each attacked curve is compared against the unattacked
// one over their common bitrate span mapped onto [0,1]. Per-video gains and
// losses are averaged into one (loss, gain) point per amplitude. The score is
// -100 x the area under gain(loss) over the loss interval covered by every
// metric; negative means the attack inflates the metric.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uapq/attack.hpp"
#include "uapq/error.hpp"

namespace uapq {

struct RDPoint {
  double bitrate = 0.0;
  double score = 0.0;
  friend bool operator==(const RDPoint&, const RDPoint&) = default;
};

struct RDCurve {
  std::vector<RDPoint> points;
  std::string video;
  std::string metric;
  std::optional<double> amplitude;  // empty = unattacked

  std::string describe() const {
    return "curve(metric=" + metric + ", video=" + video +
           ", amplitude=" + (amplitude ? format_real(*amplitude) : std::string("none")) + ")";
  }

  void validate() const {
    if (points.size() < 2) throw ParameterError(describe() + " needs at least 2 points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i].score) || !std::isfinite(points[i].bitrate)) {
        throw ParameterError(describe() + " has a non-finite point");
      }
      if (i > 0 && !(points[i].bitrate > points[i - 1].bitrate)) {
        throw ParameterError(describe() + " bitrates are not strictly increasing");
      }
    }
  }

  friend bool operator==(const RDCurve&, const RDCurve&) = default;
};

struct ScoreRange {
  double min = 0.0;
  double max = 0.0;
};

struct NormalizedCurves {
  std::vector<RDCurve> curves;
  ScoreRange range;
};

inline ScoreRange score_range(std::span<const RDCurve> curves) {
  ScoreRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      r.min = std::min(r.min, p.score);
      r.max = std::max(r.max, p.score);
    }
  }
  return r;
}

// (score - min) / (max - min) using the given range.
inline NormalizedCurves normalize_with(std::span<const RDCurve> curves, ScoreRange range) {
  const double span = range.max - range.min;
  if (!(span > 0.0)) throw DegenerateError("score range is degenerate (max == min); the metric is constant");
  NormalizedCurves out{{curves.begin(), curves.end()}, range};
  for (auto& c : out.curves) {
    for (auto& p : c.points) p.score = (p.score - range.min) / span;
  }
  return out;
}

// One metric's (K+1)*N target curves, normalised by their joint extrema.
inline NormalizedCurves normalize_target_curves(std::span<const RDCurve> curves) {
  for (const auto& c : curves) c.validate();
  const ScoreRange r = score_range(curves);
  try {
    return normalize_with(curves, r);
  } catch (const DegenerateError&) {
    throw DegenerateError("target metric " + (curves.empty() ? std::string("?") : curves.front().metric) +
                          " is constant over the evaluated curves");
  }
}

// Proxy curves pooled over every metric's runs (M*N*(K+1) curves).
inline NormalizedCurves normalize_proxy_curves(std::span<const RDCurve> curves) {
  for (const auto& c : curves) c.validate();
  const ScoreRange r = score_range(curves);
  try {
    return normalize_with(curves, r);
  } catch (const DegenerateError&) {
    throw DegenerateError("proxy metric is constant over the evaluated curves");
  }
}

// Trapezoidal area with the bitrate axis mapped affinely onto [0,1].
inline double curve_area(const RDCurve& c) {
  if (c.points.size() < 2) throw ParameterError(c.describe() + " needs at least 2 points");
  const double lo = c.points.front().bitrate, hi = c.points.back().bitrate;
  const double width = hi - lo;
  double area = 0.0;
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const double dx = (c.points[i].bitrate - c.points[i - 1].bitrate) / width;
    area += dx * (c.points[i].score + c.points[i - 1].score) * 0.5;
  }
  return area;
}

inline double interpolate(const std::vector<RDPoint>& pts, double bitrate) {
  if (bitrate <= pts.front().bitrate) return pts.front().score;
  if (bitrate >= pts.back().bitrate) return pts.back().score;
  const auto it = std::upper_bound(pts.begin(), pts.end(), bitrate,
                                   [](double b, const RDPoint& p) { return b < p.bitrate; });
  const RDPoint& a = *(it - 1);
  const RDPoint& b = *it;
  if (a.bitrate == bitrate) return a.score;
  const double t = (bitrate - a.bitrate) / (b.bitrate - a.bitrate);
  return a.score + t * (b.score - a.score);
}

// Piecewise-linear restriction to [lo, hi] with interpolated endpoints.
inline RDCurve restrict_curve(const RDCurve& c, double lo, double hi) {
  RDCurve out;
  out.video = c.video;
  out.metric = c.metric;
  out.amplitude = c.amplitude;
  out.points.push_back({lo, interpolate(c.points, lo)});
  for (const auto& p : c.points) {
    if (p.bitrate > lo && p.bitrate < hi) out.points.push_back(p);
  }
  out.points.push_back({hi, interpolate(c.points, hi)});
  return out;
}

// area(attacked) - area(baseline) over the bitrate span where both curves
// are defined.
inline double gain(const RDCurve& attacked, const RDCurve& baseline) {
  attacked.validate();
  baseline.validate();
  const double lo = std::max(attacked.points.front().bitrate, baseline.points.front().bitrate);
  const double hi = std::min(attacked.points.back().bitrate, baseline.points.back().bitrate);
  if (!(hi > lo)) {
    throw NoOverlapError(attacked.describe() + " and " + baseline.describe() + " share no bitrate range");
  }
  return curve_area(restrict_curve(attacked, lo, hi)) - curve_area(restrict_curve(baseline, lo, hi));
}

// Positive when the attacked proxy curve lies below the baseline.
inline double proxy_loss(const RDCurve& attacked, const RDCurve& baseline) { return -gain(attacked, baseline); }

struct DependencePoint {
  double proxy_loss = 0.0;
  double target_gain = 0.0;
  double amplitude = 0.0;
  friend bool operator==(const DependencePoint&, const DependencePoint&) = default;
};

// gains/losses indexed [video][amplitude]; nullopt marks a missing cell.
struct GainLossGrid {
  std::vector<std::string> videos;
  std::vector<double> amplitudes;
  std::vector<std::vector<std::optional<double>>> gains;
  std::vector<std::vector<std::optional<double>>> losses;
};

inline std::vector<DependencePoint> build_dependence(const GainLossGrid& grid) {
  const std::size_t n = grid.videos.size(), k = grid.amplitudes.size();
  if (n == 0 || k == 0) throw GridError("dependence needs at least one video and one amplitude");
  if (grid.gains.size() != n || grid.losses.size() != n) throw GridError("gain/loss grid does not cover every video");
  std::vector<DependencePoint> out(k);
  for (std::size_t a = 0; a < k; ++a) {
    double g = 0.0, l = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const bool have = a < grid.gains[v].size() && a < grid.losses[v].size() && grid.gains[v][a] &&
                        grid.losses[v][a];
      if (!have) {
        throw GridError("incomplete evaluation grid: no result for video " + grid.videos[v] + " at amplitude " +
                        format_real(grid.amplitudes[a]));
      }
      g += *grid.gains[v][a];
      l += *grid.losses[v][a];
    }
    out[a] = {l / static_cast<double>(n), g / static_cast<double>(n), grid.amplitudes[a]};
  }
  return out;
}

struct StabilityScores {
  double interval_lo = 0.0;
  double interval_hi = 0.0;
  std::map<std::string, double> scores;
};

namespace detail {

inline double interpolate_dependence(const std::vector<DependencePoint>& pts, double loss) {
  if (loss <= pts.front().proxy_loss) return pts.front().target_gain;
  if (loss >= pts.back().proxy_loss) return pts.back().target_gain;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (loss <= pts[i].proxy_loss) {
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      if (b.proxy_loss == a.proxy_loss) return b.target_gain;
      const double t = (loss - a.proxy_loss) / (b.proxy_loss - a.proxy_loss);
      return a.target_gain + t * (b.target_gain - a.target_gain);
    }
  }
  return pts.back().target_gain;
}

}  // namespace detail

inline double dependence_area(std::vector<DependencePoint> pts, double lo, double hi) {
  std::stable_sort(pts.begin(), pts.end(),
                   [](const DependencePoint& a, const DependencePoint& b) { return a.proxy_loss < b.proxy_loss; });
  if (!(hi > lo)) return 0.0;
  std::vector<std::pair<double, double>> xs;
  xs.emplace_back(lo, detail::interpolate_dependence(pts, lo));
  for (const auto& p : pts) {
    if (p.proxy_loss > lo && p.proxy_loss < hi) xs.emplace_back(p.proxy_loss, p.target_gain);
  }
  xs.emplace_back(hi, detail::interpolate_dependence(pts, hi));
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    area += (xs[i].first - xs[i - 1].first) * (xs[i].second + xs[i - 1].second) * 0.5;
  }
  return area;
}

// -100 x area of gain over proxy loss on the interval where every metric's
// dependence is defined.
inline StabilityScores stability_score(const std::map<std::string, std::vector<DependencePoint>>& dependences) {
  if (dependences.empty()) throw ParameterError("stability_score needs at least one metric");
  StabilityScores out;
  out.interval_lo = -std::numeric_limits<double>::infinity();
  out.interval_hi = std::numeric_limits<double>::infinity();
  std::string ranges;
  for (const auto& [name, pts] : dependences) {
    if (pts.empty()) throw ParameterError("metric " + name + " has no dependence points");
    double lo = pts.front().proxy_loss, hi = lo;
    for (const auto& p : pts) {
      if (!std::isfinite(p.proxy_loss) || !std::isfinite(p.target_gain)) {
        throw ParameterError("metric " + name + " has a non-finite dependence point");
      }
      lo = std::min(lo, p.proxy_loss);
      hi = std::max(hi, p.proxy_loss);
    }
    out.interval_lo = std::max(out.interval_lo, lo);
    out.interval_hi = std::min(out.interval_hi, hi);
    ranges += (ranges.empty() ? "" : ", ") + name + " [" + format_real(lo) + ", " + format_real(hi) + "]";
  }
  if (out.interval_lo > out.interval_hi) {
    throw IntervalError("proxy-loss ranges have no common interval: " + ranges);
  }
  for (const auto& [name, pts] : dependences) {
    // Adding 0.0 turns -0.0 into +0.0.
    out.scores[name] = -100.0 * dependence_area(pts, out.interval_lo, out.interval_hi) + 0.0;
  }
  return out;
}

}  // namespace uapq
