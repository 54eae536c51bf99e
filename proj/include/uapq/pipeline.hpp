#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uapq/attack.hpp"
#include "uapq/codec.hpp"
#include "uapq/error.hpp"
#include "uapq/image.hpp"
#include "uapq/metrics.hpp"
#include "uapq/parallel.hpp"
#include "uapq/stability.hpp"

namespace uapq {

inline constexpr const char* kReportSchema = "uapg-report/1";

// ---------------------------------------------------------------------------
// Content hashing

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t n) {
    EVP_DigestUpdate(ctx_, data, n);
    return *this;
  }
  Sha256& update(std::string_view s) { return update(s.data(), s.size()); }
  Sha256& update(std::span<const double> values) {
    for (double v : values) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      std::uint8_t le[8];
      for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(bits >> (8 * i));
      update(le, 8);
    }
    return *this;
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kHex[md[i] >> 4];
      out += kHex[md[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string content_hash(const VideoFrames& v) {
  Sha256 h;
  h.update("video:" + to_string(v.shape()) + ":" + std::to_string(v.frames.size()) + ":" + format_real(v.frame_rate));
  for (const auto& f : v.frames) h.update(f.values());
  return h.hex();
}

inline std::string content_hash(const Perturbation& p) {
  Sha256 h;
  h.update("uapp:" + to_string(p.shape()) + ":" + format_real(p.clip_bound()));
  h.update(p.tile().values());
  return h.hex();
}

// ---------------------------------------------------------------------------
// On-disk score cache: one JSON file per (video variant, rate point), holding
// the measured bitrate, the proxy score and every target score computed so
// far for that compressed variant.

class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::optional<nlohmann::json> load(const std::string& key) const {
    std::lock_guard lock(mutex_);
    std::ifstream in(dir_ / (key + ".json"));
    if (!in) return std::nullopt;
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // a torn write is treated as a miss
    }
  }

  void store(const std::string& key, const nlohmann::json& entry) {
    std::lock_guard lock(mutex_);
    const auto tmp = dir_ / (key + ".json.tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << entry.dump() << '\n';
    }
    std::filesystem::rename(tmp, dir_ / (key + ".json"));
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Inputs

struct VideoSource {
  std::string id;
  VideoFrames video;
};

struct TargetSpec {
  std::string label;  // unique within a run
  MetricHandle metric;
  Perturbation perturbation;
};

struct EvalConfig {
  std::vector<double> amplitudes{0.02, 0.04, 0.06, 0.08};
  std::vector<CodecSpec> rate_points;
  double psnr_cap = kDefaultPsnrCap;
  std::size_t jobs = 1;

  void validate() const {
    if (amplitudes.empty()) throw ConfigError("at least one amplitude is required");
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
      if (!(amplitudes[i] > 0.0)) throw ConfigError("amplitudes must be positive");
      if (i > 0 && !(amplitudes[i] > amplitudes[i - 1])) throw ConfigError("amplitudes must be strictly increasing");
    }
    if (rate_points.size() < 2) throw ConfigError("at least two rate points are needed to form an RD curve");
    for (const auto& r : rate_points) {
      try {
        r.validate();
      } catch (const ParameterError& e) {
        throw ConfigError(e.what());
      }
    }
  }
};

struct PipelineStats {
  std::uint64_t metric_evaluations = 0;
  std::uint64_t score_cache_hits = 0;
  std::uint64_t score_cache_misses = 0;
  std::uint64_t compressions = 0;
};

// ---------------------------------------------------------------------------
// Report

struct RawPoint {
  double bitrate = 0.0;
  double target = 0.0;
  double proxy = 0.0;
  friend bool operator==(const RawPoint&, const RawPoint&) = default;
};

// Raw grid for one target: points[video][variant][rate], variant 0 being the
// unattacked run and variant k the k-th amplitude.
struct RawRun {
  std::string label;
  std::string metric;
  std::vector<std::vector<std::vector<RawPoint>>> points;
};

struct MetricAnalysis {
  std::string label;
  std::string metric;
  std::vector<RDCurve> target_curves;  // video-major, variant-minor
  std::vector<RDCurve> proxy_curves;
  std::vector<RDCurve> target_normalized;
  std::vector<RDCurve> proxy_normalized;
  ScoreRange target_range;
  std::vector<std::vector<double>> gains;   // [video][amplitude]
  std::vector<std::vector<double>> losses;  // [video][amplitude]
  std::vector<DependencePoint> dependence;
  double stability_score = 0.0;
};

struct StabilityReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<double> amplitudes;
  std::vector<std::string> videos;
  std::vector<std::string> rate_points;
  double psnr_cap = kDefaultPsnrCap;
  ScoreRange proxy_range;
  double interval_lo = 0.0;
  double interval_hi = 0.0;
  std::vector<MetricAnalysis> metrics;
  std::vector<RawRun> raw;
};

namespace detail {

inline RDCurve make_curve(const std::vector<RawPoint>& pts, bool proxy, const std::string& video,
                          const std::string& metric, std::optional<double> amplitude) {
  RDCurve c;
  c.video = video;
  c.metric = metric;
  c.amplitude = amplitude;
  for (const auto& p : pts) c.points.push_back({p.bitrate, proxy ? p.proxy : p.target});
  std::stable_sort(c.points.begin(), c.points.end(),
                   [](const RDPoint& a, const RDPoint& b) { return a.bitrate < b.bitrate; });
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw GridError(e.what());
  }
  return c;
}

}  // namespace detail

// Derives every normalised curve, gain, loss, dependence point and score
// from the raw grid. A report is always rebuilt through this function, so
// re-running it on the stored raw grid reproduces the stored values.
inline StabilityReport analyze(std::vector<double> amplitudes, std::vector<std::string> videos,
                               std::vector<std::string> rate_points, std::vector<RawRun> raw,
                               double psnr_cap = kDefaultPsnrCap) {
  StabilityReport rep;
  rep.amplitudes = std::move(amplitudes);
  rep.videos = std::move(videos);
  rep.rate_points = std::move(rate_points);
  rep.psnr_cap = psnr_cap;
  rep.raw = std::move(raw);
  const std::size_t n = rep.videos.size(), k = rep.amplitudes.size();
  if (rep.raw.empty()) throw GridError("no target metrics in the evaluation");

  std::vector<RDCurve> all_proxy;
  for (const auto& run : rep.raw) {
    if (run.points.size() != n) throw GridError("metric " + run.label + ": missing videos in the raw grid");
    MetricAnalysis m;
    m.label = run.label;
    m.metric = run.metric;
    for (std::size_t v = 0; v < n; ++v) {
      if (run.points[v].size() != k + 1) {
        throw GridError("metric " + run.label + ", video " + rep.videos[v] + ": missing amplitude runs");
      }
      for (std::size_t a = 0; a <= k; ++a) {
        const std::optional<double> amp = a == 0 ? std::nullopt : std::optional<double>(rep.amplitudes[a - 1]);
        m.target_curves.push_back(detail::make_curve(run.points[v][a], false, rep.videos[v], run.label, amp));
        m.proxy_curves.push_back(detail::make_curve(run.points[v][a], true, rep.videos[v], run.label, amp));
      }
    }
    all_proxy.insert(all_proxy.end(), m.proxy_curves.begin(), m.proxy_curves.end());
    rep.metrics.push_back(std::move(m));
  }

  const NormalizedCurves proxy_norm = normalize_proxy_curves(all_proxy);
  rep.proxy_range = proxy_norm.range;

  std::map<std::string, std::vector<DependencePoint>> deps;
  std::size_t proxy_offset = 0;
  for (auto& m : rep.metrics) {
    const NormalizedCurves tn = normalize_target_curves(m.target_curves);
    m.target_normalized = tn.curves;
    m.target_range = tn.range;
    m.proxy_normalized.assign(proxy_norm.curves.begin() + static_cast<std::ptrdiff_t>(proxy_offset),
                              proxy_norm.curves.begin() + static_cast<std::ptrdiff_t>(proxy_offset + m.proxy_curves.size()));
    proxy_offset += m.proxy_curves.size();

    GainLossGrid grid{rep.videos, rep.amplitudes, {}, {}};
    m.gains.assign(n, std::vector<double>(k));
    m.losses.assign(n, std::vector<double>(k));
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t base = v * (k + 1);
      std::vector<std::optional<double>> g(k), l(k);
      for (std::size_t a = 0; a < k; ++a) {
        m.gains[v][a] = gain(m.target_normalized[base + a + 1], m.target_normalized[base]);
        m.losses[v][a] = proxy_loss(m.proxy_normalized[base + a + 1], m.proxy_normalized[base]);
        g[a] = m.gains[v][a];
        l[a] = m.losses[v][a];
      }
      grid.gains.push_back(std::move(g));
      grid.losses.push_back(std::move(l));
    }
    m.dependence = build_dependence(grid);
    deps[m.label] = m.dependence;
  }

  const StabilityScores scores = stability_score(deps);
  rep.interval_lo = scores.interval_lo;
  rep.interval_hi = scores.interval_hi;
  for (auto& m : rep.metrics) m.stability_score = scores.scores.at(m.label);
  return rep;
}

// ---------------------------------------------------------------------------
// Grid evaluation

namespace detail {

struct Variant {
  std::string key;
  std::size_t video = 0;
  const Perturbation* perturbation = nullptr;  // nullptr = unattacked
  double amplitude = 0.0;
  std::set<std::string> metrics;  // metric names needing scores
};

struct RateResult {
  double bitrate = 0.0;
  double proxy = 0.0;
  std::map<std::string, double> scores;
};

inline VideoFrames make_variant_video(const VideoFrames& pristine, const Variant& var) {
  if (var.perturbation == nullptr || var.perturbation->max_abs() == 0.0) return pristine;
  const Perturbation scaled = scale_to_amplitude(*var.perturbation, var.amplitude);
  std::vector<ImageTensor> frames;
  frames.reserve(pristine.frames.size());
  for (const auto& f : pristine.frames) frames.push_back(apply_perturbation(f, scaled));
  return VideoFrames(std::move(frames), pristine.frame_rate);
}

inline double mean_psnr(const VideoFrames& ref, const VideoFrames& dist, double cap) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.frames.size(); ++i) acc += psnr(ref.frames[i], dist.frames[i], cap);
  return acc / static_cast<double>(ref.frames.size());
}

}  // namespace detail

// Applies each target's perturbation at every amplitude (plus the unattacked
// run), compresses at every rate point, scores the target metric (frame
// mean) and PSNR against the pristine frames, then analyses the grid.
// Variants shared between targets (same video, perturbation and amplitude)
// are compressed once. `cache` may be null.
inline StabilityReport run_stability_pipeline(const EvalConfig& cfg, std::span<const VideoSource> videos,
                                              std::span<const TargetSpec> targets, ScoreCache* cache = nullptr,
                                              PipelineStats* stats = nullptr) {
  cfg.validate();
  if (videos.empty()) throw ConfigError("at least one video is required");
  if (targets.empty()) throw ConfigError("at least one target metric is required");
  std::set<std::string> labels, video_ids;
  std::map<std::string, MetricHandle> metrics_by_name;
  for (const auto& t : targets) {
    if (!labels.insert(t.label).second) throw ConfigError("duplicate target label " + t.label);
    if (!t.metric) throw ConfigError("target " + t.label + " has no metric");
    metrics_by_name[t.metric->name()] = t.metric;
  }
  for (const auto& v : videos) {
    if (!video_ids.insert(v.id).second) throw ConfigError("duplicate video id " + v.id);
  }

  std::vector<std::string> video_hash;
  for (const auto& v : videos) video_hash.push_back(content_hash(v.video));

  // variant_of[t][v][a] indexes into `variants`.
  std::vector<detail::Variant> variants;
  std::map<std::string, std::size_t> by_key;
  std::vector<std::vector<std::vector<std::size_t>>> variant_of(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const std::string phash = content_hash(targets[t].perturbation);
    variant_of[t].resize(videos.size());
    for (std::size_t v = 0; v < videos.size(); ++v) {
      for (std::size_t a = 0; a <= cfg.amplitudes.size(); ++a) {
        detail::Variant var;
        var.video = v;
        if (a == 0) {
          var.key = video_hash[v] + ":none";
        } else {
          var.perturbation = &targets[t].perturbation;
          var.amplitude = cfg.amplitudes[a - 1];
          var.key = video_hash[v] + ":" + phash + ":" + format_real(var.amplitude);
        }
        auto [it, inserted] = by_key.try_emplace(var.key, variants.size());
        if (inserted) variants.push_back(std::move(var));
        variants[it->second].metrics.insert(targets[t].metric->name());
        variant_of[t][v].push_back(it->second);
      }
    }
  }

  std::vector<std::vector<detail::RateResult>> results(variants.size());
  std::vector<PipelineStats> task_stats(variants.size());
  parallel_for(variants.size(), cfg.jobs, [&](std::size_t i) {
    const detail::Variant& var = variants[i];
    const VideoSource& src = videos[var.video];
    std::optional<VideoFrames> attacked;
    PipelineStats& st = task_stats[i];
    for (const auto& rate : cfg.rate_points) {
      const std::string ctx = "[video=" + src.id + ", amplitude=" +
                              (var.perturbation ? format_real(var.amplitude) : std::string("none")) +
                              ", rate=" + rate.label() + "]";
      try {
        const std::string key =
            Sha256().update(var.key + "|" + rate.label() + "|psnr_cap=" + format_real(cfg.psnr_cap)).hex();
        nlohmann::json entry = nlohmann::json::object();
        if (cache != nullptr) {
          if (auto hit = cache->load(key)) entry = std::move(*hit);
        }
        detail::RateResult rr;
        std::optional<CompressedResult> compressed;
        auto compress = [&]() -> const CompressedResult& {
          if (!compressed) {
            if (!attacked) attacked = detail::make_variant_video(src.video, var);
            compressed = encode_decode(*attacked, rate);
            ++st.compressions;
          }
          return *compressed;
        };
        if (entry.contains("bitrate") && entry.contains("proxy")) {
          rr.bitrate = entry.at("bitrate").get<double>();
          rr.proxy = entry.at("proxy").get<double>();
        } else {
          const auto& c = compress();
          rr.bitrate = c.measured_bitrate;
          rr.proxy = detail::mean_psnr(src.video, c.video, cfg.psnr_cap);
          entry["bitrate"] = rr.bitrate;
          entry["proxy"] = rr.proxy;
        }
        bool dirty = compressed.has_value();
        if (!entry.contains("scores")) entry["scores"] = nlohmann::json::object();
        for (const auto& name : var.metrics) {
          const auto cached = entry["scores"].find(name);
          if (cached != entry["scores"].end()) {
            rr.scores[name] = cached->get<double>();
            ++st.score_cache_hits;
            continue;
          }
          const VideoFrames& decoded = compress().video;
          const double s = score_video(*metrics_by_name.at(name), decoded);
          st.metric_evaluations += decoded.frames.size();
          ++st.score_cache_misses;
          rr.scores[name] = s;
          entry["scores"][name] = s;
          dirty = true;
        }
        if (cache != nullptr && dirty) cache->store(key, entry);
        results[i].push_back(std::move(rr));
      } catch (const Error&) {
        rethrow_with_context(ctx);
      }
    }
  });

  if (stats != nullptr) {
    for (const auto& st : task_stats) {
      stats->metric_evaluations += st.metric_evaluations;
      stats->score_cache_hits += st.score_cache_hits;
      stats->score_cache_misses += st.score_cache_misses;
      stats->compressions += st.compressions;
    }
  }

  std::vector<RawRun> raw;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    RawRun run;
    run.label = targets[t].label;
    run.metric = targets[t].metric->name();
    run.points.resize(videos.size());
    for (std::size_t v = 0; v < videos.size(); ++v) {
      for (std::size_t a = 0; a <= cfg.amplitudes.size(); ++a) {
        const auto& rr = results[variant_of[t][v][a]];
        std::vector<RawPoint> pts;
        for (const auto& r : rr) pts.push_back({r.bitrate, r.scores.at(run.metric), r.proxy});
        run.points[v].push_back(std::move(pts));
      }
    }
    raw.push_back(std::move(run));
  }

  std::vector<std::string> ids, rates;
  for (const auto& v : videos) ids.push_back(v.id);
  for (const auto& r : cfg.rate_points) rates.push_back(r.label());
  return analyze(cfg.amplitudes, ids, rates, std::move(raw), cfg.psnr_cap);
}

// ---------------------------------------------------------------------------
// Serialisation

namespace detail {

inline nlohmann::json curve_json(const RDCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({p.bitrate, p.score});
  return {{"video", c.video},
          {"amplitude", c.amplitude ? nlohmann::json(*c.amplitude) : nlohmann::json(nullptr)},
          {"points", std::move(pts)}};
}

}  // namespace detail

inline nlohmann::json to_json(const StabilityReport& r) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["config"] = r.config;
  j["amplitudes"] = r.amplitudes;
  j["videos"] = r.videos;
  j["rate_points"] = r.rate_points;
  j["proxy"] = {{"metric", "PSNR"},
                {"cap_db", r.psnr_cap},
                {"min", r.proxy_range.min},
                {"max", r.proxy_range.max},
                {"loss_sign", "baseline_minus_attacked"}};
  j["common_interval"] = {{"lo", r.interval_lo}, {"hi", r.interval_hi}};
  nlohmann::json metrics = nlohmann::json::array();
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    const MetricAnalysis& m = r.metrics[i];
    const RawRun& run = r.raw[i];
    nlohmann::json raw = nlohmann::json::array();
    for (std::size_t v = 0; v < run.points.size(); ++v) {
      for (std::size_t a = 0; a < run.points[v].size(); ++a) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : run.points[v][a]) pts.push_back({{"bitrate", p.bitrate}, {"target", p.target}, {"proxy", p.proxy}});
        raw.push_back({{"video", r.videos[v]},
                       {"amplitude", a == 0 ? nlohmann::json(nullptr) : nlohmann::json(r.amplitudes[a - 1])},
                       {"points", std::move(pts)}});
      }
    }
    nlohmann::json tn = nlohmann::json::array(), pn = nlohmann::json::array();
    for (const auto& c : m.target_normalized) tn.push_back(detail::curve_json(c));
    for (const auto& c : m.proxy_normalized) pn.push_back(detail::curve_json(c));
    nlohmann::json dep = nlohmann::json::array();
    for (const auto& d : m.dependence) {
      dep.push_back({{"amplitude", d.amplitude}, {"proxy_loss", d.proxy_loss}, {"target_gain", d.target_gain}});
    }
    metrics.push_back({{"label", m.label},
                       {"metric", m.metric},
                       {"target_min", m.target_range.min},
                       {"target_max", m.target_range.max},
                       {"raw_curves", std::move(raw)},
                       {"normalized_target_curves", std::move(tn)},
                       {"normalized_proxy_curves", std::move(pn)},
                       {"gains", m.gains},
                       {"losses", m.losses},
                       {"dependence", std::move(dep)},
                       {"stability_score", m.stability_score}});
  }
  j["metrics"] = std::move(metrics);
  return j;
}

// Structural check against the published report schema
// (docs/report.schema.json). Throws FormatError naming the first violation.
inline void validate_report(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw FormatError("report schema violation: " + what, 0); };
  auto need = [&](const nlohmann::json& o, const char* key, auto pred, const char* type) -> const nlohmann::json& {
    if (!o.is_object() || !o.contains(key)) fail(std::string("missing field '") + key + "'");
    const auto& v = o.at(key);
    if (!pred(v)) fail(std::string("field '") + key + "' must be " + type);
    return v;
  };
  auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };
  auto is_obj = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_amp = [](const nlohmann::json& v) { return v.is_null() || v.is_number(); };

  if (need(j, "schema", is_str, "a string") != kReportSchema) fail("unknown schema version");
  need(j, "config", is_obj, "an object");
  const auto& amps = need(j, "amplitudes", is_arr, "an array");
  const auto& vids = need(j, "videos", is_arr, "an array");
  need(j, "rate_points", is_arr, "an array");
  const auto& proxy = need(j, "proxy", is_obj, "an object");
  for (const char* k : {"cap_db", "min", "max"}) need(proxy, k, is_num, "a number");
  const auto& ci = need(j, "common_interval", is_obj, "an object");
  need(ci, "lo", is_num, "a number");
  need(ci, "hi", is_num, "a number");
  const auto& ms = need(j, "metrics", is_arr, "an array");
  if (ms.empty()) fail("metrics must be non-empty");
  const std::size_t n_curves = vids.size() * (amps.size() + 1);
  for (const auto& m : ms) {
    need(m, "label", is_str, "a string");
    need(m, "metric", is_str, "a string");
    need(m, "target_min", is_num, "a number");
    need(m, "target_max", is_num, "a number");
    need(m, "stability_score", is_num, "a number");
    for (const char* k : {"raw_curves", "normalized_target_curves", "normalized_proxy_curves"}) {
      const auto& curves = need(m, k, is_arr, "an array");
      if (curves.size() != n_curves) fail(std::string(k) + " must hold videos x (amplitudes + 1) curves");
      for (const auto& c : curves) {
        need(c, "video", is_str, "a string");
        need(c, "amplitude", is_amp, "a number or null");
        const auto& pts = need(c, "points", is_arr, "an array");
        if (pts.size() < 2) fail("curves need at least two points");
      }
    }
    for (const char* k : {"gains", "losses"}) {
      const auto& g = need(m, k, is_arr, "an array");
      if (g.size() != vids.size()) fail(std::string(k) + " must have one row per video");
      for (const auto& row : g) {
        if (!row.is_array() || row.size() != amps.size()) fail(std::string(k) + " rows must have one entry per amplitude");
      }
    }
    const auto& dep = need(m, "dependence", is_arr, "an array");
    if (dep.size() != amps.size()) fail("dependence must have one point per amplitude");
    for (const auto& d : dep) {
      for (const char* k : {"amplitude", "proxy_loss", "target_gain"}) need(d, k, is_num, "a number");
    }
  }
}

// Rebuilds a report from the raw grid stored in its JSON form.
inline StabilityReport report_from_json(const nlohmann::json& j) {
  validate_report(j);
  std::vector<RawRun> raw;
  const auto amps = j.at("amplitudes").get<std::vector<double>>();
  const auto vids = j.at("videos").get<std::vector<std::string>>();
  for (const auto& m : j.at("metrics")) {
    RawRun run;
    run.label = m.at("label").get<std::string>();
    run.metric = m.at("metric").get<std::string>();
    run.points.assign(vids.size(), {});
    std::size_t idx = 0;
    for (const auto& c : m.at("raw_curves")) {
      std::vector<RawPoint> pts;
      for (const auto& p : c.at("points")) {
        pts.push_back({p.at("bitrate").get<double>(), p.at("target").get<double>(), p.at("proxy").get<double>()});
      }
      run.points[idx / (amps.size() + 1)].push_back(std::move(pts));
      ++idx;
    }
    raw.push_back(std::move(run));
  }
  StabilityReport r = analyze(amps, vids, j.at("rate_points").get<std::vector<std::string>>(), std::move(raw),
                              j.at("proxy").at("cap_db").get<double>());
  r.config = j.at("config");
  return r;
}

inline std::string report_to_string(const StabilityReport& r) {
  const nlohmann::json j = to_json(r);
  validate_report(j);
  return j.dump(2) + "\n";
}

inline void write_rd_points_csv(std::ostream& out, const StabilityReport& r) {
  out << "metric,video,amplitude,bitrate,target_score,proxy_score\n";
  for (const auto& run : r.raw) {
    for (std::size_t v = 0; v < run.points.size(); ++v) {
      for (std::size_t a = 0; a < run.points[v].size(); ++a) {
        for (const auto& p : run.points[v][a]) {
          out << run.label << ',' << r.videos[v] << ',' << (a == 0 ? std::string("none") : format_real(r.amplitudes[a - 1]))
              << ',' << format_real(p.bitrate) << ',' << format_real(p.target) << ',' << format_real(p.proxy) << '\n';
        }
      }
    }
  }
}

inline void write_dependence_csv(std::ostream& out, const StabilityReport& r) {
  out << "metric,amplitude,proxy_loss,target_gain\n";
  for (const auto& m : r.metrics) {
    for (const auto& d : m.dependence) {
      out << m.label << ',' << format_real(d.amplitude) << ',' << format_real(d.proxy_loss) << ','
          << format_real(d.target_gain) << '\n';
    }
  }
}

inline void write_scores_csv(std::ostream& out, const StabilityReport& r) {
  out << "metric,stability_score\n";
  for (const auto& m : r.metrics) out << m.label << ',' << format_real(m.stability_score) << '\n';
}

// Metric labels with scores, highest (most stable) first.
inline std::vector<std::pair<std::string, double>> ranked_scores(const StabilityReport& r) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& m : r.metrics) out.emplace_back(m.label, m.stability_score);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace uapq
