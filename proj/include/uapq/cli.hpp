#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.
//
// Exit codes: 0 ok, 2 config, 3 metric/bridge, 4 evaluation grid, 5 codec.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uapq/attack.hpp"
#include "uapq/bridge.hpp"
#include "uapq/codec.hpp"
#include "uapq/config.hpp"
#include "uapq/error.hpp"
#include "uapq/image.hpp"
#include "uapq/metrics.hpp"
#include "uapq/pipeline.hpp"
#include "uapq/raster_io.hpp"
#include "uapq/synthetic.hpp"

namespace uapq::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, config_error = 2, metric_error = 3, grid_error = 4, codec_error = 5 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::capability:
    case ErrorKind::bridge:
      return metric_error;
    case ErrorKind::grid:
    case ErrorKind::degenerate:
    case ErrorKind::interval:
    case ErrorKind::no_overlap:
      return grid_error;
    case ErrorKind::codec:
      return codec_error;
    default:
      return config_error;
  }
}

// Merged settings: the config document with CLI overrides written into it.
// Paths from the config file resolve against the file's directory, paths
// from flags are made absolute against the working directory at parse time.
struct Settings {
  nlohmann::json doc = nlohmann::json::object();
  fs::path base_dir;

  const nlohmann::json& section(const std::string& name) const {
    static const nlohmann::json empty = nlohmann::json::object();
    const auto it = doc.find(name);
    return it == doc.end() ? empty : *it;
  }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }

  std::uint64_t seed() const { return config::get_count(doc, "seed", "seed", 0); }
  std::size_t jobs() const {
    const auto j = config::get_count(doc, "jobs", "jobs", 1);
    if (j == 0) throw ConfigError("jobs must be >= 1");
    return j;
  }
  fs::path out_dir() const { return resolve(config::get_string(doc, "out", "out", "out")); }
};

namespace detail {

inline std::string abs_path(const std::string& p) { return fs::absolute(fs::path(p)).lexically_normal().string(); }

inline bool has_ext(const fs::path& p, const char* ext) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

inline MetricHandle load_metric(const std::string& spec, const std::string& where) {
  if (spec.empty()) throw ConfigError(where + ": no metric given (expected builtin:<name> or external:<command>)");
  try {
    return make_metric(spec);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline std::vector<ImageTensor> load_dataset(const Settings& s, const std::string& spec, std::vector<std::string>& names) {
  if (spec.empty()) throw ConfigError("train.dataset is not set");
  if (const std::size_t n = synthetic::parse_count(spec)) {
    for (std::size_t i = 0; i < n; ++i) names.push_back("synthetic-" + std::to_string(i));
    return synthetic::images(n, s.seed());
  }
  const fs::path dir = s.resolve(spec);
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_ext(e.path(), ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("dataset directory has no .png files: " + dir.string());
  std::vector<ImageTensor> out;
  for (const auto& f : files) {
    out.push_back(io::read_png(f));
    names.push_back(f.filename().string());
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train-uap

inline int cmd_train(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto& sec = s.section("train");
  const std::string where = "train";
  TrainConfig cfg;
  cfg.epochs = config::get_count(sec, "epochs", where, cfg.epochs);
  cfg.batch_size = config::get_count(sec, "batch_size", where, cfg.batch_size);
  cfg.learning_rate = config::get_number(sec, "learning_rate", where, cfg.learning_rate);
  cfg.clip_bound = config::get_number(sec, "clip_bound", where, cfg.clip_bound);
  cfg.shuffle = config::get_bool(sec, "shuffle", where, cfg.shuffle);
  cfg.seed = s.seed();
  cfg.jobs = s.jobs();
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  const std::size_t tile = config::get_count(sec, "tile", where, 256);
  if (tile == 0) throw ConfigError("train.tile must be >= 1");

  std::vector<std::string> names;
  const std::vector<ImageTensor> raw = detail::load_dataset(s, config::get_string(sec, "dataset", where), names);
  const MetricHandle metric = detail::load_metric(config::get_string(sec, "metric", where), "train.metric");

  TrainingSet set = make_training_set(raw, Shape{tile, tile, 3}, names);
  for (const auto& a : set.adjustments) err << "note: " << a << '\n';

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train_uap(*metric, set.images, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path uap = s.resolve(config::get_string(sec, "output", where, (s.out_dir() / "uap.uapp").string()));
  const fs::path log = s.resolve(config::get_string(sec, "log", where, (s.out_dir() / "train_log.csv").string()));
  io::write_perturbation(uap, result.perturbation);
  std::ostringstream csv;
  write_training_log(csv, result.log);
  detail::write_text(log, csv.str());

  out << "metric: " << metric->name() << '\n';
  out << "images: " << set.images.size() << " (" << set.adjustments.size() << " adjusted)\n";
  out << "steps: " << result.log.size() << '\n';
  out << "final max|p|: " << format_real(result.perturbation.max_abs()) << '\n';
  out << "final epoch mean loss: " << format_real(result.epoch_mean_loss.back()) << '\n';
  out << "perturbation: " << uap.string() << '\n';
  out << "log: " << log.string() << '\n';
  err << "wall_time_s: " << secs << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// apply-uap

inline ImageTensor apply_one(const ImageTensor& img, const Perturbation& p, bool csf, std::size_t window) {
  if (!csf) return apply_perturbation(img, p);
  return apply_perturbation(img, p, contrast_mask(img, window));
}

inline int cmd_apply(const Settings& s, std::ostream& out, std::ostream& /*err*/) {
  const auto& sec = s.section("apply");
  const std::string where = "apply";
  const std::string uap_s = config::get_string(sec, "uap", where);
  const std::string in_s = config::get_string(sec, "input", where);
  const std::string out_s = config::get_string(sec, "output", where);
  if (uap_s.empty()) throw ConfigError("apply.uap is not set");
  if (in_s.empty()) throw ConfigError("apply.input is not set");
  if (out_s.empty()) throw ConfigError("apply.output is not set");
  const auto* amp_v = config::find(sec, "amplitude");
  if (amp_v == nullptr) throw ConfigError("apply.amplitude is not set");
  const double amplitude = config::get_number(sec, "amplitude", where, 0.0);
  if (!(amplitude > 0.0)) throw ConfigError("apply.amplitude must be > 0 (got " + format_real(amplitude) + ")");
  const bool csf = config::get_bool(sec, "csf", where, false);
  const std::size_t window = config::get_count(sec, "window", where, 7);

  const fs::path uap_path = s.resolve(uap_s), in = s.resolve(in_s), dst = s.resolve(out_s);
  if (!fs::exists(uap_path)) throw ConfigError("perturbation file not found: " + uap_path.string());
  if (!fs::exists(in)) throw ConfigError("input not found: " + in.string());
  const Perturbation p = io::read_perturbation(uap_path);
  Perturbation scaled;
  try {
    scaled = scale_to_amplitude(p, amplitude);
  } catch (const DegenerateError& e) {
    throw ConfigError(uap_path.string() + ": " + e.what());
  }

  std::size_t frames = 1;
  try {
    if (detail::has_ext(in, ".y4m")) {
      const VideoFrames v = io::read_y4m(in);
      std::vector<ImageTensor> res;
      for (const auto& f : v.frames) res.push_back(apply_one(f, scaled, csf, window));
      frames = res.size();
      io::write_y4m(dst, VideoFrames(std::move(res), v.frame_rate));
    } else {
      io::write_png(dst, apply_one(io::read_png(in), scaled, csf, window));
    }
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("apply: ") + e.what());
  }
  out << "applied " << uap_path.filename().string() << " at amplitude " << format_real(amplitude)
      << (csf ? " with contrast mask" : "") << " to " << frames << " frame(s)\n";
  out << "metric evaluations: 0\n";
  out << "output: " << dst.string() << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// attack-image

inline int cmd_attack(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto& sec = s.section("attack");
  const std::string where = "attack";
  MadcConfig cfg;
  cfg.steps = config::get_count(sec, "steps", where, cfg.steps);
  cfg.mse_budget = config::get_number(sec, "budget", where, cfg.mse_budget);
  cfg.step_size = config::get_number(sec, "step_size", where, cfg.step_size);
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  const std::string in_s = config::get_string(sec, "input", where);
  if (in_s.empty()) throw ConfigError("attack.input is not set");
  ImageTensor img;
  if (const std::size_t n = synthetic::parse_count(in_s)) {
    img = synthetic::image(uapq::detail::splitmix64(s.seed()) + n - 1);
  } else {
    const fs::path in = s.resolve(in_s);
    if (!fs::exists(in)) throw ConfigError("input not found: " + in.string());
    img = io::read_png(in);
  }
  const MetricHandle metric = detail::load_metric(config::get_string(sec, "metric", where), "attack.metric");

  metric->reset_counts();
  const auto t0 = std::chrono::steady_clock::now();
  const MadcResult r = madc_attack(*metric, img, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const EvaluationCounts c = metric->counts();

  const std::string dst = config::get_string(sec, "output", where);
  if (!dst.empty()) io::write_png(s.resolve(dst), r.image);

  out << "metric: " << metric->name() << '\n';
  out << "score_before: " << format_real(r.initial_score) << '\n';
  out << "score_after: " << format_real(r.final_score) << '\n';
  out << "gain: " << format_real(r.final_score - r.initial_score) << '\n';
  out << "mse: " << format_real(r.mse) << " (budget " << format_real(cfg.mse_budget) << ")\n";
  out << "best_step: " << r.best_step << '\n';
  if (r.zero_gradient) out << "zero_gradient: true\n";
  out << "evaluations: " << c.total() << " (scores " << c.scores << ", gradients " << c.gradients << ")\n";
  err << "wall_time_s: " << secs << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// eval-stability

struct EvalPlan {
  EvalConfig cfg;
  std::vector<VideoSource> videos;
  std::vector<TargetSpec> targets;
  nlohmann::json effective;
};

inline EvalPlan plan_eval(const Settings& s) {
  EvalPlan plan;
  const auto& ev = s.section("eval");
  const std::string where = "eval";
  plan.cfg.amplitudes = config::get_numbers(ev, "amplitudes", where, plan.cfg.amplitudes);
  plan.cfg.psnr_cap = config::get_number(ev, "psnr_cap", where, plan.cfg.psnr_cap);
  plan.cfg.jobs = s.jobs();

  nlohmann::json eff_eval = nlohmann::json::object();
  const std::string codec = config::get_string(ev, "codec", where, "mock");
  if (codec == "mock") {
    const auto qs = config::get_numbers(ev, "qualities", where, {0.2, 0.4, 0.6, 0.8});
    for (double q : qs) plan.cfg.rate_points.push_back(CodecSpec::mock(q));
    eff_eval["qualities"] = qs;
  } else if (codec == "external") {
    const std::string enc = config::get_string(ev, "encode", where);
    const std::string dec = config::get_string(ev, "decode", where, "cp {input} {output}");
    const std::string ext = config::get_string(ev, "container", where, "mp4");
    const auto rates = config::get_numbers(ev, "bitrates", where, {200e3, 1e6, 5e6, 12e6});
    for (double b : rates) {
      CodecSpec c = CodecSpec::external(enc, b, dec);
      c.container_ext = ext;
      plan.cfg.rate_points.push_back(std::move(c));
    }
    eff_eval["encode"] = enc;
    eff_eval["decode"] = dec;
    eff_eval["container"] = ext;
    eff_eval["bitrates"] = rates;
  } else {
    throw ConfigError("eval.codec must be \"mock\" or \"external\" (got \"" + codec + "\")");
  }
  eff_eval["codec"] = codec;
  eff_eval["amplitudes"] = plan.cfg.amplitudes;
  eff_eval["psnr_cap"] = plan.cfg.psnr_cap;

  const auto video_specs = config::get_strings(ev, "videos", where);
  if (video_specs.empty()) throw ConfigError("eval.videos is not set");
  for (const auto& v : video_specs) {
    if (const std::size_t n = synthetic::parse_count(v)) {
      for (std::size_t i = 0; i < n; ++i) {
        plan.videos.push_back({"synthetic-" + std::to_string(plan.videos.size()),
                               synthetic::video(uapq::detail::splitmix64(s.seed() ^ 0xC0DECULL) + i)});
      }
      continue;
    }
    const fs::path p = s.resolve(v);
    if (!fs::exists(p)) throw ConfigError("eval.videos: file not found: " + p.string());
    plan.videos.push_back({p.stem().string(), io::read_y4m(p)});
  }
  eff_eval["videos"] = video_specs;

  nlohmann::json eff_metrics = nlohmann::json::object();
  for (const auto& [key, sec] : s.doc.items()) {
    if (key.rfind("metric.", 0) != 0) continue;
    const std::string label = key.substr(7);
    const std::string w = "metric." + label;
    if (label.empty()) throw ConfigError("empty metric label in section [" + key + "]");
    const std::string spec = config::get_string(sec, "spec", w);
    const std::string uap = config::get_string(sec, "uap", w);
    if (uap.empty()) throw ConfigError("metric " + label + ": no perturbation file (uap) configured");
    const fs::path uap_path = s.resolve(uap);
    if (!fs::exists(uap_path)) {
      throw ConfigError("metric " + label + ": perturbation file not found: " + uap_path.string());
    }
    Perturbation p;
    try {
      p = io::read_perturbation(uap_path);
    } catch (const FormatError& e) {
      throw ConfigError("metric " + label + ": " + e.what());
    }
    const std::string hash = content_hash(p);
    plan.targets.push_back({label, detail::load_metric(spec, w + ".spec"), std::move(p)});
    eff_metrics[label] = {{"spec", spec}, {"uap", uap}, {"uap_sha256", hash}};
  }
  if (plan.targets.empty()) throw ConfigError("no [metric.<label>] sections in the config");

  plan.effective = {{"seed", s.seed()}, {"eval", eff_eval}, {"metrics", eff_metrics}, {"proxy", "PSNR (RGB)"}};
  return plan;
}

inline void write_outputs(const StabilityReport& r, const fs::path& dir) {
  detail::write_text(dir / "report.json", report_to_string(r));
  std::ostringstream rd, dep, sc;
  write_rd_points_csv(rd, r);
  write_dependence_csv(dep, r);
  write_scores_csv(sc, r);
  detail::write_text(dir / "rd_points.csv", rd.str());
  detail::write_text(dir / "dependence.csv", dep.str());
  detail::write_text(dir / "stability_scores.csv", sc.str());
}

inline void print_table(std::ostream& out, const StabilityReport& r) {
  std::size_t w = 6;
  for (const auto& m : r.metrics) w = std::max(w, m.label.size());
  out << std::left << std::setw(static_cast<int>(w)) << "metric" << "  stability_score\n";
  for (const auto& [label, score] : ranked_scores(r)) {
    out << std::left << std::setw(static_cast<int>(w)) << label << "  " << format_real(score) << '\n';
  }
}

inline int cmd_eval(const Settings& s, std::ostream& out, std::ostream& err) {
  EvalPlan plan = plan_eval(s);
  const std::string cache_s = config::get_string(s.doc, "cache_dir", "cache_dir");
  const fs::path cache_dir = cache_s.empty() ? s.out_dir() / "cache" : s.resolve(cache_s);
  ScoreCache cache(cache_dir);
  PipelineStats stats;
  const auto t0 = std::chrono::steady_clock::now();
  StabilityReport report = run_stability_pipeline(plan.cfg, plan.videos, plan.targets, &cache, &stats);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.config = plan.effective;
  write_outputs(report, s.out_dir());
  print_table(out, report);
  err << "metric evaluations: " << stats.metric_evaluations << ", score cache hits: " << stats.score_cache_hits
      << ", misses: " << stats.score_cache_misses << ", compressions: " << stats.compressions << '\n';
  err << "wall_time_s: " << secs << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// report-csv

inline int cmd_report_csv(const Settings& s, std::ostream& out, std::ostream& /*err*/) {
  const auto& sec = s.section("report");
  const std::string rep_s = config::get_string(sec, "report", "report");
  const fs::path rep = rep_s.empty() ? s.out_dir() / "report.json" : s.resolve(rep_s);
  if (!fs::exists(rep)) throw ConfigError("report not found: " + rep.string());
  nlohmann::json j;
  try {
    std::ifstream in(rep);
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(rep.string() + ": not valid JSON: " + e.what());
  }
  const StabilityReport r = report_from_json(j);
  const fs::path dir = config::find(s.doc, "out") != nullptr ? s.out_dir() : rep.parent_path();
  std::ostringstream rd, dep, sc;
  write_rd_points_csv(rd, r);
  write_dependence_csv(dep, r);
  write_scores_csv(sc, r);
  detail::write_text(dir / "rd_points.csv", rd.str());
  detail::write_text(dir / "dependence.csv", dep.str());
  detail::write_text(dir / "stability_scores.csv", sc.str());
  print_table(out, r);
  return ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"uapq: universal adversarial perturbations and metric stability scores"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, cache_dir, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  app.add_option("--config", config_path, "TOML-like config file");
  app.add_option("--seed", seed, "seed for every stochastic component");
  app.add_option("--jobs", jobs, "parallel job limit");
  app.add_option("--cache-dir", cache_dir, "score cache directory");
  app.add_option("--out", out_dir, "output directory");

  // Flag values are gathered per (section, key) and merged over the config.
  struct Override {
    std::string section, key;
    std::optional<std::string> str;
    std::optional<double> num;
    std::optional<std::uint64_t> count;
    bool is_path = false;
  };
  std::vector<std::unique_ptr<Override>> overrides;
  auto str_opt = [&](CLI::App* sub, const std::string& flag, const std::string& section, const std::string& key,
                     bool is_path, const std::string& help) {
    overrides.push_back(std::make_unique<Override>(Override{section, key, {}, {}, {}, is_path}));
    sub->add_option(flag, overrides.back()->str, help);
  };
  auto num_opt = [&](CLI::App* sub, const std::string& flag, const std::string& section, const std::string& key,
                     const std::string& help) {
    overrides.push_back(std::make_unique<Override>(Override{section, key, {}, {}, {}, false}));
    sub->add_option(flag, overrides.back()->num, help);
  };
  auto count_opt = [&](CLI::App* sub, const std::string& flag, const std::string& section, const std::string& key,
                       const std::string& help) {
    overrides.push_back(std::make_unique<Override>(Override{section, key, {}, {}, {}, false}));
    sub->add_option(flag, overrides.back()->count, help);
  };

  auto* train = app.add_subcommand("train-uap", "train a universal perturbation against a metric");
  str_opt(train, "--metric", "train", "metric", false, "builtin:<name> or external:<command>");
  str_opt(train, "--dataset", "train", "dataset", true, "directory of PNG images or synthetic:<count>");
  count_opt(train, "--epochs", "train", "epochs", "training epochs");
  count_opt(train, "--batch-size", "train", "batch_size", "images per optimiser step");
  num_opt(train, "--lr", "train", "learning_rate", "Adam learning rate");
  num_opt(train, "--clip", "train", "clip_bound", "perturbation clip bound");
  count_opt(train, "--tile", "train", "tile", "perturbation tile size in pixels");
  str_opt(train, "--output", "train", "output", true, "perturbation file to write");
  str_opt(train, "--log", "train", "log", true, "training log CSV to write");

  auto* apply = app.add_subcommand("apply-uap", "apply a scaled perturbation to an image or Y4M video");
  str_opt(apply, "--uap", "apply", "uap", true, "perturbation file");
  str_opt(apply, "--input", "apply", "input", true, "PNG or Y4M input");
  str_opt(apply, "--output", "apply", "output", true, "output path (same format as input)");
  num_opt(apply, "--amplitude", "apply", "amplitude", "max |p| after scaling (> 0)");
  count_opt(apply, "--window", "apply", "window", "contrast mask window (odd)");
  bool csf = false;
  apply->add_flag("--csf", csf, "scale the perturbation by the local-contrast mask");

  auto* attack = app.add_subcommand("attack-image", "per-image gradient attack under an MSE budget");
  str_opt(attack, "--metric", "attack", "metric", false, "builtin:<name> or external:<command>");
  str_opt(attack, "--input", "attack", "input", true, "PNG image or synthetic:<index>");
  str_opt(attack, "--output", "attack", "output", true, "attacked PNG to write");
  count_opt(attack, "--steps", "attack", "steps", "gradient steps");
  num_opt(attack, "--budget", "attack", "budget", "MSE budget");
  num_opt(attack, "--step-size", "attack", "step_size", "per-step L-inf step");

  auto* eval = app.add_subcommand("eval-stability", "run the stability evaluation from the config");
  auto* report = app.add_subcommand("report-csv", "re-export CSVs from a report JSON");
  str_opt(report, "--report", "report", "report", true, "report JSON (default <out>/report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : config_error;
  }

  try {
    Settings s;
    if (config_path) {
      const fs::path p = fs::absolute(*config_path);
      s.doc = config::load(p);
      s.base_dir = p.parent_path();
    }
    if (seed) s.doc["seed"] = *seed;
    if (jobs) s.doc["jobs"] = *jobs;
    if (cache_dir) s.doc["cache_dir"] = detail::abs_path(*cache_dir);
    if (out_dir) s.doc["out"] = detail::abs_path(*out_dir);
    for (const auto& o : overrides) {
      auto& sec = s.doc[o->section];
      if (!sec.is_object()) sec = nlohmann::json::object();
      if (o->str) sec[o->key] = o->is_path && synthetic::parse_count(*o->str) == 0 ? detail::abs_path(*o->str) : *o->str;
      if (o->num) sec[o->key] = *o->num;
      if (o->count) sec[o->key] = *o->count;
    }
    if (csf) s.doc["apply"]["csf"] = true;

    if (train->parsed()) return cmd_train(s, out, err);
    if (apply->parsed()) return cmd_apply(s, out, err);
    if (attack->parsed()) return cmd_attack(s, out, err);
    if (eval->parsed()) return cmd_eval(s, out, err);
    if (report->parsed()) return cmd_report_csv(s, out, err);
    return config_error;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return config_error;
  }
}

}  // namespace uapq::cli
