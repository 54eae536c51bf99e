// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "uapq/attack.hpp"
#include "uapq/cli.hpp"
#include "uapq/pipeline.hpp"
#include "uapq/stability.hpp"
#include "uapq/synthetic.hpp"

using namespace uapq;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail << ")" << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ImageTensor random_image(std::uint64_t seed, std::size_t h, std::size_t w, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Field f(Shape{h, w, 3});
  for (double& v : f.values()) v = u(rng);
  return ImageTensor::from_field(std::move(f));
}

RDCurve random_curve(std::mt19937_64& rng, std::size_t n, double b_lo, double b_hi) {
  std::uniform_real_distribution<double> ub(b_lo, b_hi), us(0.0, 1.0);
  std::vector<double> b(n);
  for (double& v : b) v = ub(rng);
  std::sort(b.begin(), b.end());
  RDCurve c;
  c.video = "v";
  c.metric = "m";
  for (double v : b) c.points.push_back({v, us(rng)});
  return c;
}

// 1e5-point midpoint sum of the piecewise-linear curve over [lo, hi].
double fine_area(const RDCurve& c, double lo, double hi) {
  const std::size_t n = 100000;
  double acc = 0.0;
  std::size_t seg = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    if (x <= c.points.front().bitrate) {
      acc += c.points.front().score;
      continue;
    }
    if (x >= c.points.back().bitrate) {
      acc += c.points.back().score;
      continue;
    }
    while (c.points[seg].bitrate < x) ++seg;
    const auto& a = c.points[seg - 1];
    const auto& b = c.points[seg];
    acc += a.score + (x - a.bitrate) / (b.bitrate - a.bitrate) * (b.score - a.score);
  }
  return acc / static_cast<double>(n);
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "uapq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

// The shipped desk config with its outputs redirected into `dir`.
fs::path desk_config(const fs::path& dir) {
  std::string text = slurp(fs::path(UAPQ_SOURCE_DIR) / "configs" / "desk.toml");
  if (text.empty()) throw std::runtime_error("configs/desk.toml not found");
  for (auto pos = text.find("../out/desk"); pos != std::string::npos; pos = text.find("../out/desk", pos)) {
    text.replace(pos, 11, "out");
  }
  fs::create_directories(dir);
  std::ofstream(dir / "desk.toml") << text;
  return dir / "desk.toml";
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("uapq-acceptance-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<ImageTensor> default_training_set() { return synthetic::images(64, 2024); }

TrainConfig default_train_config() {
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 8;
  c.learning_rate = 0.001;
  c.clip_bound = 0.1;
  c.seed = 2024;
  return c;
}

}  // namespace

int main() {
  report("gradient correctness of built-in metrics", [] {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string names;
    for (const auto& m : builtin_registry()) {
      if (!m->descriptor().supports_gradient) continue;
      names += (names.empty() ? "" : ",") + m->name();
      for (std::uint64_t s = 0; s < 10; ++s) {
        const auto x = random_image(500 + s, 16, 16, 0.1, 0.9);
        const auto g = m->gradient(x), fd = finite_diff_gradient(*m, x, 1e-4);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double a = g.values()[i];
          worst = std::max(worst, std::abs(a - fd.values()[i]) / std::max(std::abs(a), 1e-6));
        }
      }
    }
    const double t = seconds_since(t0);
    return Outcome{worst <= 1e-4 && t < 10.0,
                   names + " max rel err " + fmt(worst) + " <= 1e-4, " + fmt(t) + " s < 10 s"};
  });

  std::size_t clip_violations = 0, clip_checked = 0;
  auto clip_observer = [&](const TrainStep&, std::span<const double> p) {
    for (double v : p) {
      ++clip_checked;
      clip_violations += (v < -0.1 || v > 0.1);
    }
  };

  report("training loop converges to the analytic optimum at the default settings", [&] {
    const auto t0 = Clock::now();
    const auto data = default_training_set();
    MeanScorer mean;
    LinearScorer lin;
    const auto rm = train_uap(mean, data, default_train_config(), clip_observer);
    const auto rl = train_uap(lin, data, default_train_config(), clip_observer);
    double dev_mean = 0.0, dev_lin = 0.0;
    for (double v : rm.perturbation.tile().values()) dev_mean = std::max(dev_mean, std::abs(v - 0.1));
    const auto w = LinearScorer::weights(rl.perturbation.tile().shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double want = w.values()[i] > 0 ? 0.1 : -0.1;
      dev_lin = std::max(dev_lin, std::abs(rl.perturbation.tile().values()[i] - want));
    }
    const double t = seconds_since(t0);
    return Outcome{dev_mean <= 1e-6 && dev_lin <= 1e-6 && t < 60.0,
                   std::to_string(rm.log.size()) + " Adam steps; max deviation MeanScorer " + fmt(dev_mean) +
                       ", LinearScorer " + fmt(dev_lin) + " (need <= 1e-6), " + fmt(t) + " s"};
  });

  report("clip invariant holds after every training step", [&] {
    // The runs above plus one where the learning rate makes the clip bind.
    TinyConvScorer tiny;
    auto cfg = default_train_config();
    cfg.learning_rate = 0.02;
    cfg.epochs = 3;
    bool bound_hit = false;
    train_uap(tiny, synthetic::images(16, 77, 32, 32), cfg, [&](const TrainStep& s, std::span<const double> p) {
      bound_hit = bound_hit || s.max_abs_p == 0.1;
      clip_observer(s, p);
    });
    return Outcome{clip_violations == 0 && bound_hit,
                   std::to_string(clip_violations) + " violations over " + std::to_string(clip_checked) +
                       " post-step entries; clip reached: " + (bound_hit ? "yes" : "no")};
  });

  report("MADC attack contract", [] {
    TinyConvScorer tiny;
    MadcConfig cfg;
    cfg.steps = 200;
    cfg.mse_budget = 0.0004;
    std::size_t ok = 0;
    double worst_mse = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto x = synthetic::image(3000 + s, 64, 64);
      const auto r = madc_attack(tiny, x, cfg);
      const double m = mse(x, r.image);
      worst_mse = std::max(worst_mse, m);
      ok += (r.final_score >= r.initial_score && m <= cfg.mse_budget + 1e-9);
    }
    MeanScorer mean;
    const auto r = madc_attack(mean, synthetic::image(3100, 64, 64), MadcConfig{});
    const double g = r.final_score - r.initial_score;
    return Outcome{ok == 20 && std::abs(g - 2.0) <= 1e-6,
                   "TinyConvScorer " + std::to_string(ok) + "/20 within contract (max mse " + fmt(worst_mse) +
                       "); MeanScorer gain " + fmt(g) + " vs 2.0 +- 1e-6"};
  });

  report("attack cost accounting", [] {
    MeanScorer mean;
    TrainConfig tc;
    tc.epochs = 1;
    const auto p = scale_to_amplitude(train_uap(mean, synthetic::images(8, 5, 32, 32), tc).perturbation, 0.1);
    mean.reset_counts();
    for (const auto& img : synthetic::images(20, 6, 64, 64)) {
      apply_perturbation(img, p);
      apply_perturbation(img, p, contrast_mask(img));
    }
    const auto uap_evals = mean.counts().total();
    TinyConvScorer tiny;
    bool exact = true;
    std::string counts;
    for (std::size_t steps : {0u, 1u, 17u, 200u}) {
      MadcConfig cfg;
      cfg.steps = steps;
      tiny.reset_counts();
      madc_attack(tiny, synthetic::image(7, 32, 32), cfg);
      exact = exact && tiny.counts().total() == 2 * steps + 1;
      counts += (counts.empty() ? "" : ", ") + std::to_string(steps) + "->" + std::to_string(tiny.counts().total());
    }
    return Outcome{uap_evals == 0 && exact, "UAP application evaluations: " + std::to_string(uap_evals) +
                                                "; MADC steps->evaluations " + counts};
  });

  report("area oracles", [] {
    std::mt19937_64 rng(99);
    double worst_area = 0.0, worst_gain = 0.0;
    bool self_zero = true;
    for (int t = 0; t < 100; ++t) {
      const auto c = random_curve(rng, 2 + t % 7, 1e5, 1e7);
      worst_area = std::max(worst_area,
                            std::abs(curve_area(c) - fine_area(c, c.points.front().bitrate, c.points.back().bitrate)));
      self_zero = self_zero && gain(c, c) == 0.0;
      const auto a = random_curve(rng, 5, 1e5, 7e6), b = random_curve(rng, 5, 1e6, 1e7);
      const double lo = std::max(a.points.front().bitrate, b.points.front().bitrate);
      const double hi = std::min(a.points.back().bitrate, b.points.back().bitrate);
      if (hi > lo) worst_gain = std::max(worst_gain, std::abs(gain(a, b) - (fine_area(a, lo, hi) - fine_area(b, lo, hi))));
    }
    bool extrema = true;
    for (int t = 0; t < 20; ++t) {
      std::vector<RDCurve> set;
      for (int i = 0; i < 6; ++i) {
        auto c = random_curve(rng, 4, 1e5, 1e7);
        for (auto& p : c.points) p.score = 30.0 + 50.0 * p.score;
        set.push_back(c);
      }
      const auto r = score_range(normalize_target_curves(set).curves);
      extrema = extrema && r.min == 0.0 && r.max == 1.0;
    }
    return Outcome{worst_area <= 1e-6 && worst_gain <= 1e-6 && self_zero && extrema,
                   "max |area - oracle| " + fmt(worst_area) + ", max |gain - oracle| " + fmt(worst_gain) +
                       ", gain(c,c)=0: " + (self_zero ? "yes" : "no") + ", extrema {0,1}: " + (extrema ? "yes" : "no")};
  });

  report("stability score hand case and sign convention", [] {
    const double s = stability_score({{"m", {{0.1, 0.05, 0.02}, {0.2, 0.10, 0.04}}}}).scores.at("m");
    const double z = stability_score({{"m", {{0.1, 0.0, 0.02}, {0.2, 0.0, 0.04}}}}).scores.at("m");
    // Decimal 0.05 + 0.10 has no exact binary form; allow a few ulp.
    const bool hand = std::abs(s + 0.75) <= 4 * std::numeric_limits<double>::epsilon() * 0.75;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.001, 0.3);
    int signs = 0;
    for (int t = 0; t < 200; ++t) {
      std::vector<double> l(4), g(4);
      for (auto& v : l) v = u(rng);
      for (auto& v : g) v = u(rng);
      std::sort(l.begin(), l.end());
      std::sort(g.begin(), g.end());
      std::vector<DependencePoint> pos, neg;
      for (int k = 0; k < 4; ++k) {
        pos.push_back({l[k], g[k], 0.02 * (k + 1)});
        neg.push_back({l[k], -g[k], 0.02 * (k + 1)});
      }
      signs += stability_score({{"m", pos}}).scores.at("m") < 0 && stability_score({{"m", neg}}).scores.at("m") > 0;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", s);
    return Outcome{hand && z == 0.0 && signs == 200, std::string("hand case ") + buf + " vs -0.75; zero-gain " +
                                                         fmt(z) + "; sign trials " + std::to_string(signs) + "/200"};
  });

  const fs::path e2e = scratch("desk");
  StabilityReport desk;
  bool have_desk = false;
  report("end-to-end desk pipeline", [&] {
    const auto cfg = desk_config(e2e).string();
    const auto t0 = Clock::now();
    if (run_cli({"--config", cfg, "train-uap"}) != 0) return Outcome{false, "train-uap failed"};
    if (run_cli({"--config", cfg, "eval-stability"}) != 0) return Outcome{false, "eval-stability failed"};
    const double t = seconds_since(t0);
    const std::string cold = slurp(e2e / "out" / "report.json");
    if (run_cli({"--config", cfg, "eval-stability"}) != 0) return Outcome{false, "warm eval-stability failed"};
    const bool same = cold == slurp(e2e / "out" / "report.json");
    desk = report_from_json(nlohmann::json::parse(cold));
    have_desk = true;
    const MetricAnalysis* mean = nullptr;
    const MetricAnalysis* guard = nullptr;
    for (const auto& m : desk.metrics) (m.metric == "MeanScorer" ? mean : guard) = &m;
    const double g0 = mean->dependence[0].target_gain, g1 = mean->dependence[1].target_gain;
    const bool ok = g1 > g0 && g0 > 0 && mean->stability_score < 0 && guard->stability_score >= 0 && t < 300 && same;
    return Outcome{ok, "MeanScorer gains " + fmt(g0) + " -> " + fmt(g1) + ", score " + fmt(mean->stability_score) +
                           "; NoiseGuardScorer score " + fmt(guard->stability_score) + "; " + fmt(t) +
                           " s; warm report identical: " + (same ? "yes" : "no")};
  });

  report("normalization invariance under 3x+7", [&] {
    if (!have_desk) return Outcome{false, "desk report unavailable"};
    double worst = 0.0;
    for (std::size_t target = 0; target < desk.raw.size(); ++target) {
      auto raw = desk.raw;
      for (auto& v : raw[target].points)
        for (auto& var : v)
          for (auto& p : var) p.target = 3.0 * p.target + 7.0;
      const auto moved = analyze(desk.amplitudes, desk.videos, desk.rate_points, raw, desk.psnr_cap);
      for (std::size_t m = 0; m < desk.metrics.size(); ++m) {
        const auto& a = desk.metrics[m];
        const auto& b = moved.metrics[m];
        worst = std::max(worst, std::abs(a.stability_score - b.stability_score));
        for (std::size_t v = 0; v < a.gains.size(); ++v)
          for (std::size_t k = 0; k < a.gains[v].size(); ++k)
            worst = std::max(worst, std::abs(a.gains[v][k] - b.gains[v][k]));
        for (std::size_t c = 0; c < a.target_normalized.size(); ++c)
          for (std::size_t i = 0; i < a.target_normalized[c].points.size(); ++i)
            worst = std::max(worst, std::abs(a.target_normalized[c].points[i].score -
                                             b.target_normalized[c].points[i].score));
      }
    }
    return Outcome{worst <= 1e-9, "max change " + fmt(worst) + " <= 1e-9"};
  });

  report("determinism of train-uap and eval-stability", [&] {
    const fs::path again = scratch("desk-again");
    const auto cfg = desk_config(again).string();
    if (run_cli({"--config", cfg, "train-uap"}) != 0 || run_cli({"--config", cfg, "eval-stability"}) != 0) {
      return Outcome{false, "second run failed"};
    }
    std::string differing;
    std::size_t compared = 0;
    for (const char* f : {"mean.uapp", "train_log.csv", "report.json", "rd_points.csv", "dependence.csv",
                          "stability_scores.csv"}) {
      ++compared;
      if (slurp(e2e / "out" / f) != slurp(again / "out" / f) || slurp(again / "out" / f).empty()) {
        differing += std::string(" ") + f;
      }
    }
    return Outcome{differing.empty(), std::to_string(compared) + " artifacts compared; differing:" +
                                          (differing.empty() ? std::string(" none") : differing)};
  });

  fs::remove_all(e2e.parent_path());
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
