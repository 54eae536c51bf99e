#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "uapq/attack.hpp"
#include "uapq/synthetic.hpp"

using namespace uapq;

namespace {

// Fixed score, zero gradient.
class ConstScorer final : public Metric {
 public:
  explicit ConstScorer(double v) : Metric({"Const", 0.0, 100.0, true, MetricKind::builtin}), v_(v) {}

 protected:
  double evaluate(const Field&) const override { return v_; }
  GradientField differentiate(const Field& img) const override { return GradientField(img.shape(), 0.0); }

 private:
  double v_;
};

std::vector<ImageTensor> seeded_images(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_image(seed + i, side, side, 3, 0.1, 0.9));
  return out;
}

}  // namespace

TEST(UapLoss, BatchMeanFiftyGivesHalf) {
  ConstScorer m(50.0);
  const auto batch = seeded_images(3, 4, 1);
  EXPECT_DOUBLE_EQ(uap_loss(m, batch, Perturbation(Shape{4, 4, 3})), 0.5);
}

TEST(UapLoss, ZeroPerturbation) {
  MeanScorer m;
  const auto batch = seeded_images(4, 8, 2);
  double mean = 0.0;
  for (const auto& b : batch) mean += m.score(b);
  mean /= 4;
  EXPECT_NEAR(uap_loss(m, batch, Perturbation(Shape{8, 8, 3})), 1.0 - mean / 100.0, 1e-12);
}

TEST(UapLoss, MeanScorerClosedForm) {
  MeanScorer m;
  const auto batch = seeded_images(4, 8, 3);
  double pixel_mean = 0.0;
  for (const auto& b : batch)
    for (double v : b.values()) pixel_mean += v;
  pixel_mean /= 4.0 * 8 * 8 * 3;
  const Perturbation p(Field(Shape{8, 8, 3}, 0.05), 0.1);
  EXPECT_NEAR(uap_loss(m, batch, p), 1.0 - (pixel_mean + 0.05), 1e-9);
}

TEST(UapLoss, DoesNotClamp) {
  MeanScorer m;
  const std::vector<ImageTensor> batch{ImageTensor(Shape{2, 2, 3}, 1.0)};
  const Perturbation p(Field(Shape{2, 2, 3}, 0.1), 0.1);
  EXPECT_NEAR(uap_loss(m, batch, p), 1.0 - 1.1, 1e-12);
}

TEST(UapLoss, ShapeMismatch) {
  MeanScorer m;
  EXPECT_THROW(uap_loss(m, seeded_images(1, 8, 4), Perturbation(Shape{4, 4, 3})), ShapeError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState s(3);
  std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> g{2.5, -0.3, 1e-3};
  adam_step(s, p, g, 0.001);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[i], -0.001 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_NEAR(std::abs(p[i]), 0.001, 1e-8);
  }
}

TEST(Adam, ZeroGradientKeepsParams) {
  AdamState s(2);
  std::vector<double> p{0.3, -0.2};
  adam_step(s, p, std::vector<double>{0.0, 0.0}, 0.01);
  EXPECT_EQ(p[0], 0.3);
  EXPECT_EQ(p[1], -0.2);
  EXPECT_EQ(s.step_count, 1u);
}

TEST(Adam, TwoStepsHandRolled) {
  AdamState s(1);
  std::vector<double> p{0.5};
  const double g = 0.7, lr = 0.01;
  adam_step(s, p, std::vector<double>{g}, lr);
  adam_step(s, p, std::vector<double>{g}, lr);
  // Step 1: m=0.07, v=0.00049, mh=0.7, vh=0.49 -> 0.5 - 0.01*0.7/(0.7+1e-8)
  const double p1 = 0.5 - lr * 0.7 / (0.7 + 1e-8);
  // Step 2: m=0.133, v=0.00097951, mh=0.133/0.19, vh=0.00097951/0.001999
  const double mh = 0.133 / (1 - 0.81), vh = 0.00097951 / (1 - 0.998001);
  const double p2 = p1 - lr * mh / (std::sqrt(vh) + 1e-8);
  EXPECT_NEAR(p[0], p2, 1e-12);
  EXPECT_EQ(s.step_count, 2u);
}

TEST(Adam, ShapeMismatch) {
  AdamState s(2);
  std::vector<double> p{0.0, 0.0};
  EXPECT_THROW(adam_step(s, p, std::vector<double>{1.0}, 0.1), ShapeError);
}

TEST(Train, MeanScorerSaturatesAtClip) {
  MeanScorer m;
  TrainConfig cfg;
  cfg.epochs = 20;  // 160 steps: enough for lr 0.001 to cover 0.1
  cfg.seed = 5;
  const auto data = seeded_images(64, 16, 100);
  const auto r = train_uap(m, data, cfg);
  for (double v : r.perturbation.tile().values()) ASSERT_NEAR(v, 0.1, 1e-6);
}

TEST(Train, LinearScorerReachesSignPattern) {
  LinearScorer m;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 6;
  const auto data = seeded_images(64, 16, 200);
  const auto r = train_uap(m, data, cfg);
  const auto w = LinearScorer::weights(Shape{16, 16, 3});
  for (std::size_t i = 0; i < w.size(); ++i) {
    ASSERT_NEAR(r.perturbation.tile().values()[i], w.values()[i] > 0 ? 0.1 : -0.1, 1e-6);
  }
}

TEST(Train, ClipInvariantEveryStep) {
  TinyConvScorer m;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.05;  // large steps so the clip actually binds
  cfg.clip_bound = 0.1;
  std::size_t violations = 0, steps = 0;
  train_uap(m, seeded_images(12, 12, 300), cfg, [&](const TrainStep&, std::span<const double> p) {
    ++steps;
    for (double v : p) violations += (v < -0.1 || v > 0.1);
  });
  EXPECT_EQ(steps, 9u);
  EXPECT_EQ(violations, 0u);
}

TEST(Train, DeterministicForSeed) {
  TinyConvScorer m;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.seed = 42;
  const auto data = seeded_images(7, 10, 400);
  const auto a = train_uap(m, data, cfg);
  cfg.jobs = 3;
  const auto b = train_uap(m, data, cfg);
  EXPECT_EQ(a.perturbation, b.perturbation);
  cfg.seed = 43;
  const auto c = train_uap(m, data, cfg);
  EXPECT_NE(a.perturbation, c.perturbation);
}

TEST(Train, EpochLossNonIncreasingOnEasyTargets) {
  const auto data = seeded_images(32, 8, 500);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 1;
  MeanScorer mean;
  LinearScorer lin;
  for (const Metric* m : {static_cast<const Metric*>(&mean), static_cast<const Metric*>(&lin)}) {
    const auto r = train_uap(*m, data, cfg);
    for (std::size_t e = 1; e < r.epoch_mean_loss.size(); ++e) {
      EXPECT_LE(r.epoch_mean_loss[e], r.epoch_mean_loss[e - 1]) << m->name();
    }
  }
}

TEST(Train, StepsPerEpochAndLog) {
  MeanScorer m;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  const auto r = train_uap(m, seeded_images(20, 4, 600), cfg);
  EXPECT_EQ(r.log.size(), 6u);  // ceil(20/8) = 3 per epoch
  std::ostringstream out;
  write_training_log(out, r.log);
  EXPECT_EQ(out.str().rfind("epoch,batch,loss,max_abs_p\n", 0), 0u);
}

TEST(Train, Errors) {
  NoiseGuardScorer ng;
  MeanScorer m;
  EXPECT_THROW(train_uap(ng, seeded_images(2, 4, 1), TrainConfig{}), CapabilityError);
  EXPECT_THROW(train_uap(m, std::vector<ImageTensor>{}, TrainConfig{}), ParameterError);
}

TEST(LossGradient, MatchesFiniteDifferencesThroughPipeline) {
  TinyConvScorer m;
  const auto data = seeded_images(2, 16, 700);
  std::vector<const ImageTensor*> batch{&data[0], &data[1]};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Field p(Shape{16, 16, 3});
  for (double& v : p.values()) v = u(rng);
  const auto lg = uap_loss_and_gradient(m, batch, p);
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Field hi = p, lo = p;
    hi.values()[i] += h;
    lo.values()[i] -= h;
    const double fd = (uap_loss(m, data, hi) - uap_loss(m, data, lo)) / (2 * h);
    const double a = lg.gradient.values()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max(std::abs(a), 1e-6));
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_NEAR(lg.loss, uap_loss(m, data, p), 1e-12);
}

TEST(Universality, MeanUapRaisesEveryHeldOutImage) {
  MeanScorer m;
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto r = train_uap(m, seeded_images(16, 8, 800), cfg);
  const auto scaled = scale_to_amplitude(r.perturbation, 0.1);
  m.reset_counts();
  std::vector<ImageTensor> attacked;
  const auto held_out = synthetic::images(50, 1234, 32, 32);
  for (const auto& img : held_out) attacked.push_back(apply_perturbation(img, scaled));
  EXPECT_EQ(m.counts().total(), 0u);  // application costs no metric calls
  for (std::size_t i = 0; i < held_out.size(); ++i) EXPECT_GT(m.score(attacked[i]), m.score(held_out[i]));
}

TEST(TrainingSet, CropsAndResizesWithRecord) {
  std::vector<ImageTensor> imgs{ImageTensor(Shape{20, 30, 3}, 0.2), ImageTensor(Shape{8, 8, 1}, 0.4),
                                ImageTensor(Shape{16, 16, 3}, 0.6)};
  const auto set = make_training_set(imgs, Shape{16, 16, 3});
  ASSERT_EQ(set.images.size(), 3u);
  for (const auto& i : set.images) EXPECT_EQ(i.shape(), (Shape{16, 16, 3}));
  EXPECT_EQ(set.adjustments.size(), 3u);  // crop, grey expand, resize
  EXPECT_NEAR(set.images[1].at(5, 5, 2), 0.4, 1e-12);
}

TEST(Madc, ZeroStepsIsIdentity) {
  TinyConvScorer m;
  const auto x = oracle::random_image(1, 16, 16, 3, 0.1, 0.9);
  MadcConfig cfg;
  cfg.steps = 0;
  const auto r = madc_attack(m, x, cfg);
  EXPECT_EQ(r.image, x);
  EXPECT_EQ(r.initial_score, r.final_score);
  EXPECT_EQ(r.mse, 0.0);
}

TEST(Madc, MeanScorerClosedForm) {
  MeanScorer m;
  const auto x = synthetic::image(3, 32, 32);
  MadcConfig cfg;
  cfg.mse_budget = 0.0004;
  const auto r = madc_attack(m, x, cfg);
  EXPECT_NEAR(r.final_score - r.initial_score, 2.0, 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(r.image.values()[i] - x.values()[i], 0.02, 1e-9);
  EXPECT_LE(r.mse, 0.0004 + 1e-9);
}

TEST(Madc, TinyConvContractAndCost) {
  TinyConvScorer m;
  MadcConfig cfg;
  cfg.steps = 200;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = oracle::random_image(900 + s, 24, 24);
    m.reset_counts();
    const auto r = madc_attack(m, x, cfg);
    EXPECT_GE(r.final_score, r.initial_score);
    EXPECT_LE(mse(x, r.image), cfg.mse_budget + 1e-9);
    EXPECT_EQ(m.counts().total(), 2 * cfg.steps + 1);
    EXPECT_EQ(r.evaluations.total(), 2 * cfg.steps + 1);
  }
}

TEST(Madc, ZeroGradientFlag) {
  ConstScorer m(10.0);
  const auto x = oracle::random_image(2, 8, 8);
  const auto r = madc_attack(m, x, MadcConfig{});
  EXPECT_TRUE(r.zero_gradient);
  EXPECT_EQ(r.image, x);
}

TEST(Madc, NeedsGradient) {
  NoiseGuardScorer m;
  EXPECT_THROW(madc_attack(m, ImageTensor(Shape{4, 4, 3}, 0.5), MadcConfig{}), CapabilityError);
}
