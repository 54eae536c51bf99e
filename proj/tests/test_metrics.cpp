#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "uapq/metrics.hpp"

using namespace uapq;

namespace {

double max_rel_error(const Field& analytic, const Field& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.values()[i], n = numeric.values()[i];
    worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a), 1e-6));
  }
  return worst;
}

}  // namespace

TEST(MeanScorer, HalfGreyIsFifty) {
  MeanScorer m;
  EXPECT_DOUBLE_EQ(m.score(ImageTensor(Shape{8, 8, 3}, 0.5)), 50.0);
}

TEST(MeanScorer, GradientIsConstant) {
  MeanScorer m;
  const auto x = oracle::random_image(1, 6, 7);
  const auto g = m.gradient(x);
  for (double v : g.values()) EXPECT_DOUBLE_EQ(v, 100.0 / (6 * 7 * 3));
  const auto fd = finite_diff_gradient(m, x, 1e-4);
  for (double v : fd.values()) EXPECT_NEAR(v, 100.0 / (6 * 7 * 3), 1e-8);
}

TEST(LinearScorer, MatchesDotProduct) {
  LinearScorer m;
  const auto x = oracle::random_image(2, 9, 11);
  double dot = 0.0;
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t xx = 0; xx < 11; ++xx)
      for (std::size_t c = 0; c < 3; ++c) dot += LinearScorer::weight(y, xx, c) * x.at(y, xx, c);
  EXPECT_NEAR(m.score(x), 100.0 * dot / x.size(), 1e-9);
}

TEST(LinearScorer, GradientProportionalToWeights) {
  LinearScorer m;
  const auto x = oracle::random_image(3, 5, 5);
  const auto g = m.gradient(x);
  const auto w = LinearScorer::weights(x.shape());
  const double k = g.values()[0] / w.values()[0];
  EXPECT_NEAR(k, 100.0 / x.size(), 1e-15);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g.values()[i], k * w.values()[i], 1e-15);
  const auto fd = finite_diff_gradient(m, x, 1e-4);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(fd.values()[i], g.values()[i], 1e-8);
}

TEST(LinearScorer, WeightsAreSignedAndNonZero) {
  const auto w = LinearScorer::weights(Shape{16, 16, 3});
  std::size_t pos = 0, neg = 0;
  for (double v : w.values()) {
    ASSERT_NE(v, 0.0);
    (v > 0 ? pos : neg)++;
  }
  EXPECT_GT(pos, 300u);
  EXPECT_GT(neg, 300u);
}

TEST(LinearScorer, Homogeneous) {
  LinearScorer m;
  const auto x = oracle::random_image(4, 8, 8);
  Field half = x.field();
  for (double& v : half.values()) v *= 0.5;
  EXPECT_DOUBLE_EQ(m.score(half), 0.5 * m.score(x));
  Field twice = x.field();
  for (double& v : twice.values()) v *= 2.0;
  EXPECT_EQ(m.score(twice), 2.0 * m.score(x));
}

TEST(TinyConv, MatchesIndependentForward) {
  TinyConvScorer m;
  const auto x = oracle::random_image(5, 32, 32);
  EXPECT_NEAR(m.score(x), oracle::tinyconv_forward(m.weights(), x), 1e-6);
}

TEST(TinyConv, WeightsAreFixed) {
  TinyConvScorer a, b;
  EXPECT_EQ(a.weights().conv1, b.weights().conv1);
  EXPECT_EQ(a.weights().head, b.weights().head);
  EXPECT_EQ(a.weights().head_bias, b.weights().head_bias);
  // Golden value: changes only if the seed or architecture changes.
  const double s = a.score(ImageTensor(Shape{8, 8, 3}, 0.5));
  EXPECT_NEAR(s, 50.0, 1e-9);
}

TEST(TinyConv, NonConstantGradient) {
  TinyConvScorer m;
  const auto g = m.gradient(oracle::random_image(6, 12, 12));
  EXPECT_NE(g.values()[0], g.values()[50]);
}

TEST(GradientCheck, AllBuiltinsAgainstFiniteDifferences) {
  for (const auto& m : builtin_registry()) {
    if (!m->descriptor().supports_gradient) continue;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto x = oracle::random_image(1000 + s, 16, 16, 3, 0.1, 0.9);
      EXPECT_LE(max_rel_error(m->gradient(x), finite_diff_gradient(*m, x, 1e-4)), 1e-4) << m->name();
    }
  }
}

TEST(NoiseGuard, NoGradient) {
  NoiseGuardScorer m;
  EXPECT_FALSE(m.descriptor().supports_gradient);
  EXPECT_THROW(m.gradient(ImageTensor(Shape{4, 4, 3}, 0.5)), CapabilityError);
}

TEST(NoiseGuard, NoiseLowersScoreOnRamp) {
  NoiseGuardScorer m;
  Field ramp(Shape{32, 32, 3});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (std::size_t c = 0; c < 3; ++c) ramp.at(y, x, c) = 0.2 + 0.5 * static_cast<double>(x + y) / 62.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  Field noisy = ramp;
  for (double& v : noisy.values()) v += u(rng);
  EXPECT_LT(m.score(noisy), m.score(ramp));
}

TEST(NoiseGuard, ConstantShiftNeverRaisesScore) {
  NoiseGuardScorer m;
  Field ramp(Shape{24, 24, 3});
  for (std::size_t y = 0; y < 24; ++y)
    for (std::size_t x = 0; x < 24; ++x)
      for (std::size_t c = 0; c < 3; ++c) ramp.at(y, x, c) = 0.3 + 0.01 * static_cast<double>(x) + 0.005 * y;
  const auto img = ImageTensor::from_field(ramp);
  const auto shifted = apply_perturbation(img, Perturbation(Field(Shape{8, 8, 3}, 0.1), 0.1));
  EXPECT_LE(m.score(shifted), m.score(img));
}

TEST(Registry, UniqueNamesAndLookup) {
  const auto reg = builtin_registry();
  EXPECT_GE(reg.size(), 4u);
  std::set<std::string> names;
  for (const auto& m : reg) {
    names.insert(m->name());
    EXPECT_LT(m->descriptor().score_lo, m->descriptor().score_hi);
    EXPECT_EQ(m->descriptor().kind, MetricKind::builtin);
  }
  EXPECT_EQ(names.size(), reg.size());
  EXPECT_NE(find_builtin("meanscorer"), nullptr);
  EXPECT_EQ(find_builtin("nope"), nullptr);
}

TEST(ScoreBatch, MatchesPerItemLoop) {
  TinyConvScorer m;
  std::vector<ImageTensor> batch;
  for (std::uint64_t s = 0; s < 8; ++s) batch.push_back(oracle::random_image(50 + s, 10, 10));
  const auto scores = score_batch(m, batch);
  ASSERT_EQ(scores.size(), 8u);
  double mean = 0.0, loop = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(scores[i], m.score(batch[i]));
    mean += scores[i];
    loop += m.score(batch[i]);
  }
  EXPECT_NEAR(mean / 8, loop / 8, 1e-12);
  const std::vector<ImageTensor> same(3, batch[0]);
  const auto s3 = score_batch(m, same);
  EXPECT_EQ(s3[0], s3[1]);
  EXPECT_EQ(s3[1], s3[2]);
}

TEST(Counters, CountScoresAndGradients) {
  MeanScorer m;
  const ImageTensor x(Shape{4, 4, 3}, 0.3);
  m.score(x);
  m.score(x);
  m.gradient(x);
  EXPECT_EQ(m.counts().scores, 2u);
  EXPECT_EQ(m.counts().gradients, 1u);
  m.reset_counts();
  EXPECT_EQ(m.counts().total(), 0u);
}

TEST(Determinism, RepeatedCallsBitIdentical) {
  for (const auto& m : builtin_registry()) {
    const auto x = oracle::random_image(77, 12, 12);
    EXPECT_EQ(m->score(x), m->score(x));
    if (m->descriptor().supports_gradient) {
      EXPECT_EQ(m->gradient(x), m->gradient(x));
    }
  }
}
