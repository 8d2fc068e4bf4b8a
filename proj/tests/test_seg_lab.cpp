#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "swt/seg_lab.hpp"

namespace swt::seg {
namespace {

SceneConfig small_config(int h, int w, double noise) {
  SceneConfig c;
  c.height = h;
  c.width = w;
  c.noise = noise;
  c.objects_min = 1;
  c.objects_max = 3;
  return c;
}

// Norm-wise relative error between analytic and finite-difference gradients.
double gradient_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>(), 1e-8});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

Vector numeric_gradient(const SoftmaxModel& m, std::span<const SceneSample> data, std::span<const SampleTargets> t,
                        const LossSpec& spec, double h) {
  Vector g(m.parameter_count());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    g[k] = oracle::central_difference(m.params(), static_cast<int>(k), h, [&](const Vector& p) {
      SoftmaxModel probe = m;
      probe.set_params(p);
      return batch_loss_grad(probe, data, t, spec).loss;
    });
  }
  return g;
}

TEST(Scene, DeterministicPerSeed) {
  const auto cfg = small_config(24, 20, 0.3);
  const auto a = generate_scene(42, cfg), b = generate_scene(42, cfg), c = generate_scene(43, cfg);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.features.rows(), 24 * 20);
  EXPECT_NE(a.features, c.features);
}

TEST(Scene, ZeroAreaRejected) {
  EXPECT_THROW(generate_scene(1, small_config(0, 8, 0.1)), Error);
  EXPECT_THROW(generate_scene(1, small_config(8, 0, 0.1)), Error);
}

TEST(Scene, NoiseFreeScenesAreSeparable) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = generate_scene(seed, small_config(32, 32, 0.0));
    for (int p = 0; p < s.pixels(); ++p) ASSERT_EQ(nearest_prototype(s.features.row(p)), s.labels[p]);
  }
}

TEST(Scene, BackgroundClassesAppear) {
  std::array<long, kNumClasses> hist{};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = generate_scene(seed, SceneConfig{});
    for (int l : s.labels) {
      ASSERT_GE(l, 0);
      ASSERT_LT(l, kNumClasses);
      ++hist[static_cast<std::size_t>(l)];
    }
  }
  for (int cls : {sky, building, sidewalk, road}) EXPECT_GT(hist[static_cast<std::size_t>(cls)], 0) << cls;
  for (int cls : {car, bus, person, bike}) EXPECT_GT(hist[static_cast<std::size_t>(cls)], 0) << cls;
}

TEST(Forward, ZeroWeightsGiveUniform) {
  const SoftmaxModel m(kFeatureDim, kNumClasses);
  const auto s = generate_scene(3, small_config(4, 5, 0.5));
  const Matrix p = m.forward(s.features);
  EXPECT_TRUE(p.isApproxToConstant(1.0 / kNumClasses, 1e-15));
}

TEST(Forward, RowsAreHistograms) {
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 6, 9, 2.0);
  const auto s = generate_scene(4, small_config(8, 8, 0.5));
  const Matrix p = m.forward(s.features);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(p.row(r).minCoeff(), 0.0);
  }
  EXPECT_EQ(p, m.forward(s.features));
}

TEST(Forward, DominantLogitTakesAllMass) {
  SoftmaxModel m(kFeatureDim, kNumClasses);
  m.params()[m.offset_w2() + kFeatureDim * kNumClasses + 5] = 800.0;
  const Matrix p = m.forward(Matrix::Random(3, kFeatureDim));
  for (Eigen::Index r = 0; r < 3; ++r) EXPECT_EQ(p(r, 5), 1.0);
}

TEST(Forward, DimensionMismatch) {
  const SoftmaxModel m(kFeatureDim, kNumClasses, 4);
  EXPECT_THROW(m.forward(Matrix::Zero(2, kFeatureDim + 1)), Error);
  EXPECT_THROW(SoftmaxModel(kFeatureDim, 1), Error);
}

// A linear model whose bias alone fixes the predicted histogram.
SoftmaxModel model_predicting(const std::vector<double>& s) {
  SoftmaxModel m(kFeatureDim, static_cast<int>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) {
    m.params()[m.offset_w2() + kFeatureDim * static_cast<Eigen::Index>(s.size()) + static_cast<Eigen::Index>(k)] =
        std::log(s[k]);
  }
  return m;
}

SceneSample single_pixel(int label) {
  SceneSample s;
  s.height = s.width = 1;
  s.features = Matrix::Zero(1, kFeatureDim);
  s.labels = {label};
  return s;
}

TEST(Loss, CrossEntropyVanishesOnConfidentTruth) {
  SoftmaxModel m(kFeatureDim, kNumClasses);
  m.params()[m.offset_w2() + kFeatureDim * kNumClasses + 2] = 1000.0;
  const std::vector<SceneSample> data = {single_pixel(2)};
  const auto lg = batch_loss_grad(m, data, onehot_targets(data), LossSpec::cross_entropy());
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.pixels, 1);
}

TEST(Loss, ImportanceMatrixReducesToWeightedError) {
  const auto grouping = default_grouping();
  const auto d = build_importance_matrix(grouping);
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 0, 5, 1.5);
  std::vector<SceneSample> data = {generate_scene(11, small_config(6, 6, 0.5)),
                                   generate_scene(12, small_config(6, 6, 0.5))};
  const auto lg = batch_loss_grad(m, data, onehot_targets(data), LossSpec::wasserstein(d));
  double expected = 0.0;
  int count = 0;
  for (const auto& s : data) {
    const Matrix p = m.forward(s.features);
    for (int px = 0; px < s.pixels(); ++px, ++count) {
      const int j = s.labels[static_cast<std::size_t>(px)];
      expected += grouping.weight(j) * (1.0 - p(px, j));
    }
  }
  EXPECT_NEAR(lg.loss, expected / count, 1e-12);
}

TEST(Loss, CrossEntropyIgnoresHowOffClassMassIsSpread) {
  const auto d = default_severity_matrix();
  const std::vector<SceneSample> data = {single_pixel(road)};
  const auto targets = onehot_targets(data);
  // Same mass on the truth, the rest on a harmless versus a severe mistake.
  std::vector<double> mild(kNumClasses, 1e-6), severe(kNumClasses, 1e-6);
  mild[road] = severe[road] = 0.6;
  mild[sidewalk] = 0.4 - 6e-6;
  severe[sky] = 0.4 - 6e-6;
  const auto ce_mild = batch_loss_grad(model_predicting(mild), data, targets, LossSpec::cross_entropy()).loss;
  const auto ce_severe = batch_loss_grad(model_predicting(severe), data, targets, LossSpec::cross_entropy()).loss;
  EXPECT_NEAR(ce_mild, ce_severe, 1e-12);
  const auto w_mild = batch_loss_grad(model_predicting(mild), data, targets, LossSpec::wasserstein(d)).loss;
  const auto w_severe = batch_loss_grad(model_predicting(severe), data, targets, LossSpec::wasserstein(d)).loss;
  EXPECT_GT(w_severe, w_mild + 1.0);
}

TEST(Loss, OneHotWassersteinIsNonnegativeAndZeroOnlyAtTruth) {
  const auto d = default_severity_matrix();
  Rng rng = substream(8, "pixels");
  const std::vector<SceneSample> data = {single_pixel(car)};
  const auto targets = onehot_targets(data);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(kNumClasses);
    for (auto& x : s) x = 0.01 + uniform01(rng);
    const double z = std::accumulate(s.begin(), s.end(), 0.0);
    for (auto& x : s) x /= z;
    EXPECT_GT(batch_loss_grad(model_predicting(s), data, targets, LossSpec::wasserstein(d)).loss, 0.0);
  }
  SoftmaxModel sure(kFeatureDim, kNumClasses);
  sure.params()[sure.offset_w2() + kFeatureDim * kNumClasses + car] = 1000.0;
  EXPECT_EQ(batch_loss_grad(sure, data, targets, LossSpec::wasserstein(d)).loss, 0.0);
}

TEST(Loss, TargetMisuseRejected) {
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 0, 1);
  const std::vector<SceneSample> data = {single_pixel(0)};
  const std::vector<SampleTargets> soft = {
      SampleTargets::conservative(Matrix::Constant(1, kNumClasses, 1.0 / kNumClasses), {1})};
  EXPECT_THROW(batch_loss_grad(m, data, soft, LossSpec::wasserstein(default_severity_matrix())), Error);
  EXPECT_THROW(batch_loss_grad(m, data, soft, LossSpec::cross_entropy()), Error);
  EXPECT_NO_THROW(batch_loss_grad(m, data, soft, LossSpec::sinkhorn_loss(default_severity_matrix(), 0.5)));
  EXPECT_THROW(batch_loss_grad(m, data, std::vector<SampleTargets>{}, LossSpec::cross_entropy()), Error);
  EXPECT_THROW(batch_loss_grad(m, data, onehot_targets(data), LossSpec::wasserstein(GroundMatrix::uniform(3))),
               Error);
  const std::vector<SampleTargets> bad = {SampleTargets::onehot({kNumClasses})};
  EXPECT_THROW(batch_loss_grad(m, data, bad, LossSpec::cross_entropy()), Error);
}

TEST(Loss, MaskedPixelsDoNotContribute) {
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 3, 2);
  const auto s = generate_scene(2, small_config(2, 2, 0.4));
  const std::vector<SceneSample> data = {s};
  std::vector<unsigned char> mask = {1, 0, 1, 0};
  const std::vector<SampleTargets> masked = {SampleTargets::hard(s.labels, mask)};
  SceneSample kept;
  kept.height = 1;
  kept.width = 2;
  kept.features = Matrix(2, kFeatureDim);
  kept.features << s.features.row(0), s.features.row(2);
  kept.labels = {s.labels[0], s.labels[2]};
  const std::vector<SceneSample> subset = {kept};
  const auto a = batch_loss_grad(m, data, masked, LossSpec::cross_entropy());
  const auto b = batch_loss_grad(m, subset, onehot_targets(subset), LossSpec::cross_entropy());
  EXPECT_EQ(a.pixels, 2);
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  EXPECT_LT((a.grad - b.grad).lpNorm<Eigen::Infinity>(), 1e-15);
}

struct GradCase {
  LossKind kind;
  int hidden;
  bool soft;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto gc = GetParam();
  const auto d = default_severity_matrix();
  LossSpec spec;
  if (gc.kind == LossKind::wasserstein) spec = LossSpec::wasserstein(d.transformed(MetricTransform::power(1.5)));
  if (gc.kind == LossKind::sinkhorn) {
    spec = LossSpec::sinkhorn_loss(d, 0.5);
    spec.sinkhorn.tol = 1e-14;
    spec.sinkhorn.max_iter = 100000;
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, gc.hidden, seed, 0.8);
    std::vector<SceneSample> data = {generate_scene(100 + seed, small_config(2, 2, 0.5))};
    std::vector<SampleTargets> targets = onehot_targets(data);
    if (gc.soft) {
      const auto other = SoftmaxModel::random(kFeatureDim, kNumClasses, 0, seed + 50, 1.0);
      targets = pseudo_label_targets(other, data, 0.4, 0.0).targets;
      targets[0].accepted[1] = 0;
    }
    const auto lg = batch_loss_grad(m, data, targets, spec);
    const Vector fd = numeric_gradient(m, data, targets, spec, 1e-6);
    EXPECT_LT(gradient_error(lg.grad, fd), 1e-5) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllModes, GradientCheck,
                         ::testing::Values(GradCase{LossKind::ce, 0, false}, GradCase{LossKind::ce, 5, false},
                                           GradCase{LossKind::wasserstein, 0, false},
                                           GradCase{LossKind::wasserstein, 5, false},
                                           GradCase{LossKind::sinkhorn, 0, false},
                                           GradCase{LossKind::sinkhorn, 5, true}));

std::vector<SceneSample> dataset(std::uint64_t base, int count, const SceneConfig& cfg) {
  std::vector<SceneSample> out;
  for (int k = 0; k < count; ++k) out.push_back(generate_scene(base + static_cast<std::uint64_t>(k), cfg));
  return out;
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto data = dataset(0, 3, small_config(8, 8, 0.3));
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 4, 3);
  const auto r = seg::train(m, data, LossSpec::cross_entropy(), {0.0, 20, 2, 1});
  EXPECT_EQ(r.model.params(), m.params());
  EXPECT_EQ(r.losses.size(), 20u);
}

TEST(Train, SeparableDataIsLearned) {
  const auto data = dataset(0, 8, small_config(16, 16, 0.0));
  const auto r = seg::train(SoftmaxModel::random(kFeatureDim, kNumClasses, 8, 7), data,
                            LossSpec::cross_entropy(), {1.0, 500, 4, 7});
  EXPECT_EQ(pixel_accuracy(r.model, data), 1.0);
}

TEST(Train, SameSeedSameCurve) {
  const auto data = dataset(20, 4, small_config(8, 8, 0.4));
  const TrainConfig cfg{0.5, 30, 2, 99};
  const auto spec = LossSpec::wasserstein(default_severity_matrix());
  const auto a = seg::train(SoftmaxModel::random(kFeatureDim, kNumClasses, 4, 1), data, spec, cfg);
  const auto b = seg::train(SoftmaxModel::random(kFeatureDim, kNumClasses, 4, 1), data, spec, cfg);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.model.params(), b.model.params());
}

TEST(Train, DivergenceIsReported) {
  const auto data = dataset(0, 2, small_config(8, 8, 0.4));
  EXPECT_THROW(seg::train(SoftmaxModel(kFeatureDim, kNumClasses), data, LossSpec::cross_entropy(), {1e308, 5, 2, 0}),
               Error);
  EXPECT_THROW(seg::train(SoftmaxModel(kFeatureDim, kNumClasses), data, LossSpec::cross_entropy(), {0.1, 5, 0, 0}),
               Error);
}

TEST(PseudoLabel, Extremes) {
  const auto pred = Histogram::normalized({0.1, 0.6, 0.3});
  const auto hard = smooth_pseudo_label(pred, 0.0, 0.5);
  ASSERT_TRUE(hard);
  EXPECT_EQ((*hard)[0], 0.0);
  EXPECT_EQ((*hard)[1], 1.0);
  const auto same = smooth_pseudo_label(pred, 1.0, 0.5);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ((*same)[k], pred[k]);
  EXPECT_FALSE(smooth_pseudo_label(pred, 0.3, 0.61));
  EXPECT_THROW(smooth_pseudo_label(pred, 1.5, 0.5), Error);
}

TEST(PseudoLabel, ConvexCombinationProperties) {
  Rng rng = substream(4, "pl");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(6);
    for (auto& x : v) x = uniform01(rng) + 1e-3;
    const double z = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= z;
    const auto pred = Histogram::normalized(v);
    const auto t = smooth_pseudo_label(pred, uniform01(rng), 0.0);
    ASSERT_TRUE(t);
    EXPECT_NEAR(t->total(), 1.0, 1e-12);
    EXPECT_EQ(t->argmax(), pred.argmax());
    for (int k = 0; k < 6; ++k) EXPECT_GE((*t)[t->argmax()], (*t)[k]);
  }
}

TEST(SelfTrain, FullConfidenceThresholdSkipsEveryRound) {
  const auto src = dataset(0, 2, small_config(8, 8, 0.4));
  const auto tgt = dataset(50, 2, small_config(8, 8, 0.4));
  SelfTrainConfig cfg;
  cfg.rounds = 3;
  cfg.confidence_threshold = 1.0;
  cfg.loss = LossSpec::sinkhorn_loss(default_severity_matrix(), 0.5);
  const auto m = SoftmaxModel::random(kFeatureDim, kNumClasses, 0, 2, 0.1);
  const auto r = self_train(m, src, tgt, cfg);
  ASSERT_EQ(r.rounds.size(), 3u);
  for (const auto& round : r.rounds) {
    EXPECT_TRUE(round.skipped);
    EXPECT_EQ(round.accepted_fraction, 0.0);
    EXPECT_FALSE(round.warning.empty());
  }
  EXPECT_EQ(r.model.params(), m.params());
}

TEST(SelfTrain, HardSmoothingMatchesPseudoLabelBaseline) {
  const auto src = dataset(0, 2, small_config(8, 8, 0.4));
  const auto tgt = dataset(60, 3, small_config(8, 8, 0.5));
  const auto pre = seg::train(SoftmaxModel::random(kFeatureDim, kNumClasses, 4, 3), src,
                              LossSpec::cross_entropy(), {0.5, 100, 2, 3})
                       .model;
  SelfTrainConfig cfg;
  cfg.rounds = 1;
  cfg.lambda = 0.0;
  cfg.confidence_threshold = 0.7;
  cfg.mix_source = false;
  cfg.loss = LossSpec::sinkhorn_loss(default_severity_matrix(), 0.5);
  cfg.train = {0.3, 10, 2, 17};
  const auto adapted = self_train(pre, src, tgt, cfg);

  // Baseline: hard argmax pseudo-labels on confident pixels.
  std::vector<SampleTargets> hard;
  for (const auto& s : tgt) {
    const Matrix p = pre.forward(s.features);
    std::vector<int> labels(static_cast<std::size_t>(p.rows()));
    std::vector<unsigned char> mask(labels.size());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      mask[static_cast<std::size_t>(r)] = p.row(r).maxCoeff(&labels[static_cast<std::size_t>(r)]) >= 0.7;
    }
    hard.push_back(SampleTargets::hard(labels, mask));
  }
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.train.seed, "self-train", 0);
  const auto baseline = seg::train(pre, tgt, hard, cfg.loss, tc);
  ASSERT_FALSE(adapted.rounds[0].skipped);
  EXPECT_EQ(adapted.model.params(), baseline.model.params());
  EXPECT_EQ(adapted.rounds[0].losses, baseline.losses);
}

TEST(SelfTrain, MatchedDomainDoesNotLoseAccuracy) {
  const auto cfg_scene = small_config(16, 16, 0.25);
  std::vector<double> gains;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto src = dataset(1000 * seed, 6, cfg_scene);
    const auto tgt = dataset(1000 * seed + 500, 6, cfg_scene);
    const auto pre = seg::train(SoftmaxModel::random(kFeatureDim, kNumClasses, 8, seed), src,
                                LossSpec::cross_entropy(), {0.5, 300, 4, seed})
                         .model;
    SelfTrainConfig cfg;
    cfg.train.seed = seed;
    const auto r = self_train(pre, src, tgt, cfg);
    ASSERT_EQ(r.rounds.size(), 2u);
    for (const auto& round : r.rounds) EXPECT_GT(round.accepted_fraction, 0.5);
    gains.push_back(pixel_accuracy(r.model, tgt) - pixel_accuracy(pre, tgt));
  }
  std::nth_element(gains.begin(), gains.begin() + 2, gains.end());
  EXPECT_GE(gains[2], 0.0);
}

}  // namespace
}  // namespace swt::seg
