#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "swt/metrics.hpp"
#include "swt/rng.hpp"

namespace swt {
namespace {

TEST(Confusion, PerfectPredictionsAreDiagonal) {
  const std::vector<std::vector<int>> grids = {{0, 1, 2, 2}, {1, 1, 0, 2}};
  const auto cm = confusion(grids, grids, 3);
  EXPECT_EQ(cm.total(), 8);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) EXPECT_EQ(cm(i, j), 0);
    }
  }
  EXPECT_EQ(cm(2, 2), 3);
  EXPECT_DOUBLE_EQ(cm.accuracy(), 1.0);
}

TEST(Confusion, SinglePixelAndConservation) {
  const std::vector<std::vector<int>> pred = {{2}};
  const std::vector<std::vector<int>> truth = {{0}};
  const auto cm = confusion(pred, truth, 3);
  EXPECT_EQ(cm(0, 2), 1);
  EXPECT_EQ(cm.total(), 1);

  Rng rng = substream(1, "cm");
  std::vector<std::vector<int>> a(5, std::vector<int>(12 * 7)), b = a;
  for (auto& g : a) for (auto& x : g) x = uniform_int(rng, 0, 3);
  for (auto& g : b) for (auto& x : g) x = uniform_int(rng, 0, 3);
  EXPECT_EQ(confusion(a, b, 4).total(), 12 * 7 * 5);
}

TEST(Confusion, ShapeMismatch) {
  const std::vector<std::vector<int>> a = {{0, 1}};
  const std::vector<std::vector<int>> b = {{0}};
  EXPECT_THROW(confusion(a, b, 2), Error);
  EXPECT_THROW(confusion(a, std::vector<std::vector<int>>{}, 2), Error);
}

TEST(Confusion, MergeIsAdditive) {
  ConfusionMatrix x(2), y(2);
  x.add(0, 1, 3);
  y.add(0, 1, 2);
  y.add(1, 1, 4);
  x.merge(y);
  EXPECT_EQ(x(0, 1), 5);
  EXPECT_EQ(x.total(), 9);
  const Matrix rn = x.row_normalized();
  EXPECT_DOUBLE_EQ(rn(0, 1), 1.0);
}

TEST(Iou, TextbookValues) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 50);
  cm.add(1, 0, 25);  // false positive for class 0
  cm.add(0, 1, 25);  // false negative for class 0
  const auto r = iou(cm);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1], 0.0);

  ConfusionMatrix perfect(3);
  perfect.add(0, 0, 3);
  perfect.add(1, 1, 2);
  const auto p = iou(perfect);
  EXPECT_DOUBLE_EQ(*p.per_class[0], 1.0);
  EXPECT_FALSE(p.per_class[2].has_value());
  EXPECT_DOUBLE_EQ(p.mean, 1.0);
  EXPECT_EQ(p.counted, 2);
}

TEST(Iou, RelabelingEquivariance) {
  Rng rng = substream(2, "perm");
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5;
    ConfusionMatrix cm(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cm.add(i, j, uniform_int(rng, 0, 20));
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ConfusionMatrix permuted(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) permuted.add(perm[i], perm[j], cm(i, j));
    }
    const auto a = iou(cm), b = iou(permuted);
    for (int k = 0; k < n; ++k) EXPECT_EQ(a.per_class[k], b.per_class[perm[k]]);
    EXPECT_NEAR(a.mean, b.mean, 1e-15);
  }
}

TEST(Severity, Definition) {
  ConfusionMatrix diag(3);
  diag.add(0, 0, 10);
  diag.add(2, 2, 5);
  EXPECT_EQ(severity_score(diag, GroundMatrix::uniform(3, 7.0)), 0.0);

  ConfusionMatrix one(3);
  one.add(0, 0, 60);
  one.add(1, 1, 39);
  one.add(1, 2, 1);
  const SeverityEntry e[] = {{1, 2, 5.0}};
  EXPECT_DOUBLE_EQ(severity_score(one, build_severity_matrix(3, e)), 0.05);
  EXPECT_THROW(severity_score(one, GroundMatrix::uniform(2)), Error);
}

TEST(Severity, StepMatrixGivesErrorRate) {
  Rng rng = substream(3, "sev");
  for (int trial = 0; trial < 20; ++trial) {
    ConfusionMatrix cm(6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) cm.add(i, j, uniform_int(rng, 0, 50));
    }
    EXPECT_NEAR(severity_score(cm, GroundMatrix::uniform(6)), 1.0 - cm.accuracy(), 1e-15);
  }
}

TEST(DrivingMetrics, NoCollisionsGiveMarker) {
  DrivingRecord r;
  r.steps = 100;
  r.distance_km = 0.5;
  r.events.push_back({InfractionType::off_line, 50, 0.25});
  const std::vector<DrivingRecord> recs = {r};
  const auto rep = driving_metrics(recs, 100, 0.1);
  EXPECT_FALSE(rep.km_per_collision.has_value());
  EXPECT_DOUBLE_EQ(*rep.km_per_out_of_lane, 0.5);
  EXPECT_DOUBLE_EQ(rep.drive_fraction, 1.0);
  EXPECT_DOUBLE_EQ(rep.mean_kmh, 0.5 / (10.0 / 3600.0));
  const auto j = to_json(rep);
  EXPECT_EQ(j["km_per_collision"], kNoInfraction);
  EXPECT_EQ(j["km_between_infractions"]["collision-person"], kNoInfraction);
  EXPECT_DOUBLE_EQ(j["drive_percent"].get<double>(), 100.0);
  EXPECT_NE(infraction_table_csv(rep).find("off-line,0.5"), std::string::npos);
}

TEST(DrivingMetrics, RatiosAndAdditivity) {
  DrivingRecord a, b;
  a.steps = 300;
  a.distance_km = 4.0;
  a.events.push_back({InfractionType::collision_car, 10, 1.0});
  b.steps = 200;
  b.distance_km = 6.0;
  b.events.push_back({InfractionType::collision_person, 20, 2.0});
  const std::vector<DrivingRecord> both = {a, b};
  const auto rep = driving_metrics(both, 1000, 0.1);
  EXPECT_DOUBLE_EQ(*rep.km_per_collision, 5.0);
  EXPECT_DOUBLE_EQ(rep.total_km, 10.0);
  EXPECT_EQ(rep.total_steps, 500);
  EXPECT_DOUBLE_EQ(rep.drive_fraction, 0.5);
  EXPECT_DOUBLE_EQ(*rep.km_per_type[static_cast<int>(InfractionType::collision_car)], 10.0);
  const auto ra = driving_metrics(std::vector<DrivingRecord>{a}, 1000, 0.1);
  const auto rb = driving_metrics(std::vector<DrivingRecord>{b}, 1000, 0.1);
  EXPECT_DOUBLE_EQ(ra.total_km + rb.total_km, rep.total_km);
  EXPECT_EQ(ra.total_steps + rb.total_steps, rep.total_steps);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(ra.count_per_type[k] + rb.count_per_type[k], rep.count_per_type[k]);
}

TEST(DrivingMetrics, Errors) {
  EXPECT_THROW(driving_metrics(std::vector<DrivingRecord>{}, 10, 0.1), Error);
  EXPECT_THROW(driving_metrics(std::vector<DrivingRecord>{DrivingRecord{}}, 0, 0.1), Error);
}

TEST(SuccessRate, Fractions) {
  std::vector<DrivingRecord> recs(20);
  EXPECT_EQ(success_rate(recs), 0.0);
  for (int k = 0; k < 13; ++k) recs[k].reached_goal = true;
  EXPECT_DOUBLE_EQ(success_rate(recs), 0.65);
  for (auto& r : recs) r.reached_goal = true;
  EXPECT_EQ(success_rate(recs), 1.0);
  EXPECT_THROW(success_rate(std::vector<DrivingRecord>{}), Error);
}

}  // namespace
}  // namespace swt
