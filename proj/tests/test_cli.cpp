#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "swt/cli.hpp"

namespace swt::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome swt(std::vector<std::string> args) {
  args.insert(args.begin(), "swt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("swt_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    io::write_text(dir_ / name, text);
    return path(name);
  }
  std::string read(const std::string& name) const { return io::read_text(dir_ / name); }

  // Small dataset plus a briefly trained segmenter, shared by several tests.
  std::string make_segmenter() {
    EXPECT_EQ(swt({"gen-data", "--seed", "4", "--quiet", "--out", path("data")}).code, 0);
    const auto cfg = write("seg.cfg", "seed=4\ndata.dir=" + path("data") +
                                          "\nseg.pretrain_steps=40\nseg.steps=10\ndata.test=2\n");
    EXPECT_EQ(swt({"train-seg", "--config", cfg, "--quiet", "--out", path("seg")}).code, 0);
    return path("seg/segmenter");
  }

  fs::path dir_;
};

TEST_F(CliTest, GenDataIsByteIdenticalForAFixedSeed) {
  ASSERT_EQ(swt({"gen-data", "--seed", "9", "--quiet", "--out", path("a")}).code, 0);
  ASSERT_EQ(swt({"gen-data", "--seed", "9", "--quiet", "--out", path("b")}).code, 0);
  ASSERT_EQ(swt({"gen-data", "--seed", "10", "--quiet", "--out", path("c")}).code, 0);
  EXPECT_EQ(read("a/manifest.txt"), read("b/manifest.txt"));
  EXPECT_NE(read("a/manifest.txt"), read("c/manifest.txt"));
  for (const auto* f : {"train_0000.pgm", "train_0007.csv", "test_0031.pgm"}) {
    EXPECT_EQ(read(std::string("a/") + f), read(std::string("b/") + f)) << f;
  }
}

TEST_F(CliTest, TrainingLogsAreByteIdenticalForAFixedSeed) {
  ASSERT_EQ(swt({"gen-data", "--seed", "2", "--quiet", "--out", path("data")}).code, 0);
  const auto cfg =
      write("seg.cfg", "seed=2\ndata.dir=" + path("data") + "\nseg.pretrain_steps=30\nseg.steps=20\n");
  ASSERT_EQ(swt({"train-seg", "--config", cfg, "--quiet", "--out", path("r1")}).code, 0);
  ASSERT_EQ(swt({"train-seg", "--config", cfg, "--quiet", "--out", path("r2")}).code, 0);
  for (const auto* f : {"train_log.jsonl", "report.json", "segmenter.csv", "report_iou.csv"}) {
    EXPECT_EQ(read(std::string("r1/") + f), read(std::string("r2/") + f)) << f;
  }
}

TEST_F(CliTest, UnknownConfigKeyIsNamedInTheError) {
  const auto cfg = write("bad.cfg", "seed=1\nseg.stpes=10\n");
  const auto r = swt({"gen-data", "--config", cfg, "--out", path("x")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("seg.stpes"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("x/manifest.txt")));
}

TEST_F(CliTest, MalformedAndInvalidValuesNameTheKey) {
  const auto r1 = swt({"gen-data", "--config", write("a.cfg", "seed=1\ndata.noise=loud\n"), "--out", path("x")});
  EXPECT_NE(r1.code, 0);
  EXPECT_NE(r1.err.find("data.noise"), std::string::npos) << r1.err;
  const auto r2 = swt({"gen-data", "--config", write("b.cfg", "seed=1\ntrack.lane_wdth=3\n"), "--out", path("x")});
  EXPECT_NE(r2.code, 0);
  EXPECT_NE(r2.err.find("lane_wdth"), std::string::npos) << r2.err;
  const auto r3 = swt({"gen-data", "--config", write("c.cfg", "data.train=3\n"), "--out", path("x")});
  EXPECT_NE(r3.code, 0);
  EXPECT_NE(r3.err.find("seed"), std::string::npos) << r3.err;
  const auto r4 = swt({"train-seg", "--config", write("d.cfg", "seed=1\ndata.dir=" + path("none") + "\n")});
  EXPECT_NE(r4.code, 0);
  EXPECT_NE(r4.err.find("data.dir"), std::string::npos) << r4.err;
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(swt({}).code, 2);
  EXPECT_EQ(swt({"nonsense"}).code, 2);
  EXPECT_EQ(swt({"ot", "exact", "--source", "x.csv"}).code, 2);
  EXPECT_EQ(swt({"--help"}).code, 0);
}

TEST_F(CliTest, ZeroLearningRateLeavesAgentAtInitialization) {
  const auto seg = make_segmenter();
  const auto cfg = write("agent.cfg", "seed=6\nseg.checkpoint=" + seg +
                                          "\nagent.lr=0\nagent.workers=2\nschedule.rounds=1\n"
                                          "schedule.steps_per_round=400\nschedule.freeze_segmenter=true\n");
  ASSERT_EQ(swt({"train-agent", "--config", cfg, "--quiet", "--out", path("ag")}).code, 0);
  const auto loaded = agent::load_agent(path("ag/agent"));
  const auto segmenter = agent::load_segmenter(seg);
  const auto init =
      agent::AgentState::create({drive::latent_size(segmenter) * 2, drive::kMeasurementCount}, derive_seed(6, "init"));
  ASSERT_EQ(loaded.params.size(), init.params.size());
  EXPECT_EQ(loaded.params, init.params);
  EXPECT_GT(loaded.updates, 0);
}

TEST_F(CliTest, ZeroRoundsWritesThePredefinedMatrix) {
  const auto seg = make_segmenter();
  const auto cfg = write("agent.cfg", "seed=6\nseg.checkpoint=" + seg + "\nschedule.rounds=0\n");
  ASSERT_EQ(swt({"train-agent", "--config", cfg, "--quiet", "--out", path("ag")}).code, 0);
  const auto m = load_matrix(path("ag/matrix.csv"));
  const auto expected = seg::default_severity_matrix();
  for (int i = 0; i < m.size(); ++i) {
    for (int j = 0; j < m.size(); ++j) EXPECT_EQ(m(i, j), expected(i, j));
  }
  EXPECT_EQ(read("ag/rounds.jsonl"), "");
}

TEST_F(CliTest, AlphaFollowsTheLinearSchedule) {
  const auto seg = make_segmenter();
  const auto cfg = write("agent.cfg", "seed=6\nseg.checkpoint=" + seg +
                                          "\nschedule.rounds=3\nschedule.steps_per_round=200\n"
                                          "schedule.alpha_start=8\nagent.workers=1\n");
  ASSERT_EQ(swt({"train-agent", "--config", cfg, "--quiet", "--out", path("ag")}).code, 0);
  std::istringstream lines(read("ag/rounds.jsonl"));
  std::vector<double> alphas;
  for (std::string line; std::getline(lines, line);) alphas.push_back(json::parse(line).at("alpha").get<double>());
  ASSERT_EQ(alphas.size(), 3u);
  EXPECT_DOUBLE_EQ(alphas[0], 8.0);
  EXPECT_DOUBLE_EQ(alphas[1], 4.0);
  EXPECT_DOUBLE_EQ(alphas[2], 0.0);
  for (int r = 0; r < 3; ++r) EXPECT_TRUE(fs::exists(path("ag/matrix_round_" + std::to_string(r) + ".csv")));
}

TEST_F(CliTest, NearestPrototypeSegmenterScoresPerfectlyOnNoiselessData) {
  ASSERT_EQ(swt({"gen-data", "--config", write("d.cfg", "seed=3\ndata.noise=0\ndata.test=6\n"), "--quiet", "--out",
                 path("data")})
                .code,
            0);
  // Linear logits x.p_k - |p_k|^2 / 2 rank classes by distance to prototype.
  seg::SoftmaxModel m(seg::kFeatureDim, seg::kNumClasses, 0);
  const auto pal = seg::palette();
  Vector p(m.parameter_count());
  for (int k = 0; k < seg::kNumClasses; ++k) {
    for (int f = 0; f < seg::kFeatureDim; ++f) p[k * seg::kFeatureDim + f] = pal(k, f);
    p[seg::kNumClasses * seg::kFeatureDim + k] = -0.5 * pal.row(k).squaredNorm();
  }
  m.set_params(p);
  agent::save_segmenter(dir_ / "oracle", m);
  const auto cfg =
      write("e.cfg", "seed=3\nseg.checkpoint=" + path("oracle") + "\ndata.dir=" + path("data") + "\neval.episodes=0\n");
  ASSERT_EQ(swt({"eval", "--config", cfg, "--quiet", "--out", path("ev")}).code, 0);
  const auto rep = json::parse(read("ev/eval_segmentation.json"));
  EXPECT_EQ(rep.at("miou").get<double>(), 1.0);
  EXPECT_EQ(rep.at("accuracy").get<double>(), 1.0);
  EXPECT_EQ(rep.at("severity").get<double>(), 0.0);
}

TEST_F(CliTest, RandomPolicyReportHasFiniteDistances) {
  const auto cfg = write("e.cfg", "seed=5\neval.policy=random\neval.episodes=20\ntrack.shoulder=6\ntrack.opposite_width=6\n");
  const auto r = swt({"eval", "--config", cfg, "--quiet", "--out", path("ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(read("ev/eval_driving.json"));
  for (const auto* key : {"drive_percent", "km", "km_per_hr", "mean_episode_length", "success_rate"}) {
    ASSERT_TRUE(rep.at(key).is_number()) << key;
    EXPECT_TRUE(std::isfinite(rep.at(key).get<double>())) << key;
  }
  const auto& counts = rep.at("infraction_counts");
  const int collisions = counts.at("collision-car").get<int>() + counts.at("collision-person").get<int>() +
                         counts.at("collision-static").get<int>();
  // Wide road edges keep random episodes alive long enough to hit something.
  ASSERT_GT(collisions, 0);
  const auto& per = rep.at("km_per_collision");
  ASSERT_TRUE(per.is_number());
  EXPECT_TRUE(std::isfinite(per.get<double>()));
  EXPECT_GT(per.get<double>(), 0.0);
  EXPECT_EQ(rep.at("episodes").get<int>(), 20);
  EXPECT_EQ(rep.at("policy").get<std::string>(), "random");
  const auto table = read("ev/eval_infractions.csv");
  EXPECT_EQ(table.rfind("infraction,km_between\n", 0), 0u);
  EXPECT_FALSE(read("ev/eval_driving_log.jsonl").empty());
}

TEST_F(CliTest, SegmentationReportSchema) {
  make_segmenter();
  const auto rep = json::parse(read("seg/report.json"));
  for (const auto* key : {"accuracy", "miou", "severity", "confusion", "classes", "pixels"}) {
    EXPECT_TRUE(rep.contains(key)) << key;
  }
  EXPECT_EQ(rep.at("classes").size(), static_cast<std::size_t>(seg::kNumClasses));
  EXPECT_EQ(rep.at("confusion").size(), static_cast<std::size_t>(seg::kNumClasses));
  long long total = 0;
  for (const auto& row : rep.at("confusion")) {
    for (const auto& v : row) total += v.get<long long>();
  }
  EXPECT_EQ(total, rep.at("pixels").get<long long>());
  const auto log = read("seg/train_log.jsonl");
  std::istringstream lines(log);
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j.contains("phase") && j.contains("step") && j.contains("loss"));
  }
  EXPECT_EQ(n, 50);
}

double cost_of(const std::string& out) {
  std::istringstream is(out);
  std::string word;
  double v = 0.0;
  is >> word >> v;
  EXPECT_EQ(word, "cost");
  return v;
}

TEST_F(CliTest, OtOneHotMatchesExactAgainstTheIndicator) {
  const auto d = path("d.csv");
  save_matrix(d, seg::default_severity_matrix());
  const auto s = write("s.csv", "0.1,0.2,0.05,0.15,0.2,0.1,0.1,0.1\n");
  const auto t = write("t.csv", "0,0,0,0,0,0,1,0\n");
  const auto exact = swt({"ot", "exact", "--source", s, "--target", t, "--matrix", d});
  const auto onehot = swt({"ot", "onehot", "--source", s, "--class", "6", "--matrix", d});
  ASSERT_EQ(exact.code, 0) << exact.err;
  ASSERT_EQ(onehot.code, 0) << onehot.err;
  // sum_i s_i D(i, person)
  const double expected = 0.1 * 13 + 0.2 * 5 + 0.05 * 5 + 0.15 * 9 + 0.2 * 1 + 0.1 * 1 + 0.1 * 0 + 0.1 * 1;
  EXPECT_NEAR(cost_of(exact.out), expected, 1e-9);
  EXPECT_NEAR(cost_of(onehot.out), expected, 1e-9);
}

TEST_F(CliTest, OtL1OfEqualHistogramsIsZero) {
  const auto s = write("s.csv", "0.3,0.1,0.6\n");
  const auto r = swt({"ot", "l1", "--source", s, "--target", s});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cost_of(r.out), 0.0);
}

TEST_F(CliTest, OtSinkhornReportsConvergence) {
  const auto d = write("d.csv", "0,1,2\n1,0,1\n2,1,0\n");
  const auto s = write("s.csv", "0.5,0.5,0\n");
  const auto t = write("t.csv", "0,0.5,0.5\n");
  const auto ok = swt({"ot", "sinkhorn", "--source", s, "--target", t, "--matrix", d, "--epsilon", "0.05"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("converged true"), std::string::npos) << ok.out;
  EXPECT_NEAR(cost_of(ok.out), 1.0, 1e-3);
  const auto capped =
      swt({"ot", "sinkhorn", "--source", s, "--target", t, "--matrix", d, "--epsilon", "0.01", "--max-iter", "1"});
  ASSERT_EQ(capped.code, 0) << capped.err;
  EXPECT_NE(capped.out.find("converged false"), std::string::npos) << capped.out;
  EXPECT_NE(capped.out.find("iterations 1"), std::string::npos) << capped.out;
}

TEST_F(CliTest, OtPlanIsWrittenAsCsv) {
  const auto d = write("d.csv", "0,1\n1,0\n");
  const auto s = write("s.csv", "1,0\n");
  const auto t = write("t.csv", "0,1\n");
  ASSERT_EQ(swt({"ot", "exact", "--source", s, "--target", t, "--matrix", d, "--plan", path("plan.csv")}).code, 0);
  const auto plan = io::read_csv_table(path("plan.csv"));
  EXPECT_EQ(plan(0, 1), 1.0);
  EXPECT_EQ(plan(0, 0) + plan(1, 0) + plan(1, 1), 0.0);
}

TEST_F(CliTest, OutputRootComesFromTheEnvironment) {
  ::setenv(kOutRootEnv, path("root").c_str(), 1);
  const auto r = swt({"gen-data", "--seed", "1", "--quiet"});
  ::unsetenv(kOutRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("root/gen-data/manifest.txt")));
}

}  // namespace
}  // namespace swt::cli
