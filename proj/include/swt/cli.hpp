#pragma once

// The `swt` command-line tool. Kept in a header so tests can run commands
// in-process and inspect their output.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "swt/agent.hpp"
#include "swt/dataset.hpp"
#include "swt/ground_metric.hpp"
#include "swt/io.hpp"
#include "swt/metrics.hpp"
#include "swt/ot.hpp"
#include "swt/seg_lab.hpp"

namespace swt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kOutRootEnv = "SWT_OUT_ROOT";

// Every key an experiment config may contain. Track settings live under
// "track." and are checked by the track parser itself.
inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "seed", "out",
      "data.dir", "data.height", "data.width", "data.noise", "data.objects_min", "data.objects_max", "data.shift",
      "data.train", "data.test", "data.target", "data.target_noise", "data.target_shift",
      "seg.checkpoint", "seg.hidden", "seg.pretrain_steps", "seg.pretrain_lr", "seg.loss", "seg.steps", "seg.lr",
      "seg.batch", "seg.log_every", "seg.eval_split",
      "loss.transform", "loss.rho", "loss.tau", "loss.epsilon",
      "selftrain.rounds", "selftrain.split", "selftrain.lambda", "selftrain.threshold", "selftrain.steps",
      "selftrain.lr",
      "matrix.source", "matrix.file", "matrix.base", "matrix.step",
      "schedule.rounds", "schedule.steps_per_round", "schedule.alpha_start", "schedule.frames",
      "schedule.segmenter_steps", "schedule.segmenter_lr", "schedule.freeze_segmenter",
      "agent.checkpoint", "agent.workers", "agent.lr", "agent.entropy", "agent.gamma", "agent.rollout",
      "agent.value_coef", "agent.max_grad_norm",
      "eval.episodes", "eval.policy", "eval.explore",
  };
  return keys;
}

inline void validate_keys(const io::Config& c) {
  for (const auto& [key, value] : c.values()) {
    if (key.rfind("track.", 0) == 0) continue;
    const auto& keys = known_keys();
    require(std::find(keys.begin(), keys.end(), key) != keys.end(), "unknown config key '", key, "'");
  }
}

struct Options {
  std::string config_path;
  std::optional<long long> seed;
  std::string out;
  bool quiet = false;
};

// Resolved view of the config plus command-line overrides.
class Experiment {
 public:
  Experiment(const Options& o, const std::string& command) {
    if (!o.config_path.empty()) {
      require(fs::exists(o.config_path), "config file '", o.config_path, "' not found");
      cfg_ = io::Config::load(o.config_path);
    }
    validate_keys(cfg_);
    if (o.seed) cfg_.set("seed", std::to_string(*o.seed));
    require(cfg_.has("seed"), "missing required config key 'seed' (set it in the config or pass --seed)");
    const auto s = cfg_.get_int("seed");
    require(s >= 0, "config key 'seed' must be nonnegative");
    seed_ = static_cast<std::uint64_t>(s);
    if (!o.out.empty()) {
      out_ = o.out;
    } else if (cfg_.has("out")) {
      out_ = cfg_.get_string("out");
    } else {
      const char* root = std::getenv(kOutRootEnv);
      out_ = fs::path(root && *root ? root : "swt_out") / command;
    }
    quiet_ = o.quiet;
    track_ = track_config();
  }

  const io::Config& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream(const char* name) const { return derive_seed(seed_, name); }
  const fs::path& out() const { return out_; }
  bool quiet() const { return quiet_; }
  const drive::TrackConfig& track() const { return track_; }

  double num(const std::string& key, double fallback) const { return cfg_.get_double(key, fallback); }
  int integer(const std::string& key, int fallback) const { return static_cast<int>(cfg_.get_int(key, fallback)); }
  long long big(const std::string& key, long long fallback) const { return cfg_.get_int(key, fallback); }
  std::string text(const std::string& key, const std::string& fallback) const {
    return cfg_.get_string(key, fallback);
  }
  bool flag(const std::string& key, bool fallback) const { return cfg_.get_bool(key, fallback); }

  fs::path existing_path(const std::string& key, const std::string& suffix = "") const {
    require(cfg_.has(key), "missing required config key '", key, "'");
    const fs::path p = cfg_.get_string(key);
    const fs::path probe = suffix.empty() ? p : fs::path(p).concat(suffix);
    require(fs::exists(probe), "config key '", key, "' points to missing file '", probe.string(), "'");
    return p;
  }

  void prepare_out() const {
    std::error_code ec;
    fs::create_directories(out_, ec);
    require(!ec && fs::is_directory(out_), "cannot create output directory '", out_.string(), "'");
  }

  seg::SceneConfig scene(bool target) const {
    seg::SceneConfig sc;
    sc.height = integer("data.height", 16);
    sc.width = integer("data.width", 16);
    sc.objects_min = integer("data.objects_min", 2);
    sc.objects_max = integer("data.objects_max", 5);
    sc.noise = num("data.noise", 0.2);
    if (cfg_.has("data.shift")) sc.shift = dataset::parse_shift(cfg_.get_string("data.shift"), "data.shift");
    if (target) {
      sc.noise = num("data.target_noise", sc.noise);
      if (cfg_.has("data.target_shift")) {
        sc.shift = dataset::parse_shift(cfg_.get_string("data.target_shift"), "data.target_shift");
      }
    }
    require(sc.height > 0 && sc.width > 0, "config keys 'data.height' and 'data.width' must be positive");
    require(sc.noise >= 0.0, "config key 'data.noise' must be nonnegative");
    require(sc.objects_min >= 0 && sc.objects_max >= sc.objects_min,
            "config keys 'data.objects_min'/'data.objects_max' must satisfy 0 <= min <= max");
    return sc;
  }

  MetricTransform transform() const {
    const auto kind = text("loss.transform", "linear");
    if (kind == "linear") return MetricTransform::linear();
    if (kind == "power") return MetricTransform::power(num("loss.rho", 2.0));
    if (kind == "huber") return MetricTransform::huber(num("loss.tau", 1.0));
    if (kind == "step") return MetricTransform::step();
    fail("config key 'loss.transform' must be linear, power, huber or step, got '", kind, "'");
  }

  // Predefined ground matrix, before any transform.
  GroundMatrix matrix() const {
    const auto source = text("matrix.source", "importance");
    if (source == "importance") return seg::default_severity_matrix(num("matrix.base", 1.0), num("matrix.step", 4.0));
    if (source == "ial") return build_importance_matrix(seg::default_grouping());
    if (source == "file" || source == "learned") {
      const auto p = existing_path("matrix.file");
      const auto m = load_matrix(p);
      require(m.size() == seg::kNumClasses, "config key 'matrix.file': matrix is ", m.size(), "x", m.size(),
              ", expected ", seg::kNumClasses, "x", seg::kNumClasses);
      return m;
    }
    fail("config key 'matrix.source' must be importance, ial, file or learned, got '", source, "'");
  }

  seg::LossSpec loss(const std::string& kind) const {
    if (kind == "ce") return seg::LossSpec::cross_entropy();
    if (kind == "wasserstein") return seg::LossSpec::wasserstein(matrix().transformed(transform()));
    if (kind == "sinkhorn") {
      const double eps = num("loss.epsilon", 0.5);
      require(eps > 0.0, "config key 'loss.epsilon' must be positive");
      return seg::LossSpec::sinkhorn_loss(matrix().transformed(transform()), eps);
    }
    fail("config key 'seg.loss' must be ce, wasserstein or sinkhorn, got '", kind, "'");
  }

  void note(const std::string& msg, std::ostream& os) const {
    if (!quiet_) os << msg << "\n";
  }

 private:
  drive::TrackConfig track_config() const {
    io::Config t;
    for (const auto& [key, value] : cfg_.values()) {
      if (key.rfind("track.", 0) == 0) t.set(key.substr(6), value);
    }
    try {
      return drive::TrackConfig::from_config(t);
    } catch (const Error& e) {
      fail(std::string(e.what()), " (track settings use the 'track.' prefix)");
    }
  }

  io::Config cfg_;
  std::uint64_t seed_ = 0;
  fs::path out_;
  bool quiet_ = false;
  drive::TrackConfig track_;
};

inline std::string jsonl(const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

inline json segmentation_report(const ConfusionMatrix& cm, const GroundMatrix& costs) {
  const auto names = seg::class_names();
  const std::vector<std::string> name_list(names.begin(), names.end());
  json j = to_json(iou(cm), name_list);
  j["accuracy"] = cm.accuracy();
  j["pixels"] = cm.total();
  j["severity"] = severity_score(cm, costs.transposed());
  json rows = json::array();
  for (int t = 0; t < cm.size(); ++t) {
    json row = json::array();
    for (int p = 0; p < cm.size(); ++p) row.push_back(cm(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;  // rows truth, columns prediction
  j["classes"] = name_list;
  return j;
}

inline std::string iou_csv(const ConfusionMatrix& cm) {
  const auto rep = iou(cm);
  const auto names = seg::class_names();
  std::string out = "class,iou\n";
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    out += std::string(names[k]) + "," + (rep.per_class[k] ? io::format_double(*rep.per_class[k]) : "absent") + "\n";
  }
  out += "mean," + io::format_double(rep.mean) + "\n";
  return out;
}

inline int cmd_gen_data(const Experiment& ex, std::ostream& out) {
  const fs::path dir = ex.out();
  std::vector<dataset::SplitSpec> splits = {{"train", ex.integer("data.train", 8), ex.scene(false)},
                                            {"test", ex.integer("data.test", 32), ex.scene(false)}};
  const int target = ex.integer("data.target", 0);
  if (target > 0) splits.push_back({"target", target, ex.scene(true)});
  dataset::generate(dir, ex.stream("data"), splits);
  ex.note("wrote dataset to " + dir.string(), out);
  return 0;
}

inline int cmd_train_seg(const Experiment& ex, std::ostream& out) {
  const auto data_dir = ex.existing_path("data.dir", "/" + std::string(dataset::kManifest));
  const auto train_set = dataset::load_split(data_dir, "train");
  ex.prepare_out();
  const int hidden = ex.integer("seg.hidden", 8);
  auto model = seg::SoftmaxModel::random(seg::kFeatureDim, seg::kNumClasses, hidden, ex.stream("init"));
  const int log_every = std::max(1, ex.integer("seg.log_every", 25));
  std::vector<json> log;
  auto observer = [&](const char* phase, int total) {
    return [&log, &train_set, phase, total, log_every](int step, double loss, const seg::SoftmaxModel& m) {
      json j{{"phase", phase}, {"step", step}, {"loss", loss}};
      if ((step + 1) % log_every == 0 || step + 1 == total) j["accuracy"] = seg::pixel_accuracy(m, train_set);
      log.push_back(std::move(j));
    };
  };
  const seg::TrainConfig pre{ex.num("seg.pretrain_lr", 0.5), ex.integer("seg.pretrain_steps", 300),
                             ex.integer("seg.batch", 4), ex.stream("pretrain")};
  model = seg::train(std::move(model), train_set, seg::LossSpec::cross_entropy(), pre, observer("pretrain", pre.steps))
              .model;
  const auto kind = ex.text("seg.loss", "wasserstein");
  const seg::TrainConfig ft{ex.num("seg.lr", 0.1), ex.integer("seg.steps", 300), ex.integer("seg.batch", 4),
                            ex.stream("finetune")};
  model = seg::train(std::move(model), train_set, ex.loss(kind), ft, observer(kind.c_str(), ft.steps)).model;

  const int st_rounds = ex.integer("selftrain.rounds", 0);
  if (st_rounds > 0) {
    const auto target = dataset::load_split(data_dir, ex.text("selftrain.split", "target"));
    seg::SelfTrainConfig sc;
    sc.rounds = st_rounds;
    sc.lambda = ex.num("selftrain.lambda", sc.lambda);
    sc.confidence_threshold = ex.num("selftrain.threshold", sc.confidence_threshold);
    sc.loss.sinkhorn.epsilon = ex.num("loss.epsilon", sc.loss.sinkhorn.epsilon);
    sc.train.steps = ex.integer("selftrain.steps", sc.train.steps);
    sc.train.lr = ex.num("selftrain.lr", sc.train.lr);
    sc.train.seed = ex.stream("self-train");
    const double before = seg::pixel_accuracy(model, target);
    auto res = seg::self_train(std::move(model), train_set, target, sc);
    model = std::move(res.model);
    for (std::size_t r = 0; r < res.rounds.size(); ++r) {
      const auto& rd = res.rounds[r];
      json j{{"phase", "self-train"}, {"round", r}, {"accepted_fraction", rd.accepted_fraction},
             {"skipped", rd.skipped}};
      if (!rd.warning.empty()) {
        j["warning"] = rd.warning;
        ex.note("warning: " + rd.warning, out);
      }
      log.push_back(std::move(j));
    }
    log.push_back({{"phase", "self-train"}, {"target_accuracy_before", before},
                   {"target_accuracy_after", seg::pixel_accuracy(model, target)}});
  }

  agent::save_segmenter(ex.out() / "segmenter", model);
  io::write_text(ex.out() / "train_log.jsonl", jsonl(log));
  const auto eval_set = dataset::load_split(data_dir, ex.text("seg.eval_split", "test"));
  const auto cm = seg::evaluate(model, eval_set);
  const auto report = segmentation_report(cm, ex.matrix());
  io::write_text(ex.out() / "report.json", report.dump(2) + "\n");
  io::write_text(ex.out() / "report_iou.csv", iou_csv(cm));
  std::ostringstream msg;
  msg << "accuracy " << std::setprecision(6) << cm.accuracy() << ", mIoU " << report["miou"].get<double>()
      << ", severity " << report["severity"].get<double>();
  ex.note(msg.str(), out);
  return 0;
}

inline int cmd_train_agent(const Experiment& ex, std::ostream& out) {
  const auto seg_stem = ex.existing_path("seg.checkpoint", ".meta");
  const auto segmenter = agent::load_segmenter(seg_stem);
  ex.prepare_out();
  const auto predefined = ex.matrix();
  const auto f = ex.transform();
  agent::AlternationSchedule sched;
  sched.rounds = ex.integer("schedule.rounds", 5);
  sched.agent_steps_per_round = ex.big("schedule.steps_per_round", 6000);
  sched.alpha_start = ex.num("schedule.alpha_start", 10.0);
  sched.frames = ex.integer("schedule.frames", 64);
  sched.segmenter_steps = ex.integer("schedule.segmenter_steps", 50);
  sched.segmenter_lr = ex.num("schedule.segmenter_lr", 0.05);
  sched.freeze_segmenter = ex.flag("schedule.freeze_segmenter", false);
  require(sched.rounds >= 0, "config key 'schedule.rounds' must be nonnegative");
  require(sched.alpha_start >= 0.0, "config key 'schedule.alpha_start' must be nonnegative");

  agent::RunConfig rc;
  rc.seed = ex.stream("agent");
  rc.rollout_length = ex.integer("agent.rollout", 20);
  rc.update.lr = ex.num("agent.lr", 7e-4);
  rc.update.entropy_coef = ex.num("agent.entropy", 0.01);
  rc.update.gamma = ex.num("agent.gamma", 0.99);
  rc.update.value_coef = ex.num("agent.value_coef", 0.5);
  rc.update.max_grad_norm = ex.num("agent.max_grad_norm", 40.0);
  const int workers = ex.integer("agent.workers", 4);
  require(workers >= 1, "config key 'agent.workers' must be at least 1");
  const std::vector<drive::TrackConfig> envs(static_cast<std::size_t>(workers), ex.track());

  auto a = agent::AgentState::create({drive::latent_size(segmenter) * 2, drive::kMeasurementCount}, ex.stream("init"));
  const auto res = agent::alternate_optimize(segmenter, std::move(a), sched, predefined, f, envs, rc);

  std::vector<json> rounds, episodes;
  for (const auto& r : res.rounds) {
    save_matrix(ex.out() / ("matrix_round_" + std::to_string(r.round) + ".csv"), r.matrix);
    double len = 0.0, reward = 0.0;
    for (const auto& e : r.episodes) {
      len += e.length;
      reward += e.total_reward;
      episodes.push_back({{"round", r.round}, {"worker", e.worker}, {"episode", e.episode}, {"length", e.length},
                          {"reward", e.total_reward}, {"reason", drive::to_string(e.reason)}});
    }
    const double n = std::max<std::size_t>(1, r.episodes.size());
    rounds.push_back({{"round", r.round}, {"alpha", r.alpha}, {"episodes", r.episodes.size()},
                      {"mean_length", len / n}, {"mean_reward", reward / n}});
    std::ostringstream msg;
    msg << "round " << r.round << ": alpha " << r.alpha << ", " << r.episodes.size() << " episodes, mean length "
        << std::setprecision(4) << len / n;
    ex.note(msg.str(), out);
  }
  save_matrix(ex.out() / "matrix.csv", res.matrix);
  agent::save_agent(ex.out() / "agent", res.agent);
  agent::save_segmenter(ex.out() / "segmenter", res.segmenter);
  io::write_text(ex.out() / "rounds.jsonl", jsonl(rounds));
  io::write_text(ex.out() / "episodes.jsonl", jsonl(episodes));
  return 0;
}

inline int cmd_eval(const Experiment& ex, std::ostream& out) {
  ex.prepare_out();
  std::optional<seg::SoftmaxModel> segmenter;
  if (ex.config().has("seg.checkpoint")) segmenter = agent::load_segmenter(ex.existing_path("seg.checkpoint", ".meta"));

  if (ex.config().has("data.dir")) {
    require(segmenter.has_value(), "segmentation evaluation needs config key 'seg.checkpoint'");
    const auto data_dir = ex.existing_path("data.dir", "/" + std::string(dataset::kManifest));
    const auto cm = seg::evaluate(*segmenter, dataset::load_split(data_dir, ex.text("seg.eval_split", "test")));
    io::write_text(ex.out() / "eval_segmentation.json", segmentation_report(cm, ex.matrix()).dump(2) + "\n");
    io::write_text(ex.out() / "eval_iou.csv", iou_csv(cm));
  }

  const int episodes = ex.integer("eval.episodes", 20);
  if (episodes > 0) {
    const auto policy = ex.text("eval.policy", "random");
    std::optional<agent::AgentState> trained;
    if (policy == "agent") {
      require(segmenter.has_value(), "eval.policy=agent needs config key 'seg.checkpoint'");
      trained = agent::load_agent(ex.existing_path("agent.checkpoint", ".meta"));
    } else {
      require(policy == "random", "config key 'eval.policy' must be agent or random, got '", policy, "'");
    }
    // The random policy never looks at observations.
    const auto seg_for_obs = segmenter ? *segmenter : seg::SoftmaxModel(seg::kFeatureDim, seg::kNumClasses);
    std::vector<drive::StepRecord> log;
    const auto summaries = agent::evaluate_policy(trained ? &*trained : nullptr, ex.track(), seg_for_obs, episodes,
                                                  ex.stream("evaluate"), ex.flag("eval.explore", true), &log);
    std::vector<DrivingRecord> records;
    for (const auto& ep : drive::split_episodes(log)) records.push_back(drive::to_driving_record(ep));
    const auto rep = driving_metrics(records, ex.track().max_steps * episodes, ex.track().step_seconds);
    json j = to_json(rep);
    j["policy"] = policy;
    j["success_rate"] = success_rate(records);
    double mean_len = 0.0;
    for (const auto& s : summaries) mean_len += s.length;
    j["mean_episode_length"] = mean_len / episodes;
    io::write_text(ex.out() / "eval_driving.json", j.dump(2) + "\n");
    io::write_text(ex.out() / "eval_infractions.csv", infraction_table_csv(rep));
    io::write_text(ex.out() / "eval_driving_log.jsonl", drive::to_jsonl(log));
    std::ostringstream msg;
    msg << policy << " policy: mean episode length " << std::setprecision(5) << mean_len / episodes;
    ex.note(msg.str(), out);
  }
  return 0;
}

struct OtArgs {
  std::string source, target, matrix, plan;
  int cls = -1;
  double epsilon = 0.1;
  int max_iter = 10000;
  double tol = 1e-9;
};

inline Histogram read_histogram(const std::string& path, const char* flag) {
  require(!path.empty(), "missing ", flag);
  require(fs::exists(path), flag, " file '", path, "' not found");
  return Histogram::unnormalized(io::read_csv_vector(path));
}

inline GroundMatrix read_ground(const std::string& path) {
  require(!path.empty(), "missing --matrix");
  require(fs::exists(path), "--matrix file '", path, "' not found");
  return load_matrix(path);
}

inline void print_cost(std::ostream& out, double cost) {
  out << "cost " << std::setprecision(12) << cost << "\n";
}

inline void emit_plan(const OtArgs& a, const TransportPlan& p, std::ostream& out) {
  if (a.plan.empty()) return;
  if (a.plan == "-") {
    out << io::format_csv_table(p.flow);
  } else {
    io::write_csv_table(a.plan, p.flow);
  }
}

inline int cmd_ot(const std::string& mode, const OtArgs& a, std::ostream& out) {
  if (mode == "l1") {
    print_cost(out, l1_wasserstein(read_histogram(a.source, "--source"), read_histogram(a.target, "--target")));
    return 0;
  }
  const auto s = read_histogram(a.source, "--source");
  const auto d = read_ground(a.matrix);
  if (mode == "onehot") {
    require(a.cls >= 0, "onehot needs --class");
    const auto r = onehot_wasserstein(s, a.cls, d);
    print_cost(out, r.cost);
    emit_plan(a, r.plan, out);
    return 0;
  }
  const auto t = read_histogram(a.target, "--target");
  if (mode == "exact") {
    const auto r = exact_wasserstein(s, t, d);
    print_cost(out, r.cost);
    emit_plan(a, r.plan, out);
    return 0;
  }
  const auto r = sinkhorn(s, t, d, {a.epsilon, a.max_iter, a.tol});
  print_cost(out, r.cost);
  out << "converged " << (r.converged ? "true" : "false") << "\n";
  out << "iterations " << r.iterations << "\n";
  emit_plan(a, r.plan, out);
  return 0;
}

// Exit codes: 0 success, 1 failed command, 2 bad command line.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Severity-aware Wasserstein training toolkit"};
  app.require_subcommand(1);
  Options opt;
  long long seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key=value experiment config");
    sub->add_option("--seed", seed_value, "seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
  };
  auto* gen = app.add_subcommand("gen-data", "generate a toy segmentation dataset");
  auto* tseg = app.add_subcommand("train-seg", "pretrain with CE, fine-tune with the selected loss");
  auto* tagent = app.add_subcommand("train-agent", "alternate agent training and ground-matrix updates");
  auto* eval = app.add_subcommand("eval", "segmentation and driving reports");
  for (auto* sub : {gen, tseg, tagent, eval}) add_common(sub);

  auto* ot = app.add_subcommand("ot", "optimal transport between histograms in CSV files");
  ot->require_subcommand(1);
  OtArgs oa;
  std::string ot_mode;
  for (const char* mode : {"exact", "onehot", "sinkhorn", "l1"}) {
    auto* sub = ot->add_subcommand(mode);
    sub->add_option("--source", oa.source, "source histogram CSV")->required();
    if (std::string(mode) != "onehot") sub->add_option("--target", oa.target, "target histogram CSV")->required();
    if (std::string(mode) != "l1") sub->add_option("--matrix", oa.matrix, "ground matrix CSV")->required();
    if (std::string(mode) == "onehot") sub->add_option("--class", oa.cls, "true class index")->required();
    if (std::string(mode) == "sinkhorn") {
      sub->add_option("--epsilon", oa.epsilon, "entropic regularization");
      sub->add_option("--max-iter", oa.max_iter, "iteration cap");
      sub->add_option("--tol", oa.tol, "marginal tolerance");
    }
    if (std::string(mode) != "l1") sub->add_option("--plan", oa.plan, "write the plan as CSV (- for stdout)");
    sub->callback([&ot_mode, mode] { ot_mode = mode; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    if (!ot_mode.empty()) return cmd_ot(ot_mode, oa, out);
    for (auto* sub : {gen, tseg, tagent, eval}) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) opt.seed = seed_value;
      const Experiment ex(opt, sub->get_name());
      if (sub == gen) return cmd_gen_data(ex, out);
      if (sub == tseg) return cmd_train_seg(ex, out);
      if (sub == tagent) return cmd_train_agent(ex, out);
      return cmd_eval(ex, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace swt::cli
