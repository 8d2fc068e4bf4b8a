#pragma once

// Scaled-down experiments shared by the command-line tool, the demos and the
// acceptance checks.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "swt/agent.hpp"
#include "swt/metrics.hpp"
#include "swt/seg_lab.hpp"

namespace swt::experiments {

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<seg::SceneSample> scenes(std::uint64_t seed, const char* name, int count,
                                            const seg::SceneConfig& cfg) {
  std::vector<seg::SceneSample> out;
  for (int k = 0; k < count; ++k) out.push_back(seg::generate_scene(derive_seed(seed, name, k), cfg));
  return out;
}

// CE pretraining, then both arms continue for the same number of steps: one
// with CE, one with the Wasserstein loss under `costs`. Severity is scored
// with the same matrix on held-out scenes.
struct SeverityConfig {
  int seeds = 5;
  std::uint64_t base_seed = 0;
  seg::SceneConfig scene{16, 16, 2, 5, 0.2, {}};
  int train_scenes = 8;
  int test_scenes = 32;
  int hidden = 8;
  seg::TrainConfig pretrain{0.5, 300, 4, 0};
  seg::TrainConfig finetune{0.1, 300, 4, 0};
  GroundMatrix costs = seg::default_severity_matrix();
};

struct SeverityRun {
  std::uint64_t seed = 0;
  ConfusionMatrix ce{seg::kNumClasses};
  ConfusionMatrix wasserstein{seg::kNumClasses};
  double accuracy_ce = 0.0;
  double accuracy_w = 0.0;
  double severity_ce = 0.0;
  double severity_w = 0.0;
};

struct SeverityReport {
  std::vector<SeverityRun> runs;
  double mean_accuracy_ce = 0.0;
  double mean_accuracy_w = 0.0;
  double mean_severity_ce = 0.0;
  double mean_severity_w = 0.0;
};

inline SeverityRun severity_run(const SeverityConfig& cfg, std::uint64_t seed) {
  const auto train_set = scenes(seed, "severity-train", cfg.train_scenes, cfg.scene);
  const auto test_set = scenes(seed, "severity-test", cfg.test_scenes, cfg.scene);
  auto pre_cfg = cfg.pretrain;
  pre_cfg.seed = derive_seed(seed, "pretrain");
  auto ft_cfg = cfg.finetune;
  ft_cfg.seed = derive_seed(seed, "finetune");
  const auto pre = seg::train(seg::SoftmaxModel::random(seg::kFeatureDim, seg::kNumClasses, cfg.hidden, seed),
                              train_set, seg::LossSpec::cross_entropy(), pre_cfg)
                       .model;
  const auto ce = seg::train(pre, train_set, seg::LossSpec::cross_entropy(), ft_cfg).model;
  const auto w = seg::train(pre, train_set, seg::LossSpec::wasserstein(cfg.costs), ft_cfg).model;
  SeverityRun r;
  r.seed = seed;
  r.ce = seg::evaluate(ce, test_set);
  r.wasserstein = seg::evaluate(w, test_set);
  r.accuracy_ce = r.ce.accuracy();
  r.accuracy_w = r.wasserstein.accuracy();
  // Confusion rows are truth; severity wants (truth, prediction) costs.
  const auto truth_pred = cfg.costs.transposed();
  r.severity_ce = severity_score(r.ce, truth_pred);
  r.severity_w = severity_score(r.wasserstein, truth_pred);
  return r;
}

inline SeverityReport severity_experiment(const SeverityConfig& cfg) {
  require(cfg.seeds >= 1, "need at least one seed");
  SeverityReport rep;
  for (int k = 0; k < cfg.seeds; ++k) {
    rep.runs.push_back(severity_run(cfg, cfg.base_seed + static_cast<std::uint64_t>(k)));
    const auto& r = rep.runs.back();
    rep.mean_accuracy_ce += r.accuracy_ce / cfg.seeds;
    rep.mean_accuracy_w += r.accuracy_w / cfg.seeds;
    rep.mean_severity_ce += r.severity_ce / cfg.seeds;
    rep.mean_severity_w += r.severity_w / cfg.seeds;
  }
  return rep;
}

// Source-trained model adapted to a target domain whose features are shifted
// and noisier, using conservative pseudo-labels and the Sinkhorn loss.
struct SelfTrainExperimentConfig {
  int seeds = 5;
  std::uint64_t base_seed = 0;
  seg::SceneConfig source{16, 16, 2, 5, 0.25, {}};
  seg::SceneConfig target{16, 16, 2, 5, 0.3, {0.35, 0.175, 0.0}};
  int source_scenes = 6;
  int target_scenes = 6;
  int hidden = 8;
  seg::TrainConfig pretrain{0.5, 300, 4, 0};
  seg::SelfTrainConfig self_train;
};

struct SelfTrainRun {
  std::uint64_t seed = 0;
  double accuracy_before = 0.0;
  std::vector<double> accuracy_after_round;  // one per round
  std::vector<double> accepted_fraction;
};

struct SelfTrainReport {
  std::vector<SelfTrainRun> runs;
  double median_gain = 0.0;  // final-round accuracy minus the starting accuracy
};

inline SelfTrainRun self_train_run(const SelfTrainExperimentConfig& cfg, std::uint64_t seed) {
  const auto src = scenes(seed, "source", cfg.source_scenes, cfg.source);
  const auto tgt = scenes(seed, "target", cfg.target_scenes, cfg.target);
  auto pre_cfg = cfg.pretrain;
  pre_cfg.seed = derive_seed(seed, "pretrain");
  auto model = seg::train(seg::SoftmaxModel::random(seg::kFeatureDim, seg::kNumClasses, cfg.hidden, seed), src,
                          seg::LossSpec::cross_entropy(), pre_cfg)
                   .model;
  SelfTrainRun run;
  run.seed = seed;
  run.accuracy_before = seg::pixel_accuracy(model, tgt);
  // One round at a time so every round's accuracy is visible.
  auto st = cfg.self_train;
  for (int r = 0; r < cfg.self_train.rounds; ++r) {
    st.rounds = 1;
    st.train.seed = derive_seed(seed, "self-train-round", static_cast<std::uint64_t>(r));
    auto res = seg::self_train(std::move(model), src, tgt, st);
    model = std::move(res.model);
    run.accepted_fraction.push_back(res.rounds.front().accepted_fraction);
    run.accuracy_after_round.push_back(seg::pixel_accuracy(model, tgt));
  }
  return run;
}

inline SelfTrainReport self_train_experiment(const SelfTrainExperimentConfig& cfg) {
  require(cfg.seeds >= 1, "need at least one seed");
  SelfTrainReport rep;
  std::vector<double> gains;
  for (int k = 0; k < cfg.seeds; ++k) {
    rep.runs.push_back(self_train_run(cfg, cfg.base_seed + static_cast<std::uint64_t>(k)));
    const auto& r = rep.runs.back();
    gains.push_back((r.accuracy_after_round.empty() ? r.accuracy_before : r.accuracy_after_round.back()) -
                    r.accuracy_before);
  }
  rep.median_gain = median(gains);
  return rep;
}

// Trains an agent on the default track and compares its mean episode length
// with uniformly random actions.
struct DrivingExperimentConfig {
  int seeds = 3;
  std::uint64_t base_seed = 0;
  drive::TrackConfig track;
  int workers = 4;
  long steps = 30000;
  int eval_episodes = 50;
  int segmenter_hidden = 8;
  agent::UpdateConfig update;
};

struct DrivingRun {
  std::uint64_t seed = 0;
  double random_mean_length = 0.0;
  double trained_mean_length = 0.0;
  double ratio = 0.0;
  std::vector<agent::EpisodeSummary> training_episodes;
};

struct DrivingReport {
  std::vector<DrivingRun> runs;
  double median_ratio = 0.0;
};

// Segmenter for the agent's observations, trained on scenes with the
// renderer's noise level.
inline seg::SoftmaxModel driving_segmenter(std::uint64_t seed, int hidden, double noise) {
  seg::SceneConfig sc{16, 16, 2, 5, noise, {}};
  const auto data = scenes(seed, "segmenter-scenes", 6, sc);
  return seg::train(seg::SoftmaxModel::random(seg::kFeatureDim, seg::kNumClasses, hidden, seed), data,
                    seg::LossSpec::cross_entropy(), {0.5, 300, 4, derive_seed(seed, "segmenter-train")})
      .model;
}

inline double mean_length(std::span<const agent::EpisodeSummary> eps) {
  double s = 0.0;
  for (const auto& e : eps) s += e.length;
  return eps.empty() ? 0.0 : s / static_cast<double>(eps.size());
}

inline DrivingRun driving_run(const DrivingExperimentConfig& cfg, std::uint64_t seed) {
  const auto segmenter = driving_segmenter(seed, cfg.segmenter_hidden, cfg.track.render_noise);
  auto a = agent::AgentState::create({drive::latent_size(segmenter) * 2, drive::kMeasurementCount},
                                     derive_seed(seed, "agent"));
  const std::vector<drive::TrackConfig> envs(static_cast<std::size_t>(cfg.workers), cfg.track);
  agent::RunConfig rc;
  rc.total_steps = cfg.steps;
  rc.seed = derive_seed(seed, "actors");
  rc.update = cfg.update;
  auto trained = agent::run_actors(std::move(a), envs, segmenter, rc);
  const auto eval_seed = derive_seed(seed, "evaluation");
  DrivingRun run;
  run.seed = seed;
  run.random_mean_length = mean_length(agent::evaluate_policy(nullptr, cfg.track, segmenter, cfg.eval_episodes, eval_seed));
  run.trained_mean_length =
      mean_length(agent::evaluate_policy(&trained.agent, cfg.track, segmenter, cfg.eval_episodes, eval_seed));
  run.ratio = run.trained_mean_length / run.random_mean_length;
  run.training_episodes = std::move(trained.episodes);
  return run;
}

inline DrivingReport driving_experiment(const DrivingExperimentConfig& cfg) {
  require(cfg.seeds >= 1, "need at least one seed");
  DrivingReport rep;
  std::vector<double> ratios;
  for (int k = 0; k < cfg.seeds; ++k) {
    rep.runs.push_back(driving_run(cfg, cfg.base_seed + static_cast<std::uint64_t>(k)));
    ratios.push_back(rep.runs.back().ratio);
  }
  rep.median_ratio = median(ratios);
  return rep;
}

}  // namespace swt::experiments
