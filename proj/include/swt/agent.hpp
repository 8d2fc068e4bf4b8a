#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "swt/core.hpp"
#include "swt/driveworld.hpp"
#include "swt/ground_metric.hpp"
#include "swt/io.hpp"
#include "swt/rng.hpp"
#include "swt/seg_lab.hpp"

namespace swt::agent {

inline constexpr int kActionDim = 3;

struct NetShape {
  int latent = 0;
  int measurements = drive::kMeasurementCount;
  int latent_hidden = 32;
  int measurement_hidden = 16;
  int trunk = 64;

  bool operator==(const NetShape&) const = default;
};

// Two input branches (latent grid, measurements) fused into a tanh trunk
// with a Gaussian policy head (state-independent log-std) and a value head.
// Flat parameter layout, matrices column-major:
//   W_l b_l | W_m b_m | W_t b_t | W_mu b_mu | log_std | w_v b_v
class PolicyValueNet {
 public:
  explicit PolicyValueNet(NetShape s) : s_(s) {
    require(s.latent > 0 && s.measurements > 0 && s.latent_hidden > 0 && s.measurement_hidden > 0 && s.trunk > 0,
            "all network sizes must be positive");
    Eigen::Index o = 0;
    auto take = [&o](Eigen::Index n) {
      const auto at = o;
      o += n;
      return at;
    };
    w_l_ = take(s.latent_hidden * s.latent);
    b_l_ = take(s.latent_hidden);
    w_m_ = take(s.measurement_hidden * s.measurements);
    b_m_ = take(s.measurement_hidden);
    w_t_ = take(s.trunk * fused());
    b_t_ = take(s.trunk);
    w_mu_ = take(kActionDim * s.trunk);
    b_mu_ = take(kActionDim);
    log_std_ = take(kActionDim);
    w_v_ = take(s.trunk);
    b_v_ = take(1);
    count_ = o;
  }

  const NetShape& shape() const { return s_; }
  Eigen::Index parameter_count() const { return count_; }
  Eigen::Index log_std_offset() const { return log_std_; }
  Eigen::Index policy_head_offset() const { return w_mu_; }
  Eigen::Index value_head_offset() const { return w_v_; }

  // Scaled-normal init; the heads start small so the initial policy is
  // close to N(0, initial_std) and values close to zero.
  Vector initial_params(std::uint64_t seed, double initial_std = 0.5) const {
    Vector p = Vector::Zero(count_);
    Rng rng = substream(seed, "agent-init");
    auto fill = [&](Eigen::Index at, Eigen::Index n, double scale) {
      for (Eigen::Index k = 0; k < n; ++k) p[at + k] = scale * normal(rng);
    };
    fill(w_l_, s_.latent_hidden * s_.latent, 1.0 / std::sqrt(static_cast<double>(s_.latent)));
    fill(w_m_, s_.measurement_hidden * s_.measurements, 1.0 / std::sqrt(static_cast<double>(s_.measurements)));
    fill(w_t_, s_.trunk * fused(), 1.0 / std::sqrt(static_cast<double>(fused())));
    fill(w_mu_, kActionDim * s_.trunk, 0.01);
    fill(w_v_, s_.trunk, 0.01);
    p.segment(log_std_, kActionDim).setConstant(std::log(initial_std));
    return p;
  }

  struct Cache {
    Vector x_l, x_m, a_l, a_m, h, mu;
    double value = 0.0;
  };

  Cache forward(const Vector& p, const drive::Observation& o) const {
    check(p);
    require(o.latent.size() == s_.latent && o.measurements.size() == s_.measurements, "observation sizes (",
            o.latent.size(), ", ", o.measurements.size(), ") do not match the network (", s_.latent, ", ",
            s_.measurements, ")");
    Cache c;
    c.x_l = o.latent;
    c.x_m = o.measurements;
    c.a_l = (mat(p, w_l_, s_.latent_hidden, s_.latent) * c.x_l + vec(p, b_l_, s_.latent_hidden)).array().tanh();
    c.a_m = (mat(p, w_m_, s_.measurement_hidden, s_.measurements) * c.x_m + vec(p, b_m_, s_.measurement_hidden))
                .array()
                .tanh();
    Vector fused_in(fused());
    fused_in << c.a_l, c.a_m;
    c.h = (mat(p, w_t_, s_.trunk, fused()) * fused_in + vec(p, b_t_, s_.trunk)).array().tanh();
    c.mu = mat(p, w_mu_, kActionDim, s_.trunk) * c.h + vec(p, b_mu_, kActionDim);
    c.value = vec(p, w_v_, s_.trunk).dot(c.h) + p[b_v_];
    return c;
  }

  Vector log_std(const Vector& p) const { return p.segment(log_std_, kActionDim); }

  // Accumulates into grad the gradient of a scalar whose partials with
  // respect to mu, log_std and V are given.
  void backward(const Vector& p, const Cache& c, const Vector& dmu, const Vector& dlog_std, double dvalue,
                Vector& grad) const {
    Vector dh = mat(p, w_mu_, kActionDim, s_.trunk).transpose() * dmu + dvalue * vec(p, w_v_, s_.trunk);
    mat(grad, w_mu_, kActionDim, s_.trunk) += dmu * c.h.transpose();
    vec(grad, b_mu_, kActionDim) += dmu;
    vec(grad, log_std_, kActionDim) += dlog_std;
    vec(grad, w_v_, s_.trunk) += dvalue * c.h;
    grad[b_v_] += dvalue;

    const Vector dz_t = dh.cwiseProduct((1.0 - c.h.array().square()).matrix());
    Vector fused_in(fused());
    fused_in << c.a_l, c.a_m;
    mat(grad, w_t_, s_.trunk, fused()) += dz_t * fused_in.transpose();
    vec(grad, b_t_, s_.trunk) += dz_t;
    const Vector dfused = mat(p, w_t_, s_.trunk, fused()).transpose() * dz_t;

    const Vector dz_l = dfused.head(s_.latent_hidden).cwiseProduct((1.0 - c.a_l.array().square()).matrix());
    const Vector dz_m = dfused.tail(s_.measurement_hidden).cwiseProduct((1.0 - c.a_m.array().square()).matrix());
    mat(grad, w_l_, s_.latent_hidden, s_.latent) += dz_l * c.x_l.transpose();
    vec(grad, b_l_, s_.latent_hidden) += dz_l;
    mat(grad, w_m_, s_.measurement_hidden, s_.measurements) += dz_m * c.x_m.transpose();
    vec(grad, b_m_, s_.measurement_hidden) += dz_m;
  }

 private:
  int fused() const { return s_.latent_hidden + s_.measurement_hidden; }
  void check(const Vector& p) const {
    require(p.size() == count_, "parameter vector has ", p.size(), " entries, network needs ", count_);
  }
  static Eigen::Map<const Matrix> mat(const Vector& p, Eigen::Index at, Eigen::Index r, Eigen::Index c) {
    return {p.data() + at, r, c};
  }
  static Eigen::Map<Matrix> mat(Vector& p, Eigen::Index at, Eigen::Index r, Eigen::Index c) {
    return {p.data() + at, r, c};
  }
  static Eigen::Map<const Vector> vec(const Vector& p, Eigen::Index at, Eigen::Index n) { return {p.data() + at, n}; }
  static Eigen::Map<Vector> vec(Vector& p, Eigen::Index at, Eigen::Index n) { return {p.data() + at, n}; }

  NetShape s_;
  Eigen::Index w_l_ = 0, b_l_ = 0, w_m_ = 0, b_m_ = 0, w_t_ = 0, b_t_ = 0, w_mu_ = 0, b_mu_ = 0, log_std_ = 0,
               w_v_ = 0, b_v_ = 0, count_ = 0;
};

// Squashing: steer = tanh(u0), throttle = sigmoid(u1), brake = sigmoid(u2).
inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

inline drive::Action squash(const Vector& u) { return {std::tanh(u[0]), sigmoid(u[1]), sigmoid(u[2])}; }

// log N(u; mu, exp(log_std)) summed over action dimensions.
inline double gaussian_log_density(const Vector& u, const Vector& mu, const Vector& log_std) {
  double lp = 0.0;
  for (int k = 0; k < kActionDim; ++k) {
    const double z = (u[k] - mu[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

// log |d squash / du| summed over dimensions, in numerically stable forms.
inline double squash_log_jacobian(const Vector& u) {
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const double tanh_term = 2.0 * (std::log(2.0) - u[0] - softplus(-2.0 * u[0]));
  double sig_terms = 0.0;
  for (int k = 1; k < kActionDim; ++k) sig_terms += -softplus(-u[k]) - softplus(u[k]);
  return tanh_term + sig_terms;
}

inline double gaussian_entropy(const Vector& log_std) {
  return log_std.sum() + 0.5 * kActionDim * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

struct ActResult {
  drive::Action action;
  Vector u;                   // pre-squash sample
  double log_prob = 0.0;      // of the squashed action
  double log_density = 0.0;   // Gaussian part, used for importance ratios
  double value = 0.0;
};

inline ActResult act(const PolicyValueNet& net, const Vector& params, const drive::Observation& obs, bool explore,
                     Rng& rng) {
  const auto c = net.forward(params, obs);
  const Vector ls = net.log_std(params);
  if (!c.mu.allFinite() || !ls.allFinite() || !std::isfinite(c.value)) fail("policy network produced a non-finite output");
  ActResult r;
  r.u = c.mu;
  if (explore) {
    for (int k = 0; k < kActionDim; ++k) r.u[k] += std::exp(ls[k]) * normal(rng);
  }
  r.action = squash(r.u);
  r.log_density = gaussian_log_density(r.u, c.mu, ls);
  r.log_prob = r.log_density - squash_log_jacobian(r.u);
  r.value = c.value;
  return r;
}

inline double td_error(double r, double gamma, double v_next, double v_now, bool terminal) {
  return r + gamma * v_next * (terminal ? 0.0 : 1.0) - v_now;
}

struct Transition {
  drive::Observation obs;
  Vector u;
  drive::Action action;
  double behavior_log_density = 0.0;
  double reward = 0.0;
  bool terminal = false;
  double value = 0.0;  // V(s_t) when collected
};

struct Rollout {
  std::vector<Transition> steps;
  double bootstrap = 0.0;  // V of the state after the last step, 0 when terminal
};

struct Returns {
  std::vector<double> returns;
  std::vector<double> advantages;
};

inline void validate_rollout(const Rollout& r) {
  require(!r.steps.empty(), "rollout is empty");
  for (std::size_t k = 0; k + 1 < r.steps.size(); ++k) {
    require(!r.steps[k].terminal, "rollout continues past a terminal step at index ", k);
  }
}

inline Returns rollout_returns(const Rollout& r, double gamma) {
  validate_rollout(r);
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  const std::size_t n = r.steps.size();
  Returns out;
  out.returns.resize(n);
  out.advantages.resize(n);
  double acc = r.steps.back().terminal ? 0.0 : r.bootstrap;
  for (std::size_t k = n; k-- > 0;) {
    acc = r.steps[k].reward + gamma * acc;
    out.returns[k] = acc;
    out.advantages[k] = acc - r.steps[k].value;
  }
  return out;
}

struct UpdateConfig {
  double lr = 7e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double gamma = 0.99;
  double max_grad_norm = 40.0;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-5;
};

struct AgentState {
  NetShape shape;
  Vector params;
  Vector rms;  // RMSProp second-moment estimate
  long updates = 0;

  static AgentState create(NetShape shape, std::uint64_t seed) {
    const PolicyValueNet net(shape);
    AgentState a{shape, net.initial_params(seed), Vector::Zero(net.parameter_count()), 0};
    return a;
  }
};

// Per-transition quantities held fixed while differentiating the surrogate:
// returns, advantages and clipped importance weights.
struct SurrogateTerms {
  std::vector<double> returns;
  std::vector<double> advantages;
  std::vector<double> weights;
};

inline SurrogateTerms surrogate_terms(const PolicyValueNet& net, const Vector& params, std::span<const Rollout> rollouts,
                                      double gamma) {
  SurrogateTerms t;
  const Vector ls = net.log_std(params);
  for (const auto& r : rollouts) {
    const auto ret = rollout_returns(r, gamma);
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
      const auto c = net.forward(params, r.steps[k].obs);
      const double log_ratio = gaussian_log_density(r.steps[k].u, c.mu, ls) - r.steps[k].behavior_log_density;
      t.returns.push_back(ret.returns[k]);
      t.advantages.push_back(ret.returns[k] - c.value);
      t.weights.push_back(std::min(1.0, std::exp(log_ratio)));
    }
  }
  return t;
}

struct SurrogateEval {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  Vector grad;
};

// Mean over transitions of
//   -w A log pi(u) - entropy_coef H + value_coef (R - V)^2 / 2
// with w, A, R taken from `terms` (constants).
inline SurrogateEval surrogate(const PolicyValueNet& net, const Vector& params, std::span<const Rollout> rollouts,
                               const SurrogateTerms& terms, double entropy_coef, double value_coef) {
  SurrogateEval ev;
  const Vector ls = net.log_std(params);
  const Vector inv_var = (-2.0 * ls.array()).exp();
  const double entropy = gaussian_entropy(ls);
  CompensatedVector grad(net.parameter_count());
  CompensatedSum policy, value;
  std::size_t idx = 0;
  Vector g(net.parameter_count());
  for (const auto& r : rollouts) {
    for (const auto& tr : r.steps) {
      require(idx < terms.advantages.size(), "surrogate terms cover fewer transitions than the rollouts");
      const auto c = net.forward(params, tr.obs);
      const double wa = terms.weights[idx] * terms.advantages[idx];
      const double logp = gaussian_log_density(tr.u, c.mu, ls) - squash_log_jacobian(tr.u);
      const double err = terms.returns[idx] - c.value;
      policy.add(-wa * logp);
      value.add(0.5 * err * err);
      const Vector diff = tr.u - c.mu;
      const Vector dmu = -wa * diff.cwiseProduct(inv_var);
      Vector dls = -wa * (diff.array().square() * inv_var.array() - 1.0).matrix();
      dls.array() -= entropy_coef;
      g.setZero();
      net.backward(params, c, dmu, dls, -value_coef * err, g);
      grad.add(g);
      ++idx;
    }
  }
  require(idx == terms.advantages.size(), "surrogate terms cover more transitions than the rollouts");
  require(idx > 0, "no transitions to learn from");
  const double n = static_cast<double>(idx);
  ev.policy_loss = policy.value() / n;
  ev.value_loss = value.value() / n;
  ev.entropy = entropy;
  ev.loss = ev.policy_loss - entropy_coef * entropy + value_coef * ev.value_loss;
  ev.grad = grad.value() / n;
  return ev;
}

struct UpdateDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double mean_weight = 0.0;
  int transitions = 0;
  bool clipped = false;
  bool rejected = false;
};

// One RMSProp step on the surrogate. A non-finite gradient leaves the state
// untouched and is reported as rejected.
inline UpdateDiagnostics update(AgentState& agent, std::span<const Rollout> rollouts, const UpdateConfig& cfg) {
  require(cfg.lr >= 0.0 && std::isfinite(cfg.lr), "learning rate must be finite and nonnegative");
  const PolicyValueNet net(agent.shape);
  const auto terms = surrogate_terms(net, agent.params, rollouts, cfg.gamma);
  auto ev = surrogate(net, agent.params, rollouts, terms, cfg.entropy_coef, cfg.value_coef);
  UpdateDiagnostics d;
  d.loss = ev.loss;
  d.policy_loss = ev.policy_loss;
  d.value_loss = ev.value_loss;
  d.entropy = ev.entropy;
  d.transitions = static_cast<int>(terms.weights.size());
  for (double w : terms.weights) d.mean_weight += w / static_cast<double>(terms.weights.size());
  d.grad_norm = ev.grad.norm();
  if (!std::isfinite(d.grad_norm) || !std::isfinite(ev.loss)) {
    d.rejected = true;
    return d;
  }
  if (cfg.max_grad_norm > 0.0 && d.grad_norm > cfg.max_grad_norm) {
    ev.grad *= cfg.max_grad_norm / d.grad_norm;
    d.clipped = true;
  }
  agent.rms = cfg.rms_decay * agent.rms + (1.0 - cfg.rms_decay) * ev.grad.cwiseAbs2();
  if (cfg.lr > 0.0) {
    agent.params.array() -= cfg.lr * ev.grad.array() / (agent.rms.array().sqrt() + cfg.rms_epsilon);
  }
  ++agent.updates;
  return d;
}

struct RunConfig {
  long total_steps = 200000;
  int rollout_length = 20;
  UpdateConfig update;
  std::uint64_t seed = 0;
  long lr_horizon = 0;   // steps over which lr decays to zero; 0 means total_steps
  long step_offset = 0;  // steps already taken in an enclosing schedule
  int frame_pool = 0;    // rendered frames to keep for ground-matrix updates
  bool keep_step_logs = false;
  bool parallel = true;  // collect rollouts on one thread per worker
};

struct EpisodeSummary {
  int worker = 0;
  int episode = 0;
  int length = 0;
  double total_reward = 0.0;
  drive::DoneReason reason = drive::DoneReason::none;
  double distance = 0.0;
};

struct WorkerFailure {
  int worker = 0;
  long at_step = 0;
  std::string message;
};

struct RunResult {
  AgentState agent;
  long steps = 0;
  std::vector<EpisodeSummary> episodes;
  std::vector<std::vector<drive::StepRecord>> logs;  // per worker, when kept
  std::vector<WorkerFailure> failures;
  std::vector<UpdateDiagnostics> updates;
  std::vector<seg::SceneSample> frames;
};

namespace detail {

struct Worker {
  int index = 0;
  drive::TrackConfig cfg;
  drive::WorldState state;
  Rng policy_rng;
  Rng pool_rng;
  int episode = 0;
  int episode_length = 0;
  double episode_reward = 0.0;
  bool alive = true;
  bool needs_reset = true;
  long frames_seen = 0;
  std::uint64_t seed = 0;
  std::vector<seg::SceneSample> pool;
  std::vector<drive::StepRecord> log;
  std::vector<EpisodeSummary> finished;
};

inline std::uint64_t episode_seed(std::uint64_t seed, int worker, int episode) {
  return derive_seed(seed, "episode", (static_cast<std::uint64_t>(worker) << 32) | static_cast<std::uint32_t>(episode));
}

inline Rollout collect(Worker& w, const PolicyValueNet& net, const Vector& params, const seg::SoftmaxModel& segmenter,
                       const RunConfig& cfg) {
  Rollout ro;
  for (int t = 0; t < cfg.rollout_length; ++t) {
    if (w.needs_reset) {
      w.state = drive::reset(episode_seed(w.seed, w.index, w.episode), w.cfg);
      w.needs_reset = false;
      w.episode_length = 0;
      w.episode_reward = 0.0;
    }
    seg::SceneSample view;
    auto obs = drive::observe(w.state, w.cfg, segmenter, cfg.frame_pool > 0 ? &view : nullptr);
    if (cfg.frame_pool > 0) {
      // Reservoir sampling keeps a uniform sample of all frames seen.
      ++w.frames_seen;
      if (static_cast<int>(w.pool.size()) < cfg.frame_pool) {
        w.pool.push_back(std::move(view));
      } else {
        const auto slot = static_cast<long>(w.pool_rng() % static_cast<std::uint64_t>(w.frames_seen));
        if (slot < cfg.frame_pool) w.pool[static_cast<std::size_t>(slot)] = std::move(view);
      }
    }
    const auto a = act(net, params, obs, true, w.policy_rng);
    const auto out = drive::step(w.state, w.cfg, a.action);
    ++w.episode_length;
    w.episode_reward += out.reward;
    if (cfg.keep_step_logs) w.log.push_back({w.state.step, a.action, out, w.state.s, w.state.d, w.state.speed});
    const bool terminal = out.done != drive::DoneReason::none;
    ro.steps.push_back({std::move(obs), a.u, a.action, a.log_density, out.reward, terminal, a.value});
    if (terminal) {
      w.finished.push_back({w.index, w.episode, w.episode_length, w.episode_reward, out.done, w.state.distance});
      ++w.episode;
      w.needs_reset = true;
      return ro;
    }
  }
  const auto next = drive::observe(w.state, w.cfg, segmenter);
  ro.bootstrap = net.forward(params, next).value;
  return ro;
}

}  // namespace detail

// Synchronous actor-learner loop. Each round, every live worker collects one
// rollout from the same parameter snapshot (in parallel, each worker owning
// its world), then the learner applies one update per rollout in worker
// order. Later updates in a round are slightly off-policy, which the clipped
// importance weights account for. A worker that throws is dropped.
inline RunResult run_actors(AgentState agent, std::span<const drive::TrackConfig> envs,
                            const seg::SoftmaxModel& segmenter, const RunConfig& cfg) {
  require(!envs.empty(), "need at least one actor");
  require(cfg.total_steps >= 0 && cfg.rollout_length >= 1, "bad run config");
  const PolicyValueNet net(agent.shape);
  const long horizon = cfg.lr_horizon > 0 ? cfg.lr_horizon : cfg.total_steps;
  std::vector<detail::Worker> workers(envs.size());
  for (std::size_t k = 0; k < envs.size(); ++k) {
    auto& w = workers[k];
    w.index = static_cast<int>(k);
    w.cfg = envs[k];
    w.seed = cfg.seed;
    w.policy_rng = substream(cfg.seed, "policy", k);
    w.pool_rng = substream(cfg.seed, "frames", k);
  }
  RunResult res;
  std::vector<std::optional<Rollout>> batch(workers.size());
  std::vector<std::string> errors(workers.size());
  while (res.steps < cfg.total_steps) {
    const Vector snapshot = agent.params;
    auto work = [&](std::size_t k) {
      batch[k].reset();
      if (!workers[k].alive) return;
      try {
        batch[k] = detail::collect(workers[k], net, snapshot, segmenter, cfg);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    };
    if (cfg.parallel && workers.size() > 1) {
      std::vector<std::jthread> threads;
      for (std::size_t k = 0; k < workers.size(); ++k) threads.emplace_back(work, k);
    } else {
      for (std::size_t k = 0; k < workers.size(); ++k) work(k);
    }
    bool any_alive = false;
    for (std::size_t k = 0; k < workers.size(); ++k) {
      if (!errors[k].empty()) {
        res.failures.push_back({static_cast<int>(k), res.steps, errors[k]});
        errors[k].clear();
        workers[k].alive = false;
      }
      any_alive = any_alive || workers[k].alive;
      if (!batch[k]) continue;
      auto ucfg = cfg.update;
      const double done_fraction = static_cast<double>(cfg.step_offset + res.steps) / static_cast<double>(horizon);
      ucfg.lr = cfg.update.lr * std::max(0.0, 1.0 - done_fraction);
      res.updates.push_back(update(agent, std::span<const Rollout>(&*batch[k], 1), ucfg));
      res.steps += static_cast<long>(batch[k]->steps.size());
    }
    if (!any_alive) break;
  }
  for (auto& w : workers) {
    res.episodes.insert(res.episodes.end(), w.finished.begin(), w.finished.end());
    if (cfg.keep_step_logs) res.logs.push_back(std::move(w.log));
    for (auto& f : w.pool) res.frames.push_back(std::move(f));
  }
  if (cfg.frame_pool > 0 && static_cast<int>(res.frames.size()) > cfg.frame_pool) {
    Rng rng = substream(cfg.seed, "frame-merge");
    std::shuffle(res.frames.begin(), res.frames.end(), rng);
    res.frames.resize(static_cast<std::size_t>(cfg.frame_pool));
  }
  res.agent = std::move(agent);
  return res;
}

// Runs a policy (or uniform random actions when params is null) without
// learning; returns one summary per episode.
inline std::vector<EpisodeSummary> evaluate_policy(const AgentState* agent, const drive::TrackConfig& track,
                                                   const seg::SoftmaxModel& segmenter, int episodes,
                                                   std::uint64_t seed, bool explore = true,
                                                   std::vector<drive::StepRecord>* log = nullptr) {
  std::vector<EpisodeSummary> out;
  std::optional<PolicyValueNet> net;
  if (agent) net.emplace(agent->shape);
  Rng rng = substream(seed, "evaluate");
  for (int e = 0; e < episodes; ++e) {
    auto st = drive::reset(detail::episode_seed(seed, 0, e), track);
    EpisodeSummary sum{0, e, 0, 0.0, drive::DoneReason::none, 0.0};
    while (st.done == drive::DoneReason::none) {
      drive::Action a;
      if (net) {
        a = act(*net, agent->params, drive::observe(st, track, segmenter), explore, rng).action;
      } else {
        a = {uniform(rng, -1.0, 1.0), uniform01(rng), uniform01(rng)};
      }
      const auto o = drive::step(st, track, a);
      if (log) log->push_back({st.step, a, o, st.s, st.d, st.speed});
      ++sum.length;
      sum.total_reward += o.reward;
      sum.reason = o.done;
    }
    sum.distance = st.distance;
    out.push_back(sum);
  }
  return out;
}

struct AlternationSchedule {
  int rounds = 5;
  long agent_steps_per_round = 20000;
  double alpha_start = 10.0;
  int frames = 64;
  int segmenter_steps = 50;
  double segmenter_lr = 0.05;
  int segmenter_batch = 8;
  bool freeze_segmenter = false;

  std::vector<double> alphas() const { return alpha_schedule(rounds, alpha_start); }
};

struct AlternationRound {
  int round = 0;
  double alpha = 0.0;
  GroundMatrix matrix;                 // D after this round's update
  std::vector<seg::SceneSample> frames;  // frames used in the update
  Vector segmenter_params;             // segmenter used to extract features
  std::vector<EpisodeSummary> episodes;
};

struct AlternationResult {
  GroundMatrix matrix;
  AgentState agent;
  seg::SoftmaxModel segmenter;
  std::vector<AlternationRound> rounds;
};

// Penultimate features of every pixel of every frame, with their labels.
inline std::pair<Matrix, std::vector<int>> frame_features(const seg::SoftmaxModel& segmenter,
                                                          std::span<const seg::SceneSample> frames) {
  Eigen::Index rows = 0;
  for (const auto& f : frames) rows += f.pixels();
  Matrix feats(rows, segmenter.penultimate_dim());
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(rows));
  Eigen::Index at = 0;
  for (const auto& f : frames) {
    feats.middleRows(at, f.pixels()) = segmenter.penultimate(f.features);
    at += f.pixels();
    labels.insert(labels.end(), f.labels.begin(), f.labels.end());
  }
  return {std::move(feats), std::move(labels)};
}

// Step 2: class centroids of penultimate features, their distances, and the
// mixed ground matrix.
inline GroundMatrix ground_matrix_step(const seg::SoftmaxModel& segmenter, std::span<const seg::SceneSample> frames,
                                       const GroundMatrix& predefined, double alpha, const MetricTransform& f,
                                       const GroundMatrix* previous) {
  const auto [feats, labels] = frame_features(segmenter, frames);
  const auto cents = class_centroids(feats, labels, predefined.size());
  return update_learned_matrix(predefined, centroid_distances(cents), alpha, f, previous);
}

// Alternates agent training plus segmenter fine-tuning under the current
// ground matrix (Step 1) with re-estimating the matrix from segmenter
// features (Step 2). Zero rounds return the predefined matrix as given.
inline AlternationResult alternate_optimize(seg::SoftmaxModel segmenter, AgentState agent,
                                            const AlternationSchedule& schedule, const GroundMatrix& predefined,
                                            const MetricTransform& f, std::span<const drive::TrackConfig> envs,
                                            const RunConfig& run) {
  require(schedule.rounds >= 0, "alternation rounds must be nonnegative");
  require(schedule.frames >= 1, "alternation needs at least one frame per round");
  const auto alphas = schedule.alphas();
  for (std::size_t k = 1; k < alphas.size(); ++k) {
    require(alphas[k] <= alphas[k - 1], "alpha schedule must be nonincreasing");
  }
  AlternationResult res;
  if (schedule.rounds == 0) {
    res.matrix = predefined;
    res.agent = std::move(agent);
    res.segmenter = std::move(segmenter);
    return res;
  }
  res.matrix = predefined.transformed(f);
  const long horizon = schedule.agent_steps_per_round * schedule.rounds;
  for (int r = 0; r < schedule.rounds; ++r) {
    RunConfig rc = run;
    rc.total_steps = schedule.agent_steps_per_round;
    rc.lr_horizon = horizon;
    rc.step_offset = schedule.agent_steps_per_round * r;
    rc.frame_pool = schedule.frames;
    rc.seed = derive_seed(run.seed, "round", static_cast<std::uint64_t>(r));
    auto ran = run_actors(std::move(agent), envs, segmenter, rc);
    agent = std::move(ran.agent);
    require(!ran.frames.empty(), "round ", r, " produced no frames");

    if (!schedule.freeze_segmenter && schedule.segmenter_steps > 0) {
      const seg::TrainConfig tc{schedule.segmenter_lr, schedule.segmenter_steps, schedule.segmenter_batch,
                                derive_seed(run.seed, "segmenter", static_cast<std::uint64_t>(r))};
      segmenter = seg::train(std::move(segmenter), ran.frames, seg::LossSpec::wasserstein(res.matrix), tc).model;
    }

    AlternationRound rec;
    rec.round = r;
    rec.alpha = alphas[static_cast<std::size_t>(r)];
    const GroundMatrix previous = res.matrix;
    res.matrix = ground_matrix_step(segmenter, ran.frames, predefined, rec.alpha, f, &previous);
    rec.matrix = res.matrix;
    rec.frames = std::move(ran.frames);
    rec.segmenter_params = segmenter.params();
    rec.episodes = std::move(ran.episodes);
    res.rounds.push_back(std::move(rec));
  }
  res.agent = std::move(agent);
  res.segmenter = std::move(segmenter);
  return res;
}

// Checkpoints: one parameter per line in <stem>.csv, shapes in <stem>.meta.
inline void save_agent(const std::filesystem::path& stem, const AgentState& a) {
  io::Config meta;
  meta.set("kind", "agent");
  meta.set("latent", std::to_string(a.shape.latent));
  meta.set("measurements", std::to_string(a.shape.measurements));
  meta.set("latent_hidden", std::to_string(a.shape.latent_hidden));
  meta.set("measurement_hidden", std::to_string(a.shape.measurement_hidden));
  meta.set("trunk", std::to_string(a.shape.trunk));
  meta.set("updates", std::to_string(a.updates));
  io::write_text(std::filesystem::path(stem).concat(".meta"), meta.to_text());
  Matrix cols(a.params.size(), 2);
  cols << a.params, a.rms;
  io::write_csv_table(std::filesystem::path(stem).concat(".csv"), cols);
}

inline AgentState load_agent(const std::filesystem::path& stem) {
  const auto meta = io::Config::load(std::filesystem::path(stem).concat(".meta"));
  require(meta.get_string("kind") == "agent", stem.string(), ".meta does not describe an agent checkpoint");
  AgentState a;
  a.shape.latent = static_cast<int>(meta.get_int("latent"));
  a.shape.measurements = static_cast<int>(meta.get_int("measurements"));
  a.shape.latent_hidden = static_cast<int>(meta.get_int("latent_hidden"));
  a.shape.measurement_hidden = static_cast<int>(meta.get_int("measurement_hidden"));
  a.shape.trunk = static_cast<int>(meta.get_int("trunk"));
  a.updates = meta.get_int("updates", 0);
  const Matrix cols = io::read_csv_table(std::filesystem::path(stem).concat(".csv"));
  const PolicyValueNet net(a.shape);
  require(cols.rows() == net.parameter_count() && cols.cols() == 2, stem.string(), ".csv has ", cols.rows(), "x",
          cols.cols(), " entries, expected ", net.parameter_count(), "x2");
  a.params = cols.col(0);
  a.rms = cols.col(1);
  return a;
}

inline void save_segmenter(const std::filesystem::path& stem, const seg::SoftmaxModel& m) {
  io::Config meta;
  meta.set("kind", "segmenter");
  meta.set("features", std::to_string(m.feature_dim()));
  meta.set("classes", std::to_string(m.classes()));
  meta.set("hidden", std::to_string(m.hidden()));
  io::write_text(std::filesystem::path(stem).concat(".meta"), meta.to_text());
  io::write_csv_table(std::filesystem::path(stem).concat(".csv"), m.params());
}

inline seg::SoftmaxModel load_segmenter(const std::filesystem::path& stem) {
  const auto meta = io::Config::load(std::filesystem::path(stem).concat(".meta"));
  require(meta.get_string("kind") == "segmenter", stem.string(), ".meta does not describe a segmenter checkpoint");
  seg::SoftmaxModel m(static_cast<int>(meta.get_int("features")), static_cast<int>(meta.get_int("classes")),
                      static_cast<int>(meta.get_int("hidden")));
  const Matrix p = io::read_csv_table(std::filesystem::path(stem).concat(".csv"));
  require(p.cols() == 1 && p.rows() == m.parameter_count(), stem.string(), ".csv has ", p.rows(), "x", p.cols(),
          " entries, expected ", m.parameter_count(), "x1");
  m.set_params(p.col(0));
  return m;
}

}  // namespace swt::agent
