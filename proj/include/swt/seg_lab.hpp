#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swt/core.hpp"
#include "swt/ground_metric.hpp"
#include "swt/metrics.hpp"
#include "swt/ot.hpp"
#include "swt/rng.hpp"

namespace swt::seg {

// Toy palette shared by the segmentation lab and the driving world.
enum Class : int { sky = 0, road, sidewalk, building, car, bus, person, bike };
inline constexpr int kNumClasses = 8;
inline constexpr int kFeatureDim = 3;

inline const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names = {"sky", "road",   "sidewalk", "building",
                                                              "car", "bus",    "person",   "bike"};
  return names;
}

// Importance level per class, 1 (least) .. 4 (most important).
inline constexpr std::array<int, kNumClasses> kImportanceLevel = {1, 3, 3, 2, 4, 4, 4, 4};

// Class prototype "colors". Neighbors at unit distance are confusable under
// noise: sky-building-sidewalk-road-car-bus along the first axis, person
// above road, bike above sidewalk and next to person.
inline Matrix palette() {
  Matrix p(kNumClasses, kFeatureDim);
  p << -3, 0, 0,  // sky
      0, 0, 0,    // road
      -1, 0, 0,   // sidewalk
      -2, 0, 0,   // building
      1, 0, 0,    // car
      2, 0, 0,    // bus
      0, 1, 0,    // person
      -1, 1, 0;   // bike
  return p;
}

// Predicting class i when the truth is j costs base + step * (level(j) -
// level(i)) when j is more important, base otherwise. Transport orientation:
// rows are predictions, columns truths.
inline GroundMatrix default_severity_matrix(double base = 1.0, double step = 4.0) {
  Matrix m(kNumClasses, kNumClasses);
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j = 0; j < kNumClasses; ++j) {
      m(i, j) = i == j ? 0.0 : base + step * std::max(0, kImportanceLevel[j] - kImportanceLevel[i]);
    }
  }
  return GroundMatrix(m);
}

inline ImportanceGrouping default_grouping() {
  ImportanceGrouping g;
  g.group_of.assign(kImportanceLevel.begin(), kImportanceLevel.end());
  g.weight_of = {1.0, 2.0, 3.0, 4.0};
  return g;
}

struct SceneConfig {
  int height = 32;
  int width = 32;
  int objects_min = 2;
  int objects_max = 5;
  double noise = 0.3;
  std::array<double, kFeatureDim> shift{};  // constant feature offset (domain shift)
};

struct SceneSample {
  int height = 0;
  int width = 0;
  Matrix features;          // (height * width) x feature_dim, row-major pixel order
  std::vector<int> labels;  // height * width
  std::uint64_t seed = 0;

  int pixels() const { return height * width; }
};

// Per-pixel features: class prototype + shift + iid Gaussian noise.
inline Matrix paint_features(std::span<const int> labels, double noise, std::span<const double> shift, Rng& rng) {
  const Matrix proto = palette();
  Matrix f(static_cast<Eigen::Index>(labels.size()), kFeatureDim);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    for (int k = 0; k < kFeatureDim; ++k) {
      const double off = k < static_cast<int>(shift.size()) ? shift[static_cast<std::size_t>(k)] : 0.0;
      f(static_cast<Eigen::Index>(p), k) = proto(labels[p], k) + off + (noise > 0.0 ? noise * normal(rng) : 0.0);
    }
  }
  return f;
}

// Horizontal bands (sky, building, sidewalk, road from top to bottom) with
// rectangles and ellipses of object classes on the road and sidewalk.
inline SceneSample generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  require(cfg.height > 0 && cfg.width > 0, "scene must have positive area, got ", cfg.height, "x", cfg.width);
  require(cfg.objects_min >= 0 && cfg.objects_max >= cfg.objects_min, "bad object count range [", cfg.objects_min,
          ", ", cfg.objects_max, "]");
  require(cfg.noise >= 0.0, "noise level must be nonnegative");
  Rng rng = substream(seed, "scene-layout");
  const int h = cfg.height, w = cfg.width;
  SceneSample s;
  s.height = h;
  s.width = w;
  s.seed = seed;
  s.labels.assign(static_cast<std::size_t>(h * w), road);

  const int jitter = std::max(1, h / 16);
  const int sky_end = std::clamp(h / 5 + uniform_int(rng, -jitter, jitter), 1, h);
  const int building_end = std::clamp(2 * h / 5 + uniform_int(rng, -jitter, jitter), sky_end + 1, h);
  const int sidewalk_end = std::clamp(11 * h / 20 + uniform_int(rng, -jitter, jitter), building_end + 1, h);
  for (int r = 0; r < h; ++r) {
    const int cls = r < sky_end ? sky : r < building_end ? building : r < sidewalk_end ? sidewalk : road;
    for (int c = 0; c < w; ++c) s.labels[static_cast<std::size_t>(r * w + c)] = cls;
  }

  const int objects = uniform_int(rng, cfg.objects_min, cfg.objects_max);
  constexpr std::array<int, 4> kObjectClasses = {car, bus, person, bike};
  for (int k = 0; k < objects; ++k) {
    const int cls = kObjectClasses[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
    int oh = 1, ow = 1;
    switch (cls) {
      case car:
        oh = std::max(1, h / 8);
        ow = std::max(1, w / 5);
        break;
      case bus:
        oh = std::max(1, h / 5);
        ow = std::max(1, w / 3);
        break;
      case person:
        oh = std::max(1, h / 5);
        ow = std::max(1, w / 14);
        break;
      default:
        oh = std::max(1, h / 8);
        ow = std::max(1, w / 8);
        break;
    }
    const int ground_top = (cls == person || cls == bike) ? building_end : sidewalk_end;
    const int bottom = uniform_int(rng, std::min(ground_top + 1, h), h);
    const int top = std::max(0, bottom - oh);
    const int left = uniform_int(rng, 0, std::max(0, w - ow));
    const bool ellipse = uniform01(rng) < 0.5;
    const double cy = 0.5 * (top + bottom - 1), cx = left + 0.5 * (ow - 1);
    const double ry = std::max(0.5, 0.5 * (bottom - top)), rx = std::max(0.5, 0.5 * ow);
    for (int r = top; r < bottom; ++r) {
      for (int c = left; c < std::min(w, left + ow); ++c) {
        if (ellipse) {
          const double dy = (r - cy) / ry, dx = (c - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        s.labels[static_cast<std::size_t>(r * w + c)] = cls;
      }
    }
  }

  Rng noise_rng = substream(seed, "scene-noise");
  s.features = paint_features(s.labels, cfg.noise, cfg.shift, noise_rng);
  return s;
}

// Nearest-prototype classifier (Bayes optimal for isotropic noise and equal
// priors).
inline int nearest_prototype(const Eigen::Ref<const Eigen::RowVectorXd>& feature, std::span<const double> shift = {}) {
  const Matrix proto = palette();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kNumClasses; ++k) {
    double d = 0.0;
    for (int c = 0; c < kFeatureDim; ++c) {
      const double off = c < static_cast<int>(shift.size()) ? shift[static_cast<std::size_t>(c)] : 0.0;
      const double diff = feature[c] - proto(k, c) - off;
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

// Per-pixel softmax classifier with an optional tanh hidden layer. All
// parameters live in one flat vector:
//   [W1 (in x hidden), b1 (hidden)]  only when hidden > 0
//   [W2 (penultimate x classes), b2 (classes)]
// Matrices are stored column-major.
class SoftmaxModel {
 public:
  SoftmaxModel() = default;
  SoftmaxModel(int feature_dim, int classes, int hidden = 0)
      : feature_dim_(feature_dim), classes_(classes), hidden_(hidden) {
    require(feature_dim > 0 && classes > 1 && hidden >= 0, "bad model shape (features ", feature_dim, ", classes ",
            classes, ", hidden ", hidden, ")");
    params_ = Vector::Zero(parameter_count());
  }

  static SoftmaxModel random(int feature_dim, int classes, int hidden, std::uint64_t seed, double scale = 0.5) {
    SoftmaxModel m(feature_dim, classes, hidden);
    Rng rng = substream(seed, "init");
    for (Eigen::Index k = 0; k < m.params_.size(); ++k) m.params_[k] = scale * normal(rng);
    return m;
  }

  int feature_dim() const { return feature_dim_; }
  int classes() const { return classes_; }
  int hidden() const { return hidden_; }
  int penultimate_dim() const { return hidden_ > 0 ? hidden_ : feature_dim_; }

  Eigen::Index parameter_count() const {
    const Eigen::Index first = hidden_ > 0 ? static_cast<Eigen::Index>(feature_dim_) * hidden_ + hidden_ : 0;
    return first + static_cast<Eigen::Index>(penultimate_dim()) * classes_ + classes_;
  }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  void set_params(const Vector& p) {
    require(p.size() == parameter_count(), "parameter vector has ", p.size(), " entries, expected ",
            parameter_count());
    params_ = p;
  }

  // Penultimate activations: the hidden layer, or the raw features when the
  // model is linear.
  Matrix penultimate(const Matrix& x) const {
    check_input(x);
    if (hidden_ == 0) return x;
    Matrix a = x * w1();
    a.rowwise() += b1().transpose();
    return a.array().tanh().matrix();
  }

  Matrix logits_from_penultimate(const Matrix& h) const {
    Matrix z = h * w2();
    z.rowwise() += b2().transpose();
    return z;
  }

  Matrix forward(const Matrix& x) const { return softmax_rows(logits_from_penultimate(penultimate(x))); }

  std::vector<int> predict(const Matrix& x) const {
    const Matrix p = forward(x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r).maxCoeff(&out[static_cast<std::size_t>(r)]);
    return out;
  }

  static Matrix softmax_rows(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double m = z.row(r).maxCoeff();
      p.row(r) = (z.row(r).array() - m).exp().matrix();
      p.row(r) /= p.row(r).sum();
    }
    return p;
  }

  // Views into the flat parameter vector.
  using ConstMap = Eigen::Map<const Matrix>;
  using MutMap = Eigen::Map<Matrix>;
  ConstMap w1() const { return {params_.data(), feature_dim_, hidden_}; }
  Eigen::Map<const Vector> b1() const { return {params_.data() + feature_dim_ * hidden_, hidden_}; }
  ConstMap w2() const { return {params_.data() + offset_w2(), penultimate_dim(), classes_}; }
  Eigen::Map<const Vector> b2() const {
    return {params_.data() + offset_w2() + penultimate_dim() * classes_, classes_};
  }

  Eigen::Index offset_w2() const {
    return hidden_ > 0 ? static_cast<Eigen::Index>(feature_dim_) * hidden_ + hidden_ : 0;
  }

 private:
  void check_input(const Matrix& x) const {
    require(x.cols() == feature_dim_, "feature dimension ", x.cols(), " does not match model input ", feature_dim_);
  }

  int feature_dim_ = kFeatureDim;
  int classes_ = kNumClasses;
  int hidden_ = 0;
  Vector params_;
};

// Pixel targets for one sample: hard class labels, or per-pixel target
// histograms with an acceptance mask (rejected pixels do not contribute).
struct SampleTargets {
  std::vector<int> labels;
  Matrix soft;
  std::vector<unsigned char> accepted;

  static SampleTargets onehot(std::vector<int> labels) {
    SampleTargets t;
    t.labels = std::move(labels);
    t.accepted.assign(t.labels.size(), 1);
    return t;
  }
  static SampleTargets hard(std::vector<int> labels, std::vector<unsigned char> accepted) {
    require(labels.size() == accepted.size(), "labels and mask differ in size");
    SampleTargets t;
    t.labels = std::move(labels);
    t.accepted = std::move(accepted);
    return t;
  }
  static SampleTargets conservative(Matrix soft, std::vector<unsigned char> accepted) {
    require(static_cast<std::size_t>(soft.rows()) == accepted.size(), "soft target rows and mask differ");
    SampleTargets t;
    t.soft = std::move(soft);
    t.accepted = std::move(accepted);
    return t;
  }
  bool is_soft() const { return soft.size() > 0; }
  std::size_t pixels() const { return accepted.size(); }
};

inline std::vector<SampleTargets> onehot_targets(std::span<const SceneSample> data) {
  std::vector<SampleTargets> t;
  t.reserve(data.size());
  for (const auto& s : data) t.push_back(SampleTargets::onehot(s.labels));
  return t;
}

enum class LossKind { ce, wasserstein, sinkhorn };

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "ce") return LossKind::ce;
  if (s == "wasserstein") return LossKind::wasserstein;
  if (s == "sinkhorn") return LossKind::sinkhorn;
  fail("unknown loss '", s, "' (expected ce, wasserstein or sinkhorn)");
}

struct LossSpec {
  LossKind kind = LossKind::ce;
  // Transport costs, already passed through the metric transform. Unused by
  // cross-entropy.
  GroundMatrix costs;
  SinkhornOptions sinkhorn{0.5, 2000, 1e-9, 1e-30};

  static LossSpec cross_entropy() { return {}; }
  static LossSpec wasserstein(GroundMatrix d_f) { return {LossKind::wasserstein, std::move(d_f), {}}; }
  static LossSpec sinkhorn_loss(GroundMatrix d_f, double epsilon) {
    LossSpec s{LossKind::sinkhorn, std::move(d_f), {}};
    s.sinkhorn.epsilon = epsilon;
    return s;
  }
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
  long pixels = 0;
};

namespace detail {

// Loss of one pixel; writes its gradient with respect to the predicted
// histogram into dprob.
inline double pixel_loss(const LossSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& probs,
                         const SampleTargets& tg, std::size_t pixel, Eigen::Ref<Eigen::RowVectorXd> dprob) {
  const int n = static_cast<int>(probs.size());
  switch (spec.kind) {
    case LossKind::ce: {
      require(!tg.is_soft(), "cross-entropy needs hard targets; use the sinkhorn loss for soft labels");
      const int j = tg.labels[pixel];
      const double sj = std::max(probs[j], 1e-300);
      dprob.setZero();
      dprob[j] = -1.0 / sj;
      return -std::log(sj);
    }
    case LossKind::wasserstein: {
      require(!tg.is_soft(), "the one-hot Wasserstein loss needs hard targets; use the sinkhorn loss for soft labels");
      const int j = tg.labels[pixel];
      double loss = 0.0;
      for (int i = 0; i < n; ++i) {
        const double c = spec.costs(i, j);
        loss += probs[i] * c;
        dprob[i] = c;
      }
      return loss;
    }
    case LossKind::sinkhorn: {
      std::vector<double> s(probs.data(), probs.data() + n);
      std::vector<double> t(static_cast<std::size_t>(n), 0.0);
      if (tg.is_soft()) {
        for (int k = 0; k < n; ++k) t[static_cast<std::size_t>(k)] = tg.soft(static_cast<Eigen::Index>(pixel), k);
      } else {
        t[static_cast<std::size_t>(tg.labels[pixel])] = 1.0;
      }
      const auto r = sinkhorn(Histogram::unnormalized(std::move(s)), Histogram::unnormalized(std::move(t)),
                              spec.costs, spec.sinkhorn);
      for (int k = 0; k < n; ++k) dprob[k] = r.grad_source[static_cast<std::size_t>(k)];
      return r.regularized_cost;
    }
  }
  return 0.0;
}

}  // namespace detail

// Point-wise average loss over every accepted pixel of every sample, and its
// gradient with respect to the model parameters (chain rule through the
// softmax and, when present, the tanh hidden layer).
inline LossGrad batch_loss_grad(const SoftmaxModel& m, std::span<const SceneSample> samples,
                                std::span<const SampleTargets> targets, const LossSpec& spec) {
  require(samples.size() == targets.size(), "got ", samples.size(), " samples but ", targets.size(), " targets");
  if (spec.kind != LossKind::ce) {
    require(spec.costs.size() == m.classes(), "ground matrix size ", spec.costs.size(), " does not match ",
            m.classes(), " classes");
  }
  const int c = m.classes();
  LossGrad out;
  out.grad = Vector::Zero(m.parameter_count());
  CompensatedSum total;
  Eigen::RowVectorXd dprob(c);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& smp = samples[k];
    const auto& tg = targets[k];
    require(tg.pixels() == static_cast<std::size_t>(smp.pixels()), "targets for sample ", k, " cover ", tg.pixels(),
            " pixels, sample has ", smp.pixels());
    if (tg.is_soft()) {
      require(tg.soft.cols() == c, "soft targets for sample ", k, " have ", tg.soft.cols(), " classes");
    }
    const Matrix h = m.penultimate(smp.features);
    const Matrix probs = SoftmaxModel::softmax_rows(m.logits_from_penultimate(h));
    Matrix dz = Matrix::Zero(probs.rows(), c);
    for (Eigen::Index p = 0; p < probs.rows(); ++p) {
      if (!tg.accepted[static_cast<std::size_t>(p)]) continue;
      if (!tg.is_soft()) {
        const int j = tg.labels[static_cast<std::size_t>(p)];
        require(j >= 0 && j < c, "label ", j, " at pixel ", p, " of sample ", k, " out of range");
      }
      total.add(detail::pixel_loss(spec, probs.row(p), tg, static_cast<std::size_t>(p), dprob));
      ++out.pixels;
      // Softmax Jacobian-vector product: dz_k = s_k (g_k - sum_i s_i g_i).
      const double inner = probs.row(p).dot(dprob);
      dz.row(p) = probs.row(p).cwiseProduct((dprob.array() - inner).matrix());
    }
    const Eigen::Index w2_off = m.offset_w2();
    const Eigen::Index pd = m.penultimate_dim();
    Eigen::Map<Matrix> g_w2(out.grad.data() + w2_off, pd, c);
    Eigen::Map<Vector> g_b2(out.grad.data() + w2_off + pd * c, c);
    g_w2.noalias() += h.transpose() * dz;
    g_b2 += dz.colwise().sum().transpose();
    if (m.hidden() > 0) {
      const Matrix dh = dz * m.w2().transpose();
      const Matrix da = dh.cwiseProduct((1.0 - h.array().square()).matrix());
      Eigen::Map<Matrix> g_w1(out.grad.data(), m.feature_dim(), m.hidden());
      Eigen::Map<Vector> g_b1(out.grad.data() + m.feature_dim() * m.hidden(), m.hidden());
      g_w1.noalias() += smp.features.transpose() * da;
      g_b1 += da.colwise().sum().transpose();
    }
  }
  if (out.pixels > 0) {
    out.loss = total.value() / static_cast<double>(out.pixels);
    out.grad /= static_cast<double>(out.pixels);
  }
  return out;
}

struct TrainConfig {
  double lr = 0.5;
  int steps = 300;
  int batch = 4;
  std::uint64_t seed = 0;
};

struct TrainResult {
  SoftmaxModel model;
  std::vector<double> losses;
};

// Plain constant-rate SGD on random mini-batches drawn from the seed.
// Called after every step with the step index, its batch loss and the
// updated model.
using StepObserver = std::function<void(int, double, const SoftmaxModel&)>;

inline TrainResult train(SoftmaxModel m, std::span<const SceneSample> data, std::span<const SampleTargets> targets,
                         const LossSpec& spec, const TrainConfig& cfg, const StepObserver& observer = {}) {
  require(!data.empty(), "training set is empty");
  require(data.size() == targets.size(), "training set and targets differ in size");
  require(cfg.steps >= 0 && cfg.batch > 0, "bad training config (steps ", cfg.steps, ", batch ", cfg.batch, ")");
  require(std::isfinite(cfg.lr) && cfg.lr >= 0.0, "learning rate must be finite and nonnegative");
  Rng rng = substream(cfg.seed, "batches");
  TrainResult res;
  res.losses.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<SceneSample> batch;
  std::vector<SampleTargets> batch_targets;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    batch_targets.clear();
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<std::size_t>(rng() % data.size());
      batch.push_back(data[idx]);
      batch_targets.push_back(targets[idx]);
    }
    const auto lg = batch_loss_grad(m, batch, batch_targets, spec);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) fail("training diverged at step ", step, " (loss ", lg.loss, ")");
    res.losses.push_back(lg.loss);
    if (cfg.lr != 0.0) m.params() -= cfg.lr * lg.grad;
    if (observer) observer(step, lg.loss, m);
  }
  res.model = std::move(m);
  return res;
}

inline TrainResult train(SoftmaxModel m, std::span<const SceneSample> data, const LossSpec& spec,
                         const TrainConfig& cfg, const StepObserver& observer = {}) {
  const auto t = onehot_targets(data);
  return train(std::move(m), data, t, spec, cfg, observer);
}

inline ConfusionMatrix evaluate(const SoftmaxModel& m, std::span<const SceneSample> data) {
  ConfusionMatrix cm(m.classes());
  for (const auto& s : data) {
    const auto pred = m.predict(s.features);
    for (std::size_t p = 0; p < pred.size(); ++p) cm.add(s.labels[p], pred[p]);
  }
  return cm;
}

inline double pixel_accuracy(const SoftmaxModel& m, std::span<const SceneSample> data) {
  return evaluate(m, data).accuracy();
}

// (1 - lambda) onehot(argmax) + lambda pred, or nullopt when the prediction
// is not confident enough.
inline std::optional<Histogram> smooth_pseudo_label(const Histogram& pred, double lambda, double confidence_threshold) {
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1], got ", lambda);
  require(confidence_threshold >= 0.0 && confidence_threshold <= 1.0, "confidence threshold must lie in [0, 1]");
  const int top = pred.argmax();
  if (pred[top] < confidence_threshold) return std::nullopt;
  std::vector<double> t(static_cast<std::size_t>(pred.size()));
  for (int k = 0; k < pred.size(); ++k) t[static_cast<std::size_t>(k)] = lambda * pred[k] + (k == top ? 1.0 - lambda : 0.0);
  return Histogram::unnormalized(std::move(t));
}

struct PseudoLabels {
  std::vector<SampleTargets> targets;
  long accepted = 0;
  long total = 0;
  double accepted_fraction() const { return total ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0; }
};

inline PseudoLabels pseudo_label_targets(const SoftmaxModel& m, std::span<const SceneSample> data, double lambda,
                                         double threshold) {
  PseudoLabels out;
  for (const auto& s : data) {
    const Matrix probs = m.forward(s.features);
    Matrix soft = Matrix::Zero(probs.rows(), probs.cols());
    std::vector<unsigned char> mask(static_cast<std::size_t>(probs.rows()), 0);
    for (Eigen::Index p = 0; p < probs.rows(); ++p) {
      std::vector<double> row(static_cast<std::size_t>(probs.cols()));
      for (Eigen::Index k = 0; k < probs.cols(); ++k) row[static_cast<std::size_t>(k)] = probs(p, k);
      const auto pred = Histogram::unnormalized(std::move(row));
      const auto t = smooth_pseudo_label(pred, lambda, threshold);
      ++out.total;
      if (!t) continue;
      for (int k = 0; k < t->size(); ++k) soft(p, k) = (*t)[k];
      mask[static_cast<std::size_t>(p)] = 1;
      ++out.accepted;
    }
    out.targets.push_back(SampleTargets::conservative(std::move(soft), std::move(mask)));
  }
  return out;
}

// A small epsilon matters here: the entropic term pulls predictions toward a
// blurred copy of the target, which undoes the sharpening self-training
// relies on.
struct SelfTrainConfig {
  int rounds = 2;
  double lambda = 0.3;
  double confidence_threshold = 0.5;
  LossSpec loss = LossSpec::sinkhorn_loss(GroundMatrix::uniform(kNumClasses), 0.05);
  TrainConfig train{0.2, 40, 6, 0};
  bool mix_source = false;  // also retrain on the labeled source scenes
};

struct SelfTrainRound {
  double accepted_fraction = 0.0;
  bool skipped = false;
  std::string warning;
  std::vector<double> losses;
};

struct SelfTrainResult {
  SoftmaxModel model;
  std::vector<SelfTrainRound> rounds;
};

// Each round: predict on the unlabeled target scenes, smooth confident
// predictions into conservative labels and retrain on them (plus the labeled
// source scenes when mix_source is set).
inline SelfTrainResult self_train(SoftmaxModel m, std::span<const SceneSample> source,
                                  std::span<const SceneSample> target, const SelfTrainConfig& cfg) {
  require(cfg.rounds >= 0, "rounds must be nonnegative");
  require(!target.empty(), "self-training needs target scenes");
  SelfTrainResult res;
  for (int r = 0; r < cfg.rounds; ++r) {
    SelfTrainRound round;
    auto pl = pseudo_label_targets(m, target, cfg.lambda, cfg.confidence_threshold);
    round.accepted_fraction = pl.accepted_fraction();
    if (pl.accepted == 0) {
      round.skipped = true;
      round.warning = "round " + std::to_string(r) + " skipped: no pixel passed the confidence threshold";
      res.rounds.push_back(std::move(round));
      continue;
    }
    std::vector<SceneSample> data(target.begin(), target.end());
    std::vector<SampleTargets> targets = std::move(pl.targets);
    if (cfg.mix_source) {
      for (const auto& s : source) {
        data.push_back(s);
        targets.push_back(SampleTargets::onehot(s.labels));
      }
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, "self-train", static_cast<std::uint64_t>(r));
    auto tr = train(std::move(m), data, targets, cfg.loss, tc);
    m = std::move(tr.model);
    round.losses = std::move(tr.losses);
    res.rounds.push_back(std::move(round));
  }
  res.model = std::move(m);
  return res;
}

}  // namespace swt::seg
