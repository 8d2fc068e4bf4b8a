#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swt/core.hpp"
#include "swt/ground_metric.hpp"
#include "swt/io.hpp"

namespace swt {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionMatrix(int n) : counts_(Counts::Zero(n, n)) { require(n > 0, "class count must be positive"); }

  int size() const { return static_cast<int>(counts_.rows()); }
  std::int64_t operator()(int truth, int pred) const { return counts_(truth, pred); }
  const Counts& counts() const { return counts_; }
  std::int64_t total() const { return counts_.sum(); }

  void add(int truth, int pred, std::int64_t count = 1) {
    require(truth >= 0 && truth < size() && pred >= 0 && pred < size(), "label pair (", truth, ",", pred,
            ") out of range for ", size(), " classes");
    counts_(truth, pred) += count;
  }

  void merge(const ConfusionMatrix& other) {
    require(other.size() == size(), "confusion matrices of different sizes");
    counts_ += other.counts_;
  }

  double accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(counts_.diagonal().sum()) / static_cast<double>(t);
  }

  Matrix row_normalized() const {
    Matrix m = counts_.cast<double>();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double r = m.row(i).sum();
      if (r > 0.0) m.row(i) /= r;
    }
    return m;
  }

 private:
  Counts counts_;
};

inline ConfusionMatrix confusion(std::span<const std::vector<int>> preds, std::span<const std::vector<int>> truths,
                                 int n) {
  require(preds.size() == truths.size(), "prediction count ", preds.size(), " differs from truth count ",
          truths.size());
  ConfusionMatrix cm(n);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    require(preds[k].size() == truths[k].size(), "grid ", k, " shape mismatch: ", preds[k].size(), " vs ",
            truths[k].size(), " pixels");
    for (std::size_t p = 0; p < preds[k].size(); ++p) cm.add(truths[k][p], preds[k][p]);
  }
  return cm;
}

struct IouReport {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from truth and prediction
  double mean = 0.0;
  int counted = 0;
};

inline IouReport iou(const ConfusionMatrix& cm) {
  IouReport r;
  const int n = cm.size();
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto tp = cm(k, k);
    const auto fn = cm.counts().row(k).sum() - tp;
    const auto fp = cm.counts().col(k).sum() - tp;
    const auto denom = tp + fp + fn;
    if (denom == 0) {
      r.per_class.emplace_back(std::nullopt);
      continue;
    }
    const double v = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class.emplace_back(v);
    acc += v;
    ++r.counted;
  }
  r.mean = r.counted ? acc / r.counted : 0.0;
  return r;
}

// Mean misclassification cost per pixel: sum over truth i != prediction j of
// count(i, j) * costs(i, j) / total. `costs` is indexed (truth, prediction);
// pass a transport-oriented loss matrix through transposed().
inline double severity_score(const ConfusionMatrix& cm, const GroundMatrix& costs) {
  require(cm.size() == costs.size(), "confusion matrix has ", cm.size(), " classes, ground matrix ", costs.size());
  const auto total = cm.total();
  if (total == 0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < cm.size(); ++i) {
    for (int j = 0; j < cm.size(); ++j) {
      if (i != j) acc += static_cast<double>(cm(i, j)) * costs(i, j);
    }
  }
  return acc / static_cast<double>(total);
}

enum class InfractionType { collision_person, collision_car, collision_static, off_line, off_road };
inline constexpr std::array<InfractionType, 5> kInfractionTypes = {
    InfractionType::collision_person, InfractionType::collision_car, InfractionType::collision_static,
    InfractionType::off_line, InfractionType::off_road};

inline std::string to_string(InfractionType t) {
  switch (t) {
    case InfractionType::collision_person:
      return "collision-person";
    case InfractionType::collision_car:
      return "collision-car";
    case InfractionType::collision_static:
      return "collision-static";
    case InfractionType::off_line:
      return "off-line";
    case InfractionType::off_road:
      return "off-road";
  }
  return "unknown";
}

inline bool is_collision(InfractionType t) {
  return t == InfractionType::collision_person || t == InfractionType::collision_car ||
         t == InfractionType::collision_static;
}

struct Infraction {
  InfractionType type;
  int step = 0;
  double position_km = 0.0;
};

struct DrivingRecord {
  int steps = 0;
  double distance_km = 0.0;
  std::vector<Infraction> events;
  bool reached_goal = false;
};

// nullopt is the "no infraction" marker (infinite distance).
using KmPerEvent = std::optional<double>;

struct DrivingReport {
  int episodes = 0;
  long total_steps = 0;
  long step_cap = 0;
  double drive_fraction = 0.0;
  double total_km = 0.0;
  double mean_kmh = 0.0;
  KmPerEvent km_per_out_of_lane;
  KmPerEvent km_per_collision;
  std::array<KmPerEvent, 5> km_per_type{};
  std::array<long, 5> count_per_type{};
};

inline KmPerEvent km_per(double km, long events) {
  if (events == 0) return std::nullopt;
  return km / static_cast<double>(events);
}

inline DrivingReport driving_metrics(std::span<const DrivingRecord> records, long step_cap, double step_seconds) {
  require(!records.empty(), "driving metrics need at least one episode");
  require(step_cap > 0, "step cap must be positive");
  require(step_seconds > 0.0, "step duration must be positive");
  DrivingReport r;
  r.episodes = static_cast<int>(records.size());
  r.step_cap = step_cap;
  for (const auto& rec : records) {
    require(rec.distance_km >= 0.0, "episode distance must be nonnegative");
    r.total_steps += rec.steps;
    r.total_km += rec.distance_km;
    for (const auto& e : rec.events) {
      require(e.step >= 0 && e.step <= rec.steps, "infraction step ", e.step, " outside episode of ", rec.steps,
              " steps");
      ++r.count_per_type[static_cast<std::size_t>(e.type)];
    }
  }
  r.drive_fraction = static_cast<double>(r.total_steps) / static_cast<double>(step_cap);
  const double hours = static_cast<double>(r.total_steps) * step_seconds / 3600.0;
  r.mean_kmh = hours > 0.0 ? r.total_km / hours : 0.0;
  long collisions = 0, out_of_lane = 0;
  for (const auto t : kInfractionTypes) {
    const long c = r.count_per_type[static_cast<std::size_t>(t)];
    r.km_per_type[static_cast<std::size_t>(t)] = km_per(r.total_km, c);
    (is_collision(t) ? collisions : out_of_lane) += c;
  }
  r.km_per_collision = km_per(r.total_km, collisions);
  r.km_per_out_of_lane = km_per(r.total_km, out_of_lane);
  return r;
}

inline double success_rate(std::span<const DrivingRecord> records) {
  require(!records.empty(), "success rate needs at least one episode");
  long ok = 0;
  for (const auto& r : records) ok += r.reached_goal ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

inline constexpr const char* kNoInfraction = "no-infraction";

inline nlohmann::json to_json(const KmPerEvent& v) { return v ? nlohmann::json(*v) : nlohmann::json(kNoInfraction); }

inline nlohmann::json to_json(const DrivingReport& r) {
  nlohmann::json j;
  j["episodes"] = r.episodes;
  j["total_steps"] = r.total_steps;
  j["step_cap"] = r.step_cap;
  j["drive_percent"] = 100.0 * r.drive_fraction;
  j["km"] = r.total_km;
  j["km_per_hr"] = r.mean_kmh;
  j["km_per_out_of_lane"] = to_json(r.km_per_out_of_lane);
  j["km_per_collision"] = to_json(r.km_per_collision);
  auto& per = j["km_between_infractions"];
  auto& counts = j["infraction_counts"];
  for (const auto t : kInfractionTypes) {
    per[to_string(t)] = to_json(r.km_per_type[static_cast<std::size_t>(t)]);
    counts[to_string(t)] = r.count_per_type[static_cast<std::size_t>(t)];
  }
  return j;
}

// Two-column layout: infraction type, km between infractions.
inline std::string infraction_table_csv(const DrivingReport& r) {
  std::string out = "infraction,km_between\n";
  for (const auto t : kInfractionTypes) {
    const auto& v = r.km_per_type[static_cast<std::size_t>(t)];
    out += to_string(t) + "," + (v ? io::format_double(*v) : std::string(kNoInfraction)) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const IouReport& r, std::span<const std::string> names = {}) {
  nlohmann::json j;
  j["miou"] = r.mean;
  j["classes_counted"] = r.counted;
  auto& per = j["per_class_iou"];
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const std::string key = k < names.size() ? names[k] : std::to_string(k);
    per[key] = r.per_class[k] ? nlohmann::json(*r.per_class[k]) : nlohmann::json("absent");
  }
  return j;
}

}  // namespace swt
