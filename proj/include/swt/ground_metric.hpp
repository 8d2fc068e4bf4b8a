#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swt/core.hpp"
#include "swt/io.hpp"

namespace swt {

// Increasing map f applied to raw severities before they are used as
// transport costs. f(0) = 0 and f is nondecreasing for every kind.
class MetricTransform {
 public:
  enum class Kind { linear, power, huber, step };

  static MetricTransform linear() { return MetricTransform(Kind::linear, 1.0); }
  static MetricTransform power(double rho) {
    require(rho > 1.0 && std::isfinite(rho), "power transform needs rho > 1, got ", rho);
    return MetricTransform(Kind::power, rho);
  }
  static MetricTransform huber(double tau) {
    require(tau > 0.0 && std::isfinite(tau), "huber transform needs tau > 0, got ", tau);
    return MetricTransform(Kind::huber, tau);
  }
  static MetricTransform step() { return MetricTransform(Kind::step, 0.0); }

  // "linear", "step", "power:2", "huber:0.5"
  static MetricTransform parse(std::string_view text) {
    const auto colon = text.find(':');
    const auto name = text.substr(0, colon);
    std::optional<double> arg;
    if (colon != std::string_view::npos) {
      arg = io::parse_double(text.substr(colon + 1));
      require(arg.has_value(), "bad transform parameter in '", text, "'");
    }
    if (name == "linear") return linear();
    if (name == "step") return step();
    if (name == "power") return power(arg.value_or(2.0));
    if (name == "huber") return huber(arg.value_or(1.0));
    fail("unknown transform '", text, "' (expected linear, step, power:RHO or huber:TAU)");
  }

  Kind kind() const { return kind_; }
  double rho() const { return kind_ == Kind::power ? param_ : 1.0; }
  double tau() const { return kind_ == Kind::huber ? param_ : 0.0; }

  double operator()(double d) const {
    require(d >= 0.0, "transform argument must be nonnegative, got ", d);
    switch (kind_) {
      case Kind::linear:
        return d;
      case Kind::power:
        return std::pow(d, param_);
      case Kind::huber:
        return d <= param_ ? d * d : param_ * (2.0 * d - param_);
      case Kind::step:
        return d == 0.0 ? 0.0 : 1.0;
    }
    return d;
  }

  std::string to_string() const {
    switch (kind_) {
      case Kind::linear:
        return "linear";
      case Kind::power:
        return "power:" + io::format_double(param_);
      case Kind::huber:
        return "huber:" + io::format_double(param_);
      case Kind::step:
        return "step";
    }
    return "linear";
  }

 private:
  MetricTransform(Kind k, double p) : kind_(k), param_(p) {}
  Kind kind_;
  double param_;
};

inline double apply_transform(const MetricTransform& t, double d) { return t(d); }

// Square cost table with zero diagonal and nonnegative entries.
// Entry (i, j) is the cost of moving predicted mass on class i onto target
// class j; rows index the prediction, columns the truth. The table may be
// asymmetric.
class GroundMatrix {
 public:
  static constexpr double kDiagonalTolerance = 1e-12;

  GroundMatrix() = default;

  explicit GroundMatrix(Matrix costs) : costs_(std::move(costs)) {
    require(costs_.rows() == costs_.cols(), "ground matrix must be square, got ", costs_.rows(), "x", costs_.cols());
    require(costs_.rows() > 0, "ground matrix must be nonempty");
    for (Eigen::Index i = 0; i < costs_.rows(); ++i) {
      for (Eigen::Index j = 0; j < costs_.cols(); ++j) {
        const double v = costs_(i, j);
        require(std::isfinite(v), "ground matrix entry (", i, ",", j, ") is not finite");
        require(v >= 0.0, "ground matrix entry (", i, ",", j, ") is negative: ", v);
        if (i == j) {
          require(std::abs(v) <= kDiagonalTolerance, "ground matrix diagonal entry (", i, ",", i, ") is nonzero: ", v);
          costs_(i, i) = 0.0;
        }
      }
    }
  }

  static GroundMatrix uniform(int n, double fill = 1.0) {
    require(n > 0, "class count must be positive");
    Matrix m = Matrix::Constant(n, n, fill);
    m.diagonal().setZero();
    return GroundMatrix(std::move(m));
  }

  int size() const { return static_cast<int>(costs_.rows()); }
  double operator()(int i, int j) const { return costs_(i, j); }
  const Matrix& costs() const { return costs_; }

  GroundMatrix transposed() const { return GroundMatrix(costs_.transpose()); }

  GroundMatrix transformed(const MetricTransform& f) const {
    Matrix m = costs_;
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = f(m.data()[k]);
    return GroundMatrix(std::move(m));
  }

  bool operator==(const GroundMatrix& o) const { return costs_ == o.costs_; }

 private:
  Matrix costs_;
};

struct SeverityEntry {
  int from = 0;
  int to = 0;
  double cost = 0.0;
};

// Off-diagonal entries not listed default to `fill`.
inline GroundMatrix build_severity_matrix(int n, std::span<const SeverityEntry> entries, double fill = 1.0) {
  require(n > 0, "class count must be positive, got ", n);
  require(fill >= 0.0, "fill value must be nonnegative, got ", fill);
  Matrix m = Matrix::Constant(n, n, fill);
  m.diagonal().setZero();
  for (const auto& e : entries) {
    require(e.from >= 0 && e.from < n && e.to >= 0 && e.to < n, "severity entry (", e.from, ",", e.to,
            ") out of range for ", n, " classes");
    require(e.from != e.to, "severity entry (", e.from, ",", e.to, ") is on the diagonal");
    require(e.cost >= 0.0, "severity entry (", e.from, ",", e.to, ") has negative cost ", e.cost);
    m(e.from, e.to) = e.cost;
  }
  return GroundMatrix(std::move(m));
}

// Classes are assigned to importance levels 1..4 (4 most important), each
// level carrying a positive weight.
struct ImportanceGrouping {
  std::vector<int> group_of;
  std::array<double, 4> weight_of{1.0, 2.0, 3.0, 4.0};

  void validate() const {
    require(!group_of.empty(), "importance grouping has no classes");
    for (std::size_t k = 0; k < group_of.size(); ++k) {
      require(group_of[k] >= 1 && group_of[k] <= 4, "class ", k, " has group ", group_of[k], ", expected 1..4");
    }
    for (std::size_t g = 0; g < weight_of.size(); ++g) {
      require(weight_of[g] > 0.0, "group ", g + 1, " weight must be positive, got ", weight_of[g]);
      if (g > 0) {
        require(weight_of[g] >= weight_of[g - 1], "group weights must be nondecreasing in importance");
      }
    }
  }
  double weight(int cls) const { return weight_of[static_cast<std::size_t>(group_of[static_cast<std::size_t>(cls)] - 1)]; }
};

// Column j carries the weight of true class j so the one-hot transport loss
// collapses to w_j (1 - s_j).
inline GroundMatrix build_importance_matrix(const ImportanceGrouping& g) {
  g.validate();
  const int n = static_cast<int>(g.group_of.size());
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = i == j ? 0.0 : g.weight(j);
  }
  return GroundMatrix(std::move(m));
}

struct Centroids {
  Matrix rows;                // n x feature_dim; rows of absent classes are zero
  std::vector<bool> present;  // false marks a class with no samples
  std::vector<long> counts;
};

// Per-class mean of feature rows; rows are l2-normalized first when
// `normalize` is set (all-zero rows are left as is).
inline Centroids class_centroids(const Matrix& features, std::span<const int> labels, int n, bool normalize = true) {
  require(static_cast<std::size_t>(features.rows()) == labels.size(), "feature rows (", features.rows(),
          ") and labels (", labels.size(), ") differ");
  require(n > 0, "class count must be positive");
  Centroids c;
  c.rows = Matrix::Zero(n, features.cols());
  c.counts.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const int k = labels[static_cast<std::size_t>(r)];
    require(k >= 0 && k < n, "label ", k, " at row ", r, " out of range");
    if (normalize) {
      const double norm = features.row(r).norm();
      if (norm > 0.0) {
        c.rows.row(k) += features.row(r) / norm;
      } else {
        c.rows.row(k) += features.row(r);
      }
    } else {
      c.rows.row(k) += features.row(r);
    }
    ++c.counts[static_cast<std::size_t>(k)];
  }
  c.present.assign(static_cast<std::size_t>(n), false);
  for (int k = 0; k < n; ++k) {
    if (c.counts[static_cast<std::size_t>(k)] > 0) {
      c.rows.row(k) /= static_cast<double>(c.counts[static_cast<std::size_t>(k)]);
      c.present[static_cast<std::size_t>(k)] = true;
    }
  }
  return c;
}

struct DistanceTable {
  Matrix d;                   // symmetric, zero diagonal
  std::vector<bool> present;  // entries touching an absent class are meaningless
  bool valid(int i, int j) const { return present[static_cast<std::size_t>(i)] && present[static_cast<std::size_t>(j)]; }
};

inline DistanceTable centroid_distances(const Centroids& c) {
  const auto n = c.rows.rows();
  DistanceTable t;
  t.d = Matrix::Zero(n, n);
  t.present = c.present;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!t.present[static_cast<std::size_t>(i)] || !t.present[static_cast<std::size_t>(j)]) continue;
      const double dist = (c.rows.row(i) - c.rows.row(j)).cwiseAbs().sum();
      t.d(i, j) = dist;
      t.d(j, i) = dist;
    }
  }
  return t;
}

// D = (f(dbar) + alpha f(d)) / (1 + alpha), diagonal forced to zero.
// Entries touching a class without a centroid keep `previous` when given,
// otherwise f(d).
inline GroundMatrix update_learned_matrix(const GroundMatrix& predefined, const DistanceTable& centroid_d, double alpha,
                                          const MetricTransform& f, const GroundMatrix* previous = nullptr) {
  const int n = predefined.size();
  require(centroid_d.d.rows() == n && centroid_d.d.cols() == n, "centroid distance table is ", centroid_d.d.rows(),
          "x", centroid_d.d.cols(), " but ground matrix is ", n, "x", n);
  require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be >= 0, got ", alpha);
  require(previous == nullptr || previous->size() == n, "previous matrix size mismatch");
  Matrix out = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double fd = f(predefined(i, j));
      if (!centroid_d.valid(i, j)) {
        out(i, j) = previous ? (*previous)(i, j) : fd;
        continue;
      }
      out(i, j) = (f(centroid_d.d(i, j)) + alpha * fd) / (1.0 + alpha);
    }
  }
  return GroundMatrix(std::move(out));
}

// Linear decay from `start` to 0 over the rounds; a single round uses 0.
inline std::vector<double> alpha_schedule(int rounds, double start = 10.0) {
  require(rounds >= 0, "rounds must be nonnegative");
  std::vector<double> a(static_cast<std::size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    a[static_cast<std::size_t>(r)] = rounds == 1 ? 0.0 : start * (1.0 - static_cast<double>(r) / (rounds - 1));
  }
  return a;
}

inline void save_matrix(const std::filesystem::path& path, const GroundMatrix& m) {
  io::write_csv_table(path, m.costs());
}

inline GroundMatrix load_matrix(const std::filesystem::path& path) {
  const Matrix m = io::read_csv_table(path);
  require(m.rows() == m.cols(), path.string(), ": ground matrix must be square, got ", m.rows(), "x", m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      require(m(i, j) >= 0.0, path.string(), ": negative entry ", m(i, j), " at row ", i, ", column ", j);
      if (i == j) {
        require(std::abs(m(i, i)) <= GroundMatrix::kDiagonalTolerance, path.string(), ": nonzero diagonal ", m(i, i),
                " at row ", i, ", column ", i);
      }
    }
  }
  return GroundMatrix(m);
}

}  // namespace swt
