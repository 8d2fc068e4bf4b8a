#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "swt/core.hpp"
#include "swt/ground_metric.hpp"

namespace swt {

// Nonnegative class-mass vector. Normalized histograms carry unit total mass
// within kMassTolerance.
class Histogram {
 public:
  static constexpr double kMassTolerance = 1e-6;

  Histogram() = default;

  static Histogram normalized(std::vector<double> mass) {
    Histogram h(std::move(mass));
    require(std::abs(h.total() - 1.0) <= kMassTolerance, "histogram mass ", h.total(), " is not 1 within ",
            kMassTolerance);
    return h;
  }
  static Histogram normalized(std::span<const double> mass) {
    return normalized(std::vector<double>(mass.begin(), mass.end()));
  }
  static Histogram unnormalized(std::vector<double> mass) { return Histogram(std::move(mass)); }

  static Histogram onehot(int n, int cls, double mass = 1.0) {
    require(cls >= 0 && cls < n, "class index ", cls, " out of range for ", n, " classes");
    std::vector<double> m(static_cast<std::size_t>(n), 0.0);
    m[static_cast<std::size_t>(cls)] = mass;
    return Histogram(std::move(m));
  }

  int size() const { return static_cast<int>(mass_.size()); }
  double operator[](int i) const { return mass_[static_cast<std::size_t>(i)]; }
  std::span<const double> mass() const { return mass_; }
  double total() const { return std::accumulate(mass_.begin(), mass_.end(), 0.0); }

  int argmax() const {
    return static_cast<int>(std::max_element(mass_.begin(), mass_.end()) - mass_.begin());
  }

 private:
  explicit Histogram(std::vector<double> mass) : mass_(std::move(mass)) {
    require(!mass_.empty(), "histogram must be nonempty");
    for (std::size_t i = 0; i < mass_.size(); ++i) {
      require(std::isfinite(mass_[i]) && mass_[i] >= 0.0, "histogram entry ", i, " is invalid: ", mass_[i]);
    }
  }
  std::vector<double> mass_;
};

struct TransportPlan {
  Matrix flow;  // flow(i, j): mass moved from source class i to target class j
  Histogram source;
  Histogram target;
};

struct OtResult {
  double cost = 0.0;
  TransportPlan plan;
  std::vector<double> grad_source;
  bool converged = true;
  int iterations = 0;
  // Entropic objective <P, D> + eps * sum P (log P - 1); Sinkhorn only.
  // grad_source is its exact gradient along mass-preserving directions.
  double regularized_cost = 0.0;
};

inline double transport_cost(const Matrix& flow, const GroundMatrix& d) { return flow.cwiseProduct(d.costs()).sum(); }

namespace detail {

inline void check_dims(const Histogram& s, const Histogram& t, const GroundMatrix& d) {
  require(s.size() == t.size(), "histogram sizes differ: ", s.size(), " vs ", t.size());
  require(s.size() == d.size(), "histogram size ", s.size(), " does not match ground matrix size ", d.size());
}

// Target scaled to the source mass when the mismatch is within tolerance.
inline Histogram match_mass(const Histogram& s, const Histogram& t, bool rescale, double tol) {
  const double ms = s.total();
  const double mt = t.total();
  if (ms == mt) return t;
  require(std::abs(ms - mt) <= tol, "total masses differ by ", std::abs(ms - mt), " (source ", ms, ", target ", mt,
          "), beyond tolerance ", tol);
  if (!rescale) {
    return t;
  }
  require(mt > 0.0, "target histogram has zero mass");
  std::vector<double> m(t.mass().begin(), t.mass().end());
  for (auto& x : m) x *= ms / mt;
  return Histogram::unnormalized(std::move(m));
}

inline std::vector<double> centered(std::vector<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= mean;
  return v;
}

}  // namespace detail

struct ExactOptions {
  bool rescale_target = true;
  double mass_tolerance = 1e-6;
};

// Transportation problem solved as min-cost flow by successive shortest
// paths on the bipartite class graph. Bellman-Ford relaxes edges in index
// order and only on strict improvement, so among equal-cost paths the lowest
// indices win and plans are reproducible. grad_source holds the optimal
// source dual, centered to zero mean.
inline OtResult exact_wasserstein(const Histogram& s, const Histogram& t_in, const GroundMatrix& d,
                                  const ExactOptions& opts = {}) {
  detail::check_dims(s, t_in, d);
  const Histogram t = detail::match_mass(s, t_in, opts.rescale_target, opts.mass_tolerance);
  const int n = s.size();
  constexpr double kZero = 1e-15;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Node layout: 0 source hub, 1..n prediction classes, n+1..2n target
  // classes, 2n+1 sink hub.
  const int hub_in = 0;
  const int hub_out = 2 * n + 1;
  const int nodes = 2 * n + 2;
  struct Edge {
    int to;
    double cap;
    double cost;
    int rev;
  };
  std::vector<std::vector<Edge>> graph(static_cast<std::size_t>(nodes));
  auto add_edge = [&](int u, int v, double cap, double cost) {
    graph[static_cast<std::size_t>(u)].push_back({v, cap, cost, static_cast<int>(graph[static_cast<std::size_t>(v)].size())});
    graph[static_cast<std::size_t>(v)].push_back({u, 0.0, -cost, static_cast<int>(graph[static_cast<std::size_t>(u)].size()) - 1});
  };
  for (int i = 0; i < n; ++i) add_edge(hub_in, 1 + i, s[i], 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) add_edge(1 + i, 1 + n + j, kInf, d(i, j));
  }
  for (int j = 0; j < n; ++j) add_edge(1 + n + j, hub_out, t[j], 0.0);

  const double target_flow = std::min(s.total(), t.total());
  double sent = 0.0;
  std::vector<double> dist(static_cast<std::size_t>(nodes));
  std::vector<int> prev_node(static_cast<std::size_t>(nodes));
  std::vector<int> prev_edge(static_cast<std::size_t>(nodes));
  const int max_augment = 8 * n * n + 64;
  for (int iter = 0; iter < max_augment && target_flow - sent > kZero; ++iter) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev_node.begin(), prev_node.end(), -1);
    dist[static_cast<std::size_t>(hub_in)] = 0.0;
    for (int pass = 0; pass < nodes; ++pass) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        const double du = dist[static_cast<std::size_t>(u)];
        if (du == kInf) continue;
        const auto& edges = graph[static_cast<std::size_t>(u)];
        for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
          const Edge& ed = edges[static_cast<std::size_t>(e)];
          if (ed.cap <= kZero) continue;
          const double nd = du + ed.cost;
          if (nd < dist[static_cast<std::size_t>(ed.to)] - 1e-14) {
            dist[static_cast<std::size_t>(ed.to)] = nd;
            prev_node[static_cast<std::size_t>(ed.to)] = u;
            prev_edge[static_cast<std::size_t>(ed.to)] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (dist[static_cast<std::size_t>(hub_out)] == kInf) break;
    double push = target_flow - sent;
    for (int v = hub_out; v != hub_in; v = prev_node[static_cast<std::size_t>(v)]) {
      const int u = prev_node[static_cast<std::size_t>(v)];
      push = std::min(push, graph[static_cast<std::size_t>(u)][static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])].cap);
    }
    if (push <= kZero) break;
    for (int v = hub_out; v != hub_in; v = prev_node[static_cast<std::size_t>(v)]) {
      const int u = prev_node[static_cast<std::size_t>(v)];
      Edge& ed = graph[static_cast<std::size_t>(u)][static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
      ed.cap -= push;
      graph[static_cast<std::size_t>(v)][static_cast<std::size_t>(ed.rev)].cap += push;
    }
    sent += push;
  }

  Matrix flow = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (const Edge& ed : graph[static_cast<std::size_t>(1 + i)]) {
      if (ed.to >= 1 + n && ed.to <= 2 * n) {
        // Reverse-edge capacity equals the flow pushed on the forward edge.
        const double f = graph[static_cast<std::size_t>(ed.to)][static_cast<std::size_t>(ed.rev)].cap;
        flow(i, ed.to - 1 - n) = std::max(0.0, f);
      }
    }
  }

  // Feasible potentials on the final residual graph give an optimal dual:
  // p(j') <= p(i) + D(i,j) always and equality wherever flow(i,j) > 0.
  std::vector<double> pot(static_cast<std::size_t>(2 * n), 0.0);
  for (int pass = 0; pass < 2 * n + 1; ++pass) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double via = pot[static_cast<std::size_t>(i)] + d(i, j);
        if (via < pot[static_cast<std::size_t>(n + j)] - 1e-14) {
          pot[static_cast<std::size_t>(n + j)] = via;
          changed = true;
        }
        if (flow(i, j) > kZero) {
          const double back = pot[static_cast<std::size_t>(n + j)] - d(i, j);
          if (back < pot[static_cast<std::size_t>(i)] - 1e-14) {
            pot[static_cast<std::size_t>(i)] = back;
            changed = true;
          }
        }
      }
    }
    if (!changed) break;
  }
  std::vector<double> dual(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) dual[static_cast<std::size_t>(i)] = -pot[static_cast<std::size_t>(i)];

  OtResult r;
  r.cost = transport_cost(flow, d);
  r.plan = TransportPlan{std::move(flow), s, t};
  r.grad_source = detail::centered(std::move(dual));
  return r;
}

// Closed form against a one-hot target: every unit of predicted mass must go
// to column j_star, so the cost is sum_i s_i D(i, j_star) in O(N).
inline OtResult onehot_wasserstein(const Histogram& s, int j_star, const GroundMatrix& d_f) {
  const int n = s.size();
  require(n == d_f.size(), "histogram size ", n, " does not match ground matrix size ", d_f.size());
  require(j_star >= 0 && j_star < n, "target class ", j_star, " out of range for ", n, " classes");
  OtResult r;
  Matrix flow = Matrix::Zero(n, n);
  r.grad_source.resize(static_cast<std::size_t>(n));
  double cost = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = d_f(i, j_star);
    cost += s[i] * c;
    flow(i, j_star) = s[i];
    r.grad_source[static_cast<std::size_t>(i)] = c;
  }
  r.cost = cost;
  r.plan = TransportPlan{std::move(flow), s, Histogram::onehot(n, j_star, s.total())};
  return r;
}

// Transport cost under the step ground metric: half the l1 distance.
inline double l1_wasserstein(const Histogram& s, const Histogram& t, double mass_tolerance = Histogram::kMassTolerance) {
  require(s.size() == t.size(), "histogram sizes differ: ", s.size(), " vs ", t.size());
  require(std::abs(s.total() - t.total()) <= mass_tolerance, "total masses differ: ", s.total(), " vs ", t.total());
  double acc = 0.0;
  for (int i = 0; i < s.size(); ++i) acc += std::abs(s[i] - t[i]);
  return 0.5 * acc;
}

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iter = 10000;
  double tol = 1e-9;
  // Zero histogram entries are lifted to this floor inside the iteration.
  double mass_floor = 1e-30;
};

namespace detail {

inline double log_sum_exp(const double* v, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) m = std::max(m, v[k]);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += std::exp(v[k] - m);
  return m + std::log(acc);
}

}  // namespace detail

// Entropic OT by alternating marginal scalings. Runs on scaling vectors when
// epsilon >= 1e-2 * max(D) and on log-potentials otherwise. Stops when the
// row-marginal l1 residual drops below tol (columns are exact after each
// column update).
inline OtResult sinkhorn(const Histogram& s, const Histogram& t_in, const GroundMatrix& d,
                         const SinkhornOptions& opts = {}) {
  detail::check_dims(s, t_in, d);
  require(opts.epsilon > 0.0 && std::isfinite(opts.epsilon), "sinkhorn epsilon must be positive, got ", opts.epsilon);
  require(opts.max_iter > 0, "sinkhorn max_iter must be positive");
  const Histogram t = detail::match_mass(s, t_in, true, Histogram::kMassTolerance);
  const int n = s.size();
  const double eps = opts.epsilon;
  const Matrix& c = d.costs();

  Vector a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = std::max(s[i], opts.mass_floor);
    b[i] = std::max(t[i], opts.mass_floor);
  }

  Vector f = Vector::Zero(n);  // potentials in cost units
  Vector g = Vector::Zero(n);
  Matrix plan(n, n);
  int iter = 0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();

  if (eps >= 1e-2 * c.maxCoeff()) {
    const Matrix kernel = (-c / eps).array().exp();
    Vector u = Vector::Ones(n);
    Vector v = Vector::Ones(n);
    for (iter = 1; iter <= opts.max_iter; ++iter) {
      u = a.cwiseQuotient(kernel * v);
      v = b.cwiseQuotient(kernel.transpose() * u);
      residual = (u.cwiseProduct(kernel * v) - a).cwiseAbs().sum();
      if (!std::isfinite(residual)) break;
      if (residual < opts.tol) {
        converged = true;
        break;
      }
    }
    iter = std::min(iter, opts.max_iter);
    plan = u.asDiagonal() * kernel * v.asDiagonal();
    f = eps * u.array().log().matrix();
    g = eps * v.array().log().matrix();
  } else {
    const Vector log_a = a.array().log();
    const Vector log_b = b.array().log();
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (iter = 1; iter <= opts.max_iter; ++iter) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = (g[j] - c(i, j)) / eps;
        f[i] = eps * (log_a[i] - detail::log_sum_exp(buf.data(), n));
      }
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = (f[i] - c(i, j)) / eps;
        g[j] = eps * (log_b[j] - detail::log_sum_exp(buf.data(), n));
      }
      residual = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = (f[i] + g[j] - c(i, j)) / eps;
        residual += std::abs(std::exp(detail::log_sum_exp(buf.data(), n)) - a[i]);
      }
      if (!std::isfinite(residual)) break;
      if (residual < opts.tol) {
        converged = true;
        break;
      }
    }
    iter = std::min(iter, opts.max_iter);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) plan(i, j) = std::exp((f[i] + g[j] - c(i, j)) / eps);
    }
  }

  OtResult r;
  r.cost = transport_cost(plan, d);
  double entropic = 0.0;
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    const double p = plan.data()[k];
    if (p > 0.0) entropic += p * (std::log(p) - 1.0);
  }
  r.regularized_cost = r.cost + eps * entropic;
  r.converged = converged;
  r.iterations = iter;
  r.grad_source = detail::centered(std::vector<double>(f.data(), f.data() + n));
  r.plan = TransportPlan{std::move(plan), s, t};
  return r;
}

struct PlanViolation {
  enum class Kind { negative_flow, row_excess, column_excess, total_mass };
  Kind kind;
  int index = -1;          // worst offending cell (row-major), row or column
  double magnitude = 0.0;  // worst violation amount
  int count = 0;           // number of offending cells, rows or columns
};

inline std::string to_string(PlanViolation::Kind k) {
  switch (k) {
    case PlanViolation::Kind::negative_flow:
      return "negative_flow";
    case PlanViolation::Kind::row_excess:
      return "row_excess";
    case PlanViolation::Kind::column_excess:
      return "column_excess";
    case PlanViolation::Kind::total_mass:
      return "total_mass";
  }
  return "unknown";
}

// One record per violated transport constraint: flow >= 0, row sums <= s,
// column sums <= t, total flow = min(|s|, |t|).
inline std::vector<PlanViolation> validate_plan(const TransportPlan& p, double tol = 1e-8) {
  std::vector<PlanViolation> out;
  const auto n = p.flow.rows();
  const auto m = p.flow.cols();
  if (n != p.source.size() || m != p.target.size()) {
    out.push_back({PlanViolation::Kind::total_mass, -1, std::numeric_limits<double>::infinity(), 1});
    return out;
  }
  auto record = [&](PlanViolation::Kind kind, int index, double excess) {
    if (excess <= tol) return;
    if (out.empty() || out.back().kind != kind) out.push_back({kind, index, excess, 0});
    auto& v = out.back();
    ++v.count;
    if (excess > v.magnitude) {
      v.magnitude = excess;
      v.index = index;
    }
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) record(PlanViolation::Kind::negative_flow, static_cast<int>(i * m + j), -p.flow(i, j));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    record(PlanViolation::Kind::row_excess, static_cast<int>(i), p.flow.row(i).sum() - p.source[static_cast<int>(i)]);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    record(PlanViolation::Kind::column_excess, static_cast<int>(j), p.flow.col(j).sum() - p.target[static_cast<int>(j)]);
  }
  const double expected = std::min(p.source.total(), p.target.total());
  record(PlanViolation::Kind::total_mass, -1, std::abs(p.flow.sum() - expected));
  return out;
}

}  // namespace swt
