#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace swt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// All library errors derive from this. Messages name the offending key,
// file, index or value so the CLI can print them verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void append(std::ostringstream&) {}

template <typename T, typename... Rest>
void append(std::ostringstream& oss, T&& token, Rest&&... rest) {
  oss << std::forward<T>(token);
  append(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream oss;
  oss.precision(17);
  detail::append(oss, std::forward<Args>(args)...);
  throw Error(oss.str());
}

template <typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Elementwise compensated accumulator over a fixed-length vector.
class CompensatedVector {
 public:
  explicit CompensatedVector(Eigen::Index n) : sum_(Vector::Zero(n)), comp_(Vector::Zero(n)) {}

  void add(const Vector& x) {
    for (Eigen::Index k = 0; k < sum_.size(); ++k) {
      const double s = sum_[k];
      const double t = s + x[k];
      if (std::abs(s) >= std::abs(x[k])) {
        comp_[k] += (s - t) + x[k];
      } else {
        comp_[k] += (x[k] - t) + s;
      }
      sum_[k] = t;
    }
  }
  Vector value() const { return sum_ + comp_; }

 private:
  Vector sum_;
  Vector comp_;
};

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace swt
