// Compares cross-entropy and severity-aware transport losses on two
// predictions that put the same mass on the true class.

#include <cmath>
#include <cstdio>

#include "swt/ot.hpp"
#include "swt/seg_lab.hpp"

int main() {
  using namespace swt;
  const auto d = seg::default_severity_matrix();
  const auto names = seg::class_names();
  const int person = 6;

  // Both put 0.6 on "person"; one leaks the rest to "bike", the other to "sky".
  std::vector<double> near(seg::kNumClasses, 0.0), far(seg::kNumClasses, 0.0);
  near[person] = far[person] = 0.6;
  near[7] = 0.4;
  far[0] = 0.4;

  std::printf("truth: %s\n", std::string(names[person]).c_str());
  for (const auto& [label, s] : {std::pair{"leak to bike", near}, std::pair{"leak to sky ", far}}) {
    const auto h = Histogram::normalized(s);
    const double ce = -std::log(s[person]);
    const double w = onehot_wasserstein(h, person, d).cost;
    std::printf("%s  cross-entropy %.4f  wasserstein %.4f\n", label, ce, w);
  }

  const auto s = Histogram::normalized(near);
  const auto t = Histogram::normalized(far);
  const auto exact = exact_wasserstein(s, t, d);
  std::printf("between the two predictions: exact %.4f\n", exact.cost);
  // Smaller epsilon approaches the exact cost but needs many more iterations.
  for (double eps : {0.5, 0.2, 0.05}) {
    SinkhornOptions o;
    o.epsilon = eps;
    o.max_iter = 100000;
    const auto approx = sinkhorn(s, t, d, o);
    std::printf("  sinkhorn eps %.2f: %.4f (%s after %d iterations)\n", eps, approx.cost,
                approx.converged ? "converged" : "not converged", approx.iterations);
  }
}
