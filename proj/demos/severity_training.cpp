// Fine-tunes one CE-pretrained segmenter two ways and compares how costly
// their mistakes are.

#include <cstdio>

#include "swt/experiments.hpp"

int main(int argc, char** argv) {
  using namespace swt;
  experiments::SeverityConfig cfg;
  cfg.seeds = argc > 1 ? std::atoi(argv[1]) : 2;
  const auto rep = experiments::severity_experiment(cfg);
  std::printf("seed  acc(CE)  acc(W)  severity(CE)  severity(W)\n");
  for (const auto& r : rep.runs) {
    std::printf("%4llu  %.4f   %.4f  %.4f        %.4f\n", static_cast<unsigned long long>(r.seed), r.accuracy_ce,
                r.accuracy_w, r.severity_ce, r.severity_w);
  }
  std::printf("mean severity ratio W/CE: %.3f\n", rep.mean_severity_w / rep.mean_severity_ce);
}
