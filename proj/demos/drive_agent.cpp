// Trains a small driving agent and compares episode lengths with random
// actions on the same episode seeds.

#include <cstdio>
#include <cstdlib>

#include "swt/experiments.hpp"

int main(int argc, char** argv) {
  using namespace swt;
  experiments::DrivingExperimentConfig cfg;
  cfg.seeds = 1;
  cfg.steps = argc > 1 ? std::atol(argv[1]) : 30000;
  cfg.eval_episodes = 20;
  const auto run = experiments::driving_run(cfg, 0);
  std::printf("training episodes: %zu\n", run.training_episodes.size());
  std::printf("mean episode length: trained %.1f, random %.1f (ratio %.2f)\n", run.trained_mean_length,
              run.random_mean_length, run.ratio);
}
