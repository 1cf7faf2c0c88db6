#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace tendonopt {

struct CmaConfig {
  int population_size = 0;      // 0 selects 4 + floor(3 ln n)
  double initial_sigma = 0.25;  // step size as a fraction of the box width
  int max_evals = 10000;
  // Stop once the best fitness reaches this value; NaN disables the test.
  double target_fitness = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd lower;  // per-dimension bounds, required
  Eigen::VectorXd upper;
  std::uint64_t seed = 0;
  bool parallel_objective = false;

  void validate(int dims) const;
};

struct CmaGenerationRecord {
  int generation = 0;
  double best_f = 0.0;  // best raw fitness of the generation
  double mean_f = 0.0;
  double sigma = 0.0;   // step size in normalized box coordinates
};

struct CmaResult {
  Eigen::VectorXd best_x;
  double best_f = std::numeric_limits<double>::infinity();
  bool converged = false;  // target_fitness reached
  int evaluations = 0;
  std::vector<CmaGenerationRecord> history;

  // Header "generation,best_f,mean_f,sigma", one row per generation.
  std::string history_csv() const;
};

// (mu/mu_w, lambda)-CMA-ES with rank-based recombination weights and
// step-size/covariance adaptation, minimizing over the given box. Candidates
// falling outside the box are resampled up to 10 times, then clipped with a
// quadratic penalty added to their selection fitness. Deterministic per seed.
// Throws OptimizerAbortError when the objective returns a non-finite value.
CmaResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                         const Eigen::VectorXd& x0, const CmaConfig& cfg);

}  // namespace tendonopt
