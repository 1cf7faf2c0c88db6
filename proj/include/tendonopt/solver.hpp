#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tendonopt/chain.hpp"

namespace tendonopt {

enum class SolveMode { warm_start_local, global, oracle };

struct SolverConfig {
  int grid_resolution = 15;     // cells per joint dimension for grid search
  int local_max_iters = 500;    // budget of the local refinement
  double constraint_tol = 1e-6; // meters
  double energy_tol = 1e-12;    // joules
  SolveMode mode = SolveMode::global;
  int polish_starts = 5;        // best cells polished in global mode

  void validate() const;
};

// Discretized joint-space slice of constraint satisfaction and stored
// energy, sampled at cell centers.
struct ManifoldGrid {
  std::vector<int> free_joints;           // joint index per grid axis
  std::vector<std::vector<double>> axes;  // cell-center angles per axis
  std::map<int, double> fixed_joints;     // pinned joint -> angle
  std::vector<std::uint8_t> satisfied;    // row-major over axes
  std::vector<double> energy;             // joules, same layout

  std::size_t cell_count() const;
  // Header "theta_<i>,...,satisfied,energy"; one row per cell in row-major
  // axis order (last axis fastest).
  std::string to_csv() const;
};

// Forward actuation model: joint angles minimizing stored energy subject to
// nonnegative slack with at least one taut tendon. The seed is only used in
// warm_start_local mode. Throws InfeasibleCommandError when no
// constraint-satisfying configuration exists within the joint limits.
ChainState solve_forward(const DesignParams& design, const ChainState& seed,
                         const Eigen::VectorXd& motor_angles,
                         const SolverConfig& cfg);

// Exhaustive grid enumeration refined by grid zooming. Independent of the
// active-set path used by solve_forward; intended for N <= 3.
ChainState brute_force_oracle(const DesignParams& design,
                              const Eigen::VectorXd& motor_angles,
                              const SolverConfig& cfg);

struct LocalSolveResult {
  ChainState state;
  bool converged = false;   // constraints satisfied at the returned iterate
  int iterations = 0;
  double infeasibility = 0.0;  // penalty residual of the returned iterate
};

// Budget-limited penalty descent from the seed. Never throws on exhaustion;
// returns the best feasible iterate or the least-infeasible one flagged
// unconverged.
LocalSolveResult solve_budgeted_local(const DesignParams& design,
                                      const ChainState& seed,
                                      const Eigen::VectorXd& motor_angles,
                                      int steps, double constraint_tol = 1e-6);

// Constraint satisfaction and energy over the grid of free joints, with the
// remaining joints pinned at the given angles. 1 or 2 free joints.
ManifoldGrid manifold_map(const DesignParams& design,
                          const Eigen::VectorXd& motor_angles,
                          const std::map<int, double>& fixed_joints,
                          const SolverConfig& cfg);

struct StepOutcome {
  ChainState next;
  double reward = 0.0;
  bool action_projected = false;   // command was infeasible and shrunk toward zero
  Eigen::VectorXd applied_action;  // motor command actually executed
};

// One quasi-static transition plus the reward on the resulting state.
// With project_infeasible, an infeasible command is replaced by the nearest
// feasible one along the ray toward zero; otherwise InfeasibleCommandError
// propagates with the offending action attached.
StepOutcome step(const ChainState& state, const Eigen::VectorXd& action,
                 const DesignParams& design, const TaskSpec& task,
                 const SolverConfig& cfg, bool project_infeasible = false);

}  // namespace tendonopt
