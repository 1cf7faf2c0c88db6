#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "tendonopt/chain.hpp"
#include "tendonopt/cma.hpp"
#include "tendonopt/net.hpp"
#include "tendonopt/solver.hpp"

namespace tendonopt {

struct Transition {
  ChainState state;
  Eigen::VectorXd action;  // motor command actually executed
  ChainState next_state;
  double reward = 0.0;
  Eigen::Vector2d goal{0.0, 0.0};
  bool infeasible_flag = false;  // command was projected onto the manifold
  int design_version = 0;
};

// FIFO buffer tagged with the active design version. Bumping the version
// discards stale transitions: the regression target changed with phi.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);  // stamps the current version
  void bump_version();
  int version() const { return version_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const std::deque<Transition>& data() const { return data_; }

 private:
  std::size_t capacity_;
  int version_ = 0;
  std::deque<Transition> data_;
};

enum class TrainMode { refab, pretension_only, multi_goal, fixed_design_baseline };

// Which groups of phi the extraction step may change.
struct TrainableMask {
  bool flexion_radii = true;
  bool pretension = true;
  bool link_lengths = true;

  static TrainableMask for_mode(TrainMode mode);
  int dims(const DesignParams& d) const;
  bool any() const { return flexion_radii || pretension || link_lengths; }
};

struct ExtractBounds {
  double radius_lo = 0.002;
  double radius_hi = 0.03;
  double pretension_lo = 0.0;
  double pretension_hi = 0.02;
  double length_lo = 0.2;
  double length_hi = 1.0;

  void validate() const;
};

struct TrainConfig {
  double alpha = 1.0;  // hardware-constraint weight in the joint objective
  int epochs = 60;
  int rollouts_per_epoch = 4;
  int horizon = 20;
  int extract_every_n_epochs = 10;
  double proxy_lr = 1e-3;
  double policy_lr = 3e-3;
  std::size_t buffer_capacity = 2000;
  double exploration_sigma = 0.1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::refab;
  TrainableMask trainable_params = TrainableMask::for_mode(TrainMode::refab);
  ExtractBounds extract_bounds;

  double proxy_gate = 1e-3;  // held-out loss required before a policy step
  int proxy_steps = 200;
  int policy_steps = 20;
  int batch_size = 64;
  double motor_max = 2.0 * kPi;  // actions clamped to [0, motor_max]
  int eval_episodes = 20;
  int extract_max_evals = 500;
  double extract_sigma = 0.2;
  double grad_clip = 10.0;
  double goal_radius = 0.0;  // > 0: goals sampled in a disc around the task goal
  int eval_goals = 20;       // goals drawn for multi-goal evaluation
  std::vector<int> proxy_hidden{64, 64};
  std::vector<int> policy_hidden{64, 64};

  void validate() const;
};

// State encoding fed to the policy: theta_J ++ theta_A ++ ee (++ goal in
// multi-goal mode). The proxy consumes theta_J ++ commanded theta_A and
// predicts theta_J' ++ ee'.
int policy_input_size(const DesignParams& design, TrainMode mode);
int proxy_input_size(const DesignParams& design);
int proxy_output_size(const DesignParams& design);
Eigen::VectorXd encode_policy_input(const ChainState& state,
                                    const Eigen::Vector2d& goal, TrainMode mode);

std::vector<Transition> collect_rollouts(const DesignParams& design,
                                         const Network& policy,
                                         const std::vector<TaskSpec>& tasks,
                                         const TrainConfig& cfg,
                                         const SolverConfig& solver,
                                         std::mt19937_64& rng);

struct ProxyLoss {
  double train_mse = 0.0;    // unweighted MSE over the pass
  double holdout_mse = 0.0;  // on the held-out 10% split
  int steps = 0;
};

// One minibatch gradient of alpha * MSE(proxy(X), Y); exposed so the loss
// linearity in alpha is testable without an optimizer in the way.
std::pair<Gradients, double> proxy_batch_gradient(const Network& proxy,
                                                  const Eigen::MatrixXd& inputs,
                                                  const Eigen::MatrixXd& targets,
                                                  double alpha);

ProxyLoss train_proxy(Network& proxy, Adam& opt, const ReplayBuffer& buffer,
                      double alpha, int steps, const TrainConfig& cfg,
                      std::mt19937_64& rng);

// Backprop-through-proxy policy improvement: unrolls the proxy for
// cfg.horizon steps from the zero state, ascends the smoothed return.
// Updates the policy, and (unless detach_proxy) also gives the proxy the
// task gradients. Returns the estimated return of the last update.
double policy_update(Network& policy, Network& proxy, Adam& policy_opt,
                     Adam& proxy_opt, const DesignParams& design,
                     const std::vector<TaskSpec>& tasks, const TrainConfig& cfg,
                     std::mt19937_64& rng);

Eigen::VectorXd pack_design(const DesignParams& design, const TrainableMask& mask);
DesignParams unpack_design(const Eigen::VectorXd& packed,
                           const DesignParams& base, const TrainableMask& mask);
void extract_bounds_vectors(const ExtractBounds& bounds, const DesignParams& base,
                            const TrainableMask& mask, Eigen::VectorXd& lower,
                            Eigen::VectorXd& upper);

struct ExtractionResult {
  DesignParams design;
  CmaResult cma;
  bool accepted = false;  // fit improved on the incumbent phi
  double incumbent_fit = 0.0;
};

// CMA-ES search for explicit hardware matching the current proxy on the
// replay buffer inputs (ground-truth solves per candidate phi).
ExtractionResult extract_hardware(const Network& proxy, const ReplayBuffer& buffer,
                                  const ExtractBounds& bounds,
                                  const DesignParams& current,
                                  const TrainableMask& mask,
                                  const TrainConfig& cfg,
                                  const SolverConfig& solver, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double mean_return = 0.0;  // mean episode return of the collected rollouts
  double estimated_return = 0.0;  // proxy-based return after the policy update
  double proxy_train_mse = 0.0;
  double proxy_holdout_mse = 0.0;
  bool policy_updated = false;
  bool extracted = false;
  int infeasible_count = 0;
  DesignParams design;
};

struct EvalEpisode {
  Eigen::Vector2d goal;
  Eigen::Vector2d final_ee;
  double final_distance = 0.0;
  double episode_return = 0.0;
  int infeasible_count = 0;
};

struct EvalResult {
  double mean_distance = 0.0;
  double std_distance = 0.0;
  double mean_return = 0.0;
  int infeasible_events = 0;
  std::vector<EvalEpisode> episodes;
};

// Ground-truth rollouts with exploration disabled; the proxy never appears
// in reported distances.
EvalResult eval_policy(const DesignParams& design, const Network& policy,
                       const std::vector<TaskSpec>& goals, int episodes_per_goal,
                       const TrainConfig& cfg, const SolverConfig& solver);

struct ExperimentResult {
  DesignParams final_design;
  Network policy;
  Network proxy;
  std::vector<EpochRecord> epochs;
  EvalResult final_eval;
};

// The full co-optimization loop: collect ground-truth transitions, regress
// the proxy, improve the policy through it, and periodically extract
// explicit hardware. fixed_design_baseline skips extraction and detaches
// task gradients from the proxy.
ExperimentResult morph_loop(
    const TrainConfig& cfg, const SolverConfig& solver,
    const DesignParams& initial_design, const std::vector<TaskSpec>& tasks,
    const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

// Evaluation goals for a config: the task goals themselves, or sampled
// around the first goal in multi-goal mode.
std::vector<TaskSpec> evaluation_goals(const std::vector<TaskSpec>& tasks,
                                       const TrainConfig& cfg);

}  // namespace tendonopt
