#include "tendonopt/cooptim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tendonopt/errors.hpp"

namespace tendonopt {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

Eigen::VectorXd squash_action(const Eigen::VectorXd& raw, double motor_max) {
  return 0.5 * motor_max * (raw.array().tanh() + 1.0);
}

Eigen::VectorXd squash_derivative(const Eigen::VectorXd& raw, double motor_max) {
  return 0.5 * motor_max * (1.0 - raw.array().tanh().square());
}

TaskSpec reward_free_task() {
  TaskSpec t;
  t.goal = Eigen::Vector2d::Zero();
  t.bonus = 0.0;
  return t;
}

// Environment response used as the ground truth q_phi: global solve with
// infeasible commands projected toward zero, matching collection behavior.
StepOutcome ground_truth_step(const DesignParams& design, const ChainState& state,
                              const Eigen::VectorXd& action, const TaskSpec& task,
                              const SolverConfig& solver) {
  return step(state, action, design, task, solver, /*project_infeasible=*/true);
}

double smooth_bonus(double distance, const TaskSpec& task) {
  constexpr double kTemp = 1e-3;  // meters
  const double u = (task.bonus_threshold - distance) / kTemp;
  return task.bonus / (1.0 + std::exp(-u));
}

double smooth_reward(const Eigen::Vector2d& ee, const TaskSpec& task) {
  const double d = (ee - task.goal).norm();
  return -d * d + smooth_bonus(d, task);
}

Eigen::Vector2d smooth_reward_grad(const Eigen::Vector2d& ee, const TaskSpec& task) {
  constexpr double kTemp = 1e-3;
  const Eigen::Vector2d diff = ee - task.goal;
  const double d = diff.norm();
  Eigen::Vector2d grad = -2.0 * diff;
  if (d > 1e-12) {
    const double u = (task.bonus_threshold - d) / kTemp;
    const double s = 1.0 / (1.0 + std::exp(-u));
    grad += task.bonus * s * (1.0 - s) * (-1.0 / kTemp) * (diff / d);
  }
  return grad;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0)
    throw std::invalid_argument("replay buffer: capacity must be > 0");
}

void ReplayBuffer::push(Transition t) {
  t.design_version = version_;
  data_.push_back(std::move(t));
  while (data_.size() > capacity_) data_.pop_front();
}

void ReplayBuffer::bump_version() {
  ++version_;
  data_.clear();
}

TrainableMask TrainableMask::for_mode(TrainMode mode) {
  TrainableMask m;
  switch (mode) {
    case TrainMode::refab:
    case TrainMode::multi_goal:
      break;  // everything trainable
    case TrainMode::pretension_only:
      m.flexion_radii = false;
      m.link_lengths = false;
      break;
    case TrainMode::fixed_design_baseline:
      m.flexion_radii = false;
      m.pretension = false;
      m.link_lengths = false;
      break;
  }
  return m;
}

int TrainableMask::dims(const DesignParams& d) const {
  int n = 0;
  if (flexion_radii) n += d.num_motors() * d.num_joints();
  if (pretension) n += d.num_joints();
  if (link_lengths) n += d.num_joints();
  return n;
}

void ExtractBounds::validate() const {
  if (!(radius_lo > 0.0 && radius_lo < radius_hi))
    throw std::invalid_argument("extract_bounds: radius bounds must satisfy 0 < lo < hi");
  if (!(pretension_lo >= 0.0 && pretension_lo < pretension_hi))
    throw std::invalid_argument("extract_bounds: pretension bounds must satisfy 0 <= lo < hi");
  if (!(length_lo > 0.0 && length_lo < length_hi))
    throw std::invalid_argument("extract_bounds: length bounds must satisfy 0 < lo < hi");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("train.alpha: must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train.epochs: must be >= 1");
  if (rollouts_per_epoch < 1)
    throw std::invalid_argument("train.rollouts_per_epoch: must be >= 1");
  if (horizon < 1) throw std::invalid_argument("train.horizon: must be >= 1");
  if (extract_every_n_epochs < 1)
    throw std::invalid_argument("train.extract_every_n_epochs: must be >= 1");
  if (!(proxy_lr > 0.0)) throw std::invalid_argument("train.proxy_lr: must be > 0");
  if (!(policy_lr > 0.0)) throw std::invalid_argument("train.policy_lr: must be > 0");
  if (buffer_capacity < 1)
    throw std::invalid_argument("train.buffer_capacity: must be >= 1");
  if (!(exploration_sigma >= 0.0))
    throw std::invalid_argument("train.exploration_sigma: must be >= 0");
  if (!(proxy_gate > 0.0)) throw std::invalid_argument("train.proxy_gate: must be > 0");
  if (proxy_steps < 1) throw std::invalid_argument("train.proxy_steps: must be >= 1");
  if (policy_steps < 0) throw std::invalid_argument("train.policy_steps: must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size: must be >= 1");
  if (!(motor_max > 0.0)) throw std::invalid_argument("train.motor_max: must be > 0");
  if (eval_episodes < 1) throw std::invalid_argument("train.eval_episodes: must be >= 1");
  if (extract_max_evals < 10)
    throw std::invalid_argument("train.extract_max_evals: must be >= 10");
  if (!(extract_sigma > 0.0))
    throw std::invalid_argument("train.extract_sigma: must be > 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("train.grad_clip: must be > 0");
  if (!(goal_radius >= 0.0))
    throw std::invalid_argument("train.goal_radius: must be >= 0");
  if (eval_goals < 1) throw std::invalid_argument("train.eval_goals: must be >= 1");
  extract_bounds.validate();
}

int policy_input_size(const DesignParams& design, TrainMode mode) {
  return design.num_joints() + design.num_motors() + 2 +
         (mode == TrainMode::multi_goal ? 2 : 0);
}

int proxy_input_size(const DesignParams& design) {
  return design.num_joints() + design.num_motors();
}

int proxy_output_size(const DesignParams& design) {
  return design.num_joints() + 2;
}

Eigen::VectorXd encode_policy_input(const ChainState& state,
                                    const Eigen::Vector2d& goal, TrainMode mode) {
  const int n = static_cast<int>(state.joint_angles.size());
  const int m = static_cast<int>(state.motor_angles.size());
  Eigen::VectorXd x(n + m + 2 + (mode == TrainMode::multi_goal ? 2 : 0));
  x.head(n) = state.joint_angles;
  x.segment(n, m) = state.motor_angles;
  x.segment(n + m, 2) = state.ee_position;
  if (mode == TrainMode::multi_goal) x.tail(2) = goal;
  return x;
}

std::vector<Transition> collect_rollouts(const DesignParams& design,
                                         const Network& policy,
                                         const std::vector<TaskSpec>& tasks,
                                         const TrainConfig& cfg,
                                         const SolverConfig& solver,
                                         std::mt19937_64& rng) {
  if (tasks.empty())
    throw std::invalid_argument("collect_rollouts: tasks must be non-empty");
  if (policy.input_size() != policy_input_size(design, cfg.mode))
    throw std::invalid_argument(
        "collect_rollouts: policy input size does not match the state encoding");

  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(cfg.rollouts_per_epoch) * cfg.horizon);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int episode = 0; episode < cfg.rollouts_per_epoch; ++episode) {
    TaskSpec task = tasks[episode % tasks.size()];
    if (cfg.mode == TrainMode::multi_goal && cfg.goal_radius > 0.0) {
      // uniform draw in the disc around the configured center
      const double r = cfg.goal_radius * std::sqrt(unit(rng));
      const double phi = 2.0 * kPi * unit(rng);
      task.goal += r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    }
    std::mt19937_64 ep_rng(mix_seed(rng(), episode));

    ChainState state = ChainState::zero(design);
    for (int t = 0; t < cfg.horizon; ++t) {
      const Eigen::VectorXd enc = encode_policy_input(state, task.goal, cfg.mode);
      Eigen::VectorXd action =
          squash_action(net_forward_vec(policy, enc), cfg.motor_max);
      for (int i = 0; i < action.size(); ++i)
        action[i] += cfg.exploration_sigma * gauss(ep_rng);
      action = action.cwiseMax(0.0).cwiseMin(cfg.motor_max);

      const StepOutcome outcome =
          ground_truth_step(design, state, action, task, solver);
      Transition tr;
      tr.state = state;
      tr.action = outcome.applied_action;
      tr.next_state = outcome.next;
      tr.reward = outcome.reward;
      tr.goal = task.goal;
      tr.infeasible_flag = outcome.action_projected;
      out.push_back(std::move(tr));
      state = outcome.next;
    }
  }
  return out;
}

std::pair<Gradients, double> proxy_batch_gradient(const Network& proxy,
                                                  const Eigen::MatrixXd& inputs,
                                                  const Eigen::MatrixXd& targets,
                                                  double alpha) {
  Tape tape;
  const Eigen::MatrixXd pred = net_forward(proxy, inputs, &tape);
  const Eigen::MatrixXd err = pred - targets;
  const double denom = static_cast<double>(err.size());
  const double mse = err.squaredNorm() / denom;
  const Eigen::MatrixXd out_grad = (2.0 * alpha / denom) * err;
  BackwardResult back = net_backward(proxy, tape, out_grad);
  return {std::move(back.params), mse};
}

namespace {

void buffer_dataset(const ReplayBuffer& buffer, Eigen::MatrixXd& inputs,
                    Eigen::MatrixXd& targets) {
  const auto& data = buffer.data();
  const int n = static_cast<int>(data.front().state.joint_angles.size());
  const int m = static_cast<int>(data.front().action.size());
  inputs.resize(n + m, static_cast<Eigen::Index>(data.size()));
  targets.resize(n + 2, static_cast<Eigen::Index>(data.size()));
  Eigen::Index col = 0;
  for (const auto& tr : data) {
    inputs.col(col).head(n) = tr.state.joint_angles;
    inputs.col(col).segment(n, m) = tr.action;
    targets.col(col).head(n) = tr.next_state.joint_angles;
    targets.col(col).tail(2) = tr.next_state.ee_position;
    ++col;
  }
}

}  // namespace

ProxyLoss train_proxy(Network& proxy, Adam& opt, const ReplayBuffer& buffer,
                      double alpha, int steps, const TrainConfig& cfg,
                      std::mt19937_64& rng) {
  if (buffer.empty())
    throw std::invalid_argument("train_proxy: buffer must be non-empty");
  if (steps < 1) throw std::invalid_argument("train_proxy: steps must be >= 1");

  Eigen::MatrixXd inputs, targets;
  buffer_dataset(buffer, inputs, targets);
  const Eigen::Index total = inputs.cols();

  // deterministic 10% holdout: every tenth sample
  std::vector<Eigen::Index> train_idx, holdout_idx;
  for (Eigen::Index i = 0; i < total; ++i) {
    if (i % 10 == 9)
      holdout_idx.push_back(i);
    else
      train_idx.push_back(i);
  }
  if (holdout_idx.empty()) holdout_idx = train_idx;

  std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);
  const int batch =
      std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size()));

  ProxyLoss loss;
  loss.steps = steps;
  double mse_sum = 0.0;
  Eigen::MatrixXd bx(inputs.rows(), batch), by(targets.rows(), batch);
  for (int s = 0; s < steps; ++s) {
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index i = train_idx[pick(rng)];
      bx.col(b) = inputs.col(i);
      by.col(b) = targets.col(i);
    }
    auto [grads, mse] = proxy_batch_gradient(proxy, bx, by, alpha);
    if (!std::isfinite(mse))
      throw TrainingDivergenceError("train_proxy: non-finite regression loss");
    mse_sum += mse;
    proxy = opt.update(proxy, grads, cfg.proxy_lr);
  }
  loss.train_mse = mse_sum / steps;

  Eigen::MatrixXd hx(inputs.rows(), static_cast<Eigen::Index>(holdout_idx.size()));
  Eigen::MatrixXd hy(targets.rows(), static_cast<Eigen::Index>(holdout_idx.size()));
  for (std::size_t i = 0; i < holdout_idx.size(); ++i) {
    hx.col(static_cast<Eigen::Index>(i)) = inputs.col(holdout_idx[i]);
    hy.col(static_cast<Eigen::Index>(i)) = targets.col(holdout_idx[i]);
  }
  const Eigen::MatrixXd pred = net_forward(proxy, hx);
  loss.holdout_mse = (pred - hy).squaredNorm() / static_cast<double>(hy.size());
  if (!std::isfinite(loss.holdout_mse))
    throw TrainingDivergenceError("train_proxy: non-finite held-out loss");
  return loss;
}

double policy_update(Network& policy, Network& proxy, Adam& policy_opt,
                     Adam& proxy_opt, const DesignParams& design,
                     const std::vector<TaskSpec>& tasks, const TrainConfig& cfg,
                     std::mt19937_64& rng) {
  if (tasks.empty())
    throw std::invalid_argument("policy_update: tasks must be non-empty");
  if (cfg.horizon == 0) return 0.0;  // nothing to unroll

  const int n = design.num_joints();
  const int m = design.num_motors();
  const int horizon = cfg.horizon;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const ChainState start = ChainState::zero(design);
  double last_return = 0.0;
  const int updates = std::max(1, cfg.policy_steps);

  for (int update = 0; update < updates; ++update) {
    TaskSpec task = tasks[update % tasks.size()];
    if (cfg.mode == TrainMode::multi_goal && cfg.goal_radius > 0.0) {
      const double r = cfg.goal_radius * std::sqrt(unit(rng));
      const double phi = 2.0 * kPi * unit(rng);
      task.goal += r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    }

    // forward unroll through the proxy
    std::vector<Tape> policy_tapes(horizon), proxy_tapes(horizon);
    std::vector<Eigen::VectorXd> raw_actions(horizon), actions(horizon);
    std::vector<Eigen::VectorXd> thetas(horizon + 1);
    std::vector<Eigen::Vector2d> ees(horizon + 1);
    std::vector<Eigen::VectorXd> motors(horizon + 1);

    thetas[0] = start.joint_angles;
    ees[0] = start.ee_position;
    motors[0] = start.motor_angles;

    double total_return = 0.0;
    for (int t = 0; t < horizon; ++t) {
      ChainState s;
      s.joint_angles = thetas[t];
      s.motor_angles = motors[t];
      s.ee_position = ees[t];
      const Eigen::VectorXd enc = encode_policy_input(s, task.goal, cfg.mode);
      raw_actions[t] = net_forward_vec(policy, enc, &policy_tapes[t]);
      actions[t] = squash_action(raw_actions[t], cfg.motor_max);

      Eigen::VectorXd px(n + m);
      px.head(n) = thetas[t];
      px.tail(m) = actions[t];
      const Eigen::VectorXd out = net_forward_vec(proxy, px, &proxy_tapes[t]);
      thetas[t + 1] = out.head(n);
      ees[t + 1] = out.tail(2);
      motors[t + 1] = actions[t];
      total_return += smooth_reward(ees[t + 1], task);
    }
    last_return = total_return;

    // reverse pass; maximize return = minimize its negation
    Gradients policy_grads = Gradients::zeros_like(policy);
    Gradients proxy_grads = Gradients::zeros_like(proxy);
    std::vector<Eigen::VectorXd> g_theta(horizon + 1,
                                         Eigen::VectorXd::Zero(n));
    std::vector<Eigen::Vector2d> g_ee(horizon + 1, Eigen::Vector2d::Zero());
    std::vector<Eigen::VectorXd> g_motor(horizon + 1,
                                         Eigen::VectorXd::Zero(m));
    for (int t = 1; t <= horizon; ++t)
      g_ee[t] = smooth_reward_grad(ees[t], task);

    for (int t = horizon - 1; t >= 0; --t) {
      Eigen::MatrixXd o_grad(n + 2, 1);
      o_grad.col(0).head(n) = g_theta[t + 1];
      o_grad.col(0).tail(2) = g_ee[t + 1];
      BackwardResult pb = net_backward(proxy, proxy_tapes[t], o_grad);
      proxy_grads.accumulate(pb.params);

      Eigen::VectorXd g_action =
          pb.input_grad.col(0).tail(m) + g_motor[t + 1];
      const Eigen::VectorXd g_raw =
          g_action.cwiseProduct(squash_derivative(raw_actions[t], cfg.motor_max));
      BackwardResult cb =
          net_backward(policy, policy_tapes[t], Eigen::MatrixXd(g_raw));
      policy_grads.accumulate(cb.params);

      g_theta[t] = pb.input_grad.col(0).head(n) + cb.input_grad.col(0).head(n);
      g_motor[t] = cb.input_grad.col(0).segment(n, m);
      g_ee[t] += cb.input_grad.col(0).segment(n + m, 2);
    }

    // ascent: flip sign, clip by global norm
    policy_grads.scale(-1.0);
    proxy_grads.scale(-1.0);
    auto clip = [&](Gradients& g) {
      const double norm = std::sqrt(g.squared_norm());
      if (!std::isfinite(norm) || norm > cfg.grad_clip * 100.0)
        throw TrainingDivergenceError("policy_update: exploding gradients");
      if (norm > cfg.grad_clip) g.scale(cfg.grad_clip / norm);
    };
    clip(policy_grads);
    clip(proxy_grads);

    policy = policy_opt.update(policy, policy_grads, cfg.policy_lr);
    if (cfg.mode != TrainMode::fixed_design_baseline)
      proxy = proxy_opt.update(proxy, proxy_grads, cfg.proxy_lr);
  }
  return last_return;
}

Eigen::VectorXd pack_design(const DesignParams& design, const TrainableMask& mask) {
  Eigen::VectorXd v(mask.dims(design));
  Eigen::Index at = 0;
  if (mask.flexion_radii) {
    for (int i = 0; i < design.num_motors(); ++i)
      for (int j = 0; j < design.num_joints(); ++j)
        v[at++] = design.flexion_radii(i, j);
  }
  if (mask.pretension) {
    for (int j = 0; j < design.num_joints(); ++j) v[at++] = design.pretension[j];
  }
  if (mask.link_lengths) {
    for (int j = 0; j < design.num_joints(); ++j) v[at++] = design.link_lengths[j];
  }
  return v;
}

DesignParams unpack_design(const Eigen::VectorXd& packed,
                           const DesignParams& base, const TrainableMask& mask) {
  if (packed.size() != mask.dims(base))
    throw std::invalid_argument("unpack_design: packed vector size mismatch");
  DesignParams d = base;
  Eigen::Index at = 0;
  if (mask.flexion_radii) {
    for (int i = 0; i < d.num_motors(); ++i)
      for (int j = 0; j < d.num_joints(); ++j) d.flexion_radii(i, j) = packed[at++];
  }
  if (mask.pretension) {
    for (int j = 0; j < d.num_joints(); ++j) d.pretension[j] = packed[at++];
  }
  if (mask.link_lengths) {
    for (int j = 0; j < d.num_joints(); ++j) d.link_lengths[j] = packed[at++];
  }
  return d;
}

void extract_bounds_vectors(const ExtractBounds& bounds, const DesignParams& base,
                            const TrainableMask& mask, Eigen::VectorXd& lower,
                            Eigen::VectorXd& upper) {
  const int dims = mask.dims(base);
  lower.resize(dims);
  upper.resize(dims);
  Eigen::Index at = 0;
  if (mask.flexion_radii) {
    for (int i = 0; i < base.num_motors() * base.num_joints(); ++i) {
      lower[at] = bounds.radius_lo;
      upper[at] = bounds.radius_hi;
      ++at;
    }
  }
  if (mask.pretension) {
    for (int j = 0; j < base.num_joints(); ++j) {
      lower[at] = bounds.pretension_lo;
      upper[at] = bounds.pretension_hi;
      ++at;
    }
  }
  if (mask.link_lengths) {
    for (int j = 0; j < base.num_joints(); ++j) {
      lower[at] = bounds.length_lo;
      upper[at] = bounds.length_hi;
      ++at;
    }
  }
}

ExtractionResult extract_hardware(const Network& proxy, const ReplayBuffer& buffer,
                                  const ExtractBounds& bounds,
                                  const DesignParams& current,
                                  const TrainableMask& mask,
                                  const TrainConfig& cfg,
                                  const SolverConfig& solver, std::uint64_t seed) {
  if (buffer.size() < 100)
    throw std::invalid_argument(
        "extract_hardware: buffer must hold at least 100 transitions");
  ExtractionResult result;
  result.design = current;
  if (!mask.any()) return result;  // nothing trainable
  bounds.validate();

  Eigen::MatrixXd inputs, targets_unused;
  buffer_dataset(buffer, inputs, targets_unused);
  const Eigen::MatrixXd proxy_targets = net_forward(proxy, inputs);

  const int n = current.num_joints();
  const int m = current.num_motors();
  const TaskSpec dummy = reward_free_task();

  auto objective = [&](const Eigen::VectorXd& packed) {
    const DesignParams candidate = unpack_design(packed, current, mask);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
      ChainState from;
      from.joint_angles = inputs.col(c).head(n);
      from.motor_angles = Eigen::VectorXd::Zero(m);
      from.ee_position =
          forward_kinematics(from.joint_angles, candidate.link_lengths).ee_position;
      const StepOutcome out = ground_truth_step(
          candidate, from, inputs.col(c).tail(m), dummy, solver);
      Eigen::VectorXd q(n + 2);
      q.head(n) = out.next.joint_angles;
      q.tail(2) = out.next.ee_position;
      sum += (proxy_targets.col(c) - q).squaredNorm();
    }
    return sum / (static_cast<double>(inputs.cols()) * (n + 2));
  };

  Eigen::VectorXd lower, upper;
  extract_bounds_vectors(bounds, current, mask, lower, upper);
  const Eigen::VectorXd x0 =
      pack_design(current, mask).cwiseMax(lower).cwiseMin(upper);

  CmaConfig cma;
  cma.initial_sigma = cfg.extract_sigma;
  cma.max_evals = cfg.extract_max_evals;
  cma.lower = lower;
  cma.upper = upper;
  cma.seed = seed;
  cma.parallel_objective = true;

  result.cma = cmaes_minimize(objective, x0, cma);
  result.incumbent_fit = objective(x0);
  if (result.cma.best_f < result.incumbent_fit) {
    result.design = unpack_design(result.cma.best_x, current, mask);
    result.accepted = true;
  }
  return result;
}

std::vector<TaskSpec> evaluation_goals(const std::vector<TaskSpec>& tasks,
                                       const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::multi_goal || cfg.goal_radius <= 0.0) return tasks;
  std::vector<TaskSpec> goals;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xE7A1u));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int g = 0; g < cfg.eval_goals; ++g) {
    TaskSpec t = tasks[g % tasks.size()];
    const double r = cfg.goal_radius * std::sqrt(unit(rng));
    const double phi = 2.0 * kPi * unit(rng);
    t.goal += r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    goals.push_back(t);
  }
  return goals;
}

EvalResult eval_policy(const DesignParams& design, const Network& policy,
                       const std::vector<TaskSpec>& goals, int episodes_per_goal,
                       const TrainConfig& cfg, const SolverConfig& solver) {
  if (goals.empty())
    throw std::invalid_argument("eval_policy: goals must be non-empty");
  if (episodes_per_goal < 1)
    throw std::invalid_argument("eval_policy: episodes_per_goal must be >= 1");

  EvalResult result;
  for (const TaskSpec& task : goals) {
    for (int ep = 0; ep < episodes_per_goal; ++ep) {
      ChainState state = ChainState::zero(design);
      EvalEpisode record;
      record.goal = task.goal;
      for (int t = 0; t < task.horizon; ++t) {
        const Eigen::VectorXd enc =
            encode_policy_input(state, task.goal, cfg.mode);
        Eigen::VectorXd action =
            squash_action(net_forward_vec(policy, enc), cfg.motor_max);
        action = action.cwiseMax(0.0).cwiseMin(cfg.motor_max);
        const StepOutcome outcome =
            ground_truth_step(design, state, action, task, solver);
        record.episode_return += outcome.reward;
        if (outcome.action_projected) ++record.infeasible_count;
        state = outcome.next;
      }
      record.final_ee = state.ee_position;
      record.final_distance = (state.ee_position - task.goal).norm();
      result.infeasible_events += record.infeasible_count;
      result.episodes.push_back(record);
    }
  }

  const double count = static_cast<double>(result.episodes.size());
  double sum = 0.0, sum_ret = 0.0;
  for (const auto& e : result.episodes) {
    sum += e.final_distance;
    sum_ret += e.episode_return;
  }
  result.mean_distance = sum / count;
  result.mean_return = sum_ret / count;
  double var = 0.0;
  for (const auto& e : result.episodes) {
    const double d = e.final_distance - result.mean_distance;
    var += d * d;
  }
  result.std_distance = std::sqrt(var / count);
  return result;
}

ExperimentResult morph_loop(
    const TrainConfig& cfg, const SolverConfig& solver,
    const DesignParams& initial_design, const std::vector<TaskSpec>& tasks,
    const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  solver.validate();
  initial_design.validate();
  if (tasks.empty()) throw std::invalid_argument("morph_loop: tasks must be non-empty");
  for (const auto& t : tasks) t.validate();

  DesignParams design = initial_design;
  std::mt19937_64 rng(cfg.seed);

  std::vector<int> proxy_sizes{proxy_input_size(design)};
  proxy_sizes.insert(proxy_sizes.end(), cfg.proxy_hidden.begin(),
                     cfg.proxy_hidden.end());
  proxy_sizes.push_back(proxy_output_size(design));
  std::vector<int> policy_sizes{policy_input_size(design, cfg.mode)};
  policy_sizes.insert(policy_sizes.end(), cfg.policy_hidden.begin(),
                      cfg.policy_hidden.end());
  policy_sizes.push_back(design.num_motors());

  Network proxy = Network::xavier(proxy_sizes, Activation::tanh_fn,
                                  mix_seed(cfg.seed, 101));
  Network policy = Network::xavier(policy_sizes, Activation::tanh_fn,
                                   mix_seed(cfg.seed, 202));
  Adam proxy_opt, policy_opt;
  ReplayBuffer buffer(cfg.buffer_capacity);

  ExperimentResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto transitions =
        collect_rollouts(design, policy, tasks, cfg, solver, rng);
    int infeasible = 0;
    double return_sum = 0.0;
    for (const auto& tr : transitions) {
      if (tr.infeasible_flag) ++infeasible;
      return_sum += tr.reward;
      buffer.push(tr);
    }
    const double mean_return =
        return_sum / static_cast<double>(cfg.rollouts_per_epoch);

    ProxyLoss loss;
    int passes = 0;
    do {
      loss = train_proxy(proxy, proxy_opt, buffer, cfg.alpha, cfg.proxy_steps,
                         cfg, rng);
      ++passes;
    } while (loss.holdout_mse > cfg.proxy_gate && passes < 5);

    EpochRecord record;
    record.epoch = epoch;
    record.mean_return = mean_return;
    record.proxy_train_mse = loss.train_mse;
    record.proxy_holdout_mse = loss.holdout_mse;
    record.infeasible_count = infeasible;

    // the policy never trains against a proxy that misses the gate
    if (loss.holdout_mse <= cfg.proxy_gate && cfg.policy_steps > 0) {
      record.estimated_return = policy_update(policy, proxy, policy_opt,
                                              proxy_opt, design, tasks, cfg, rng);
      record.policy_updated = true;
    }

    if (cfg.mode != TrainMode::fixed_design_baseline &&
        cfg.trainable_params.any() &&
        (epoch + 1) % cfg.extract_every_n_epochs == 0 && buffer.size() >= 100) {
      try {
        const auto extraction = extract_hardware(
            proxy, buffer, cfg.extract_bounds, design, cfg.trainable_params,
            cfg, solver, mix_seed(cfg.seed, 9000 + epoch));
        if (extraction.accepted &&
            pack_design(extraction.design, cfg.trainable_params) !=
                pack_design(design, cfg.trainable_params)) {
          design = extraction.design;
          buffer.bump_version();
          record.extracted = true;
        }
      } catch (const OptimizerAbortError& err) {
        std::cerr << "warning: hardware extraction aborted, keeping phi ("
                  << err.what() << ")\n";
      }
    }

    record.design = design;
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }

  result.final_design = design;
  result.policy = policy;
  result.proxy = proxy;
  const auto goals = evaluation_goals(tasks, cfg);
  result.final_eval =
      eval_policy(design, policy, goals, cfg.eval_episodes, cfg, solver);
  return result;
}

}  // namespace tendonopt
