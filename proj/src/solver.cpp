#include "tendonopt/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "tendonopt/errors.hpp"
#include "tendonopt/parallel.hpp"

namespace tendonopt {

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

// --------------------------------------------------------------------------
// Grid scanning. Stored energy is separable per joint and slack is linear,
// so per-axis contributions are precomputed once and cells cost O(M) each.

struct AxisTable {
  int joint = 0;                 // joint index this axis sweeps
  std::vector<double> centers;   // cell-center angles
  Eigen::MatrixXd w_contrib;     // M x cells, flexion column * center
  std::vector<double> u_contrib; // per-cell stored-energy share
  double step = 0.0;
};

AxisTable make_axis(const DesignParams& d, int joint, double lo, double hi,
                    int cells) {
  AxisTable t;
  t.joint = joint;
  t.step = (hi - lo) / cells;
  t.centers.resize(cells);
  t.u_contrib.resize(cells);
  t.w_contrib.resize(d.num_motors(), cells);
  for (int i = 0; i < cells; ++i) {
    const double a = lo + (i + 0.5) * t.step;
    t.centers[i] = a;
    t.w_contrib.col(i) = d.flexion_radii.col(joint) * a;
    const double dl = d.extension_radius * a + d.pretension[joint];
    t.u_contrib[i] = 0.5 * d.spring_k * dl * dl;
  }
  return t;
}

// Half the slack change across one grid step, per tendon, floored.
Eigen::VectorXd tautness_band(const DesignParams& d,
                              const std::vector<AxisTable>& axes,
                              double floor_value) {
  Eigen::VectorXd band = Eigen::VectorXd::Constant(d.num_motors(), floor_value);
  for (const auto& ax : axes) {
    band += 0.5 * ax.step * d.flexion_radii.col(ax.joint).cwiseAbs();
  }
  return band.cwiseMax(floor_value);
}

struct CellCandidate {
  double energy = std::numeric_limits<double>::infinity();
  std::vector<int> idx;
  Eigen::VectorXd theta;
  int taut_tendon = -1;
};

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool candidate_less(const CellCandidate& a, const CellCandidate& b) {
  if (a.energy != b.energy) return a.energy < b.energy;
  return lex_less(a.idx, b.idx);
}

// Bounded accumulator: global top-k plus the best cell per taut tendon.
struct ScanAccumulator {
  explicit ScanAccumulator(int k, int motors) : topk_limit(k), per_branch(motors) {}

  int topk_limit;
  std::vector<CellCandidate> topk;
  std::vector<CellCandidate> per_branch;
  std::size_t feasible_cells = 0;

  void offer(const CellCandidate& c) {
    ++feasible_cells;
    auto& pb = per_branch[c.taut_tendon];
    if (pb.taut_tendon < 0 || candidate_less(c, pb)) pb = c;
    if (static_cast<int>(topk.size()) < topk_limit ||
        candidate_less(c, topk.back())) {
      topk.insert(std::upper_bound(topk.begin(), topk.end(), c, candidate_less), c);
      if (static_cast<int>(topk.size()) > topk_limit) topk.pop_back();
    }
  }

  void merge(const ScanAccumulator& other) {
    feasible_cells += other.feasible_cells;
    for (std::size_t b = 0; b < per_branch.size(); ++b) {
      const auto& pb = other.per_branch[b];
      if (pb.taut_tendon >= 0 &&
          (per_branch[b].taut_tendon < 0 || candidate_less(pb, per_branch[b])))
        per_branch[b] = pb;
    }
    for (const auto& c : other.topk) offer_existing(c);
  }

 private:
  void offer_existing(const CellCandidate& c) {
    if (static_cast<int>(topk.size()) < topk_limit ||
        candidate_less(c, topk.back())) {
      topk.insert(std::upper_bound(topk.begin(), topk.end(), c, candidate_less), c);
      if (static_cast<int>(topk.size()) > topk_limit) topk.pop_back();
    }
  }
};

// Visit = void(const std::vector<int>& idx, const Eigen::VectorXd& w, double u)
template <typename Visit>
void scan_cells(const std::vector<AxisTable>& axes, const Eigen::VectorXd& base_w,
                double base_u, std::size_t outer_begin, std::size_t outer_end,
                Visit&& visit) {
  const int n = static_cast<int>(axes.size());
  std::vector<Eigen::VectorXd> wpart(n + 1);
  std::vector<double> upart(n + 1, 0.0);
  wpart[0] = base_w;
  upart[0] = base_u;
  std::vector<int> idx(n, 0);

  // depth-first odometer over the axes; depth 0 restricted to [begin, end)
  std::function<void(int, std::size_t, std::size_t)> rec =
      [&](int depth, std::size_t begin, std::size_t end) {
        const AxisTable& ax = axes[depth];
        for (std::size_t i = begin; i < end; ++i) {
          idx[depth] = static_cast<int>(i);
          wpart[depth + 1] = wpart[depth] + ax.w_contrib.col(static_cast<int>(i));
          upart[depth + 1] = upart[depth] + ax.u_contrib[i];
          if (depth + 1 == n) {
            visit(idx, wpart[n], upart[n]);
          } else {
            rec(depth + 1, 0, axes[depth + 1].centers.size());
          }
        }
      };
  rec(0, outer_begin, outer_end);
}

// Feasibility of a cell center under the per-tendon tautness band.
// Returns the taut-nearest tendon index, or -1 when infeasible.
int cell_taut_tendon(const Eigen::VectorXd& w, const Eigen::VectorXd& band) {
  int taut = -1;
  double best_abs = std::numeric_limits<double>::infinity();
  bool any_taut = false;
  for (int i = 0; i < w.size(); ++i) {
    if (w[i] < -band[i]) return -1;
    if (w[i] <= band[i]) any_taut = true;
    const double a = std::abs(w[i]);
    if (a < best_abs) {
      best_abs = a;
      taut = i;
    }
  }
  return any_taut ? taut : -1;
}

ScanAccumulator scan_grid(const DesignParams& d, const std::vector<AxisTable>& axes,
                          const Eigen::VectorXd& base_w, double base_u, int topk,
                          double band_floor) {
  const Eigen::VectorXd band = tautness_band(d, axes, band_floor);
  const std::size_t outer = axes.empty() ? 0 : axes[0].centers.size();
  const int workers = configured_threads();
  std::vector<ScanAccumulator> parts(
      std::max<std::size_t>(1, std::min<std::size_t>(workers, outer)),
      ScanAccumulator(topk, d.num_motors()));

  parallel_chunks(outer, static_cast<int>(parts.size()),
                  [&](std::size_t begin, std::size_t end, int worker) {
                    auto& acc = parts[worker];
                    scan_cells(axes, base_w, base_u, begin, end,
                               [&](const std::vector<int>& idx,
                                   const Eigen::VectorXd& w, double u) {
                                 const int taut = cell_taut_tendon(w, band);
                                 if (taut < 0) return;
                                 CellCandidate c;
                                 c.energy = u;
                                 c.idx = idx;
                                 c.taut_tendon = taut;
                                 c.theta.resize(axes.size());
                                 for (std::size_t a = 0; a < axes.size(); ++a)
                                   c.theta[a] = axes[a].centers[idx[a]];
                                 acc.offer(c);
                               });
                  });

  ScanAccumulator merged = parts[0];
  for (std::size_t p = 1; p < parts.size(); ++p) merged.merge(parts[p]);
  return merged;
}

std::vector<AxisTable> full_axes(const DesignParams& d, int cells) {
  std::vector<AxisTable> axes;
  axes.reserve(d.num_joints());
  for (int j = 0; j < d.num_joints(); ++j)
    axes.push_back(make_axis(d, j, d.joint_limit_lo, d.joint_limit_hi, cells));
  return axes;
}

// --------------------------------------------------------------------------
// Exact refinement on one branch of the feasible manifold (tendon `taut`
// held exactly taut): equality-constrained quadratic program solved by
// enumerating active sets of the remaining slack and box constraints.

struct BranchResult {
  Eigen::VectorXd theta;
  double energy;
};

std::optional<BranchResult> solve_branch_qp(const DesignParams& d,
                                            const Eigen::VectorXd& motor_angles,
                                            int taut) {
  const int n = d.num_joints();
  const int m = d.num_motors();
  const Eigen::VectorXd take = d.winch_radii.cwiseProduct(motor_angles);
  const double hq = d.spring_k * d.extension_radius * d.extension_radius;
  const Eigen::VectorXd lin = d.spring_k * d.extension_radius * d.pretension;

  struct Row {
    Eigen::RowVectorXd a;
    double b;
  };
  Row eq{d.flexion_radii.row(taut), take[taut]};
  std::vector<Row> ineq;  // a * theta >= b
  ineq.reserve(m - 1 + 2 * n);
  for (int k = 0; k < m; ++k) {
    if (k == taut) continue;
    ineq.push_back({d.flexion_radii.row(k), take[k]});
  }
  for (int j = 0; j < n; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e[j] = 1.0;
    ineq.push_back({e, d.joint_limit_lo});
    ineq.push_back({-e, -d.joint_limit_hi});
  }

  const int p = static_cast<int>(ineq.size());
  std::optional<BranchResult> best;

  for (unsigned mask = 0; mask < (1u << p); ++mask) {
    const int active = __builtin_popcount(mask);
    if (active > n - 1) continue;
    const int rows = 1 + active;

    Eigen::MatrixXd A(rows, n);
    Eigen::VectorXd b(rows);
    A.row(0) = eq.a;
    b[0] = eq.b;
    int r = 1;
    for (int i = 0; i < p; ++i) {
      if (mask & (1u << i)) {
        A.row(r) = ineq[i].a;
        b[r] = ineq[i].b;
        ++r;
      }
    }

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + rows, n + rows);
    kkt.topLeftCorner(n, n) = hq * Eigen::MatrixXd::Identity(n, n);
    kkt.topRightCorner(n, rows) = -A.transpose();
    kkt.bottomLeftCorner(rows, n) = A;
    Eigen::VectorXd rhs(n + rows);
    rhs.head(n) = -lin;
    rhs.tail(rows) = b;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd theta = sol.head(n);
    const Eigen::VectorXd mu = sol.tail(rows);
    if (!theta.allFinite()) continue;

    // dual feasibility of the active inequality rows
    const double mu_scale = std::max(1.0, mu.cwiseAbs().maxCoeff());
    bool ok = true;
    for (int i = 1; i < rows; ++i) {
      if (mu[i] < -1e-8 * mu_scale) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    // primal feasibility of the inactive rows
    for (int i = 0; i < p && ok; ++i) {
      if (mask & (1u << i)) continue;
      const double slack = ineq[i].a.dot(theta) - ineq[i].b;
      if (slack < -1e-9 * std::max(1.0, std::abs(ineq[i].b))) ok = false;
    }
    if (!ok) continue;

    BranchResult cand;
    cand.theta = theta.cwiseMax(d.joint_limit_lo).cwiseMin(d.joint_limit_hi);
    cand.energy = stored_energy(cand.theta, d);
    if (!best || cand.energy < best->energy ||
        (cand.energy == best->energy &&
         std::lexicographical_compare(cand.theta.data(), cand.theta.data() + n,
                                      best->theta.data(), best->theta.data() + n))) {
      best = cand;
    }
  }
  return best;
}

ChainState finalize_state(const DesignParams& d, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& motor_angles) {
  ChainState s;
  s.joint_angles = theta;
  s.motor_angles = motor_angles;
  s.ee_position = forward_kinematics(theta, d.link_lengths).ee_position;
  return s;
}

void check_inputs(const DesignParams& d, const Eigen::VectorXd& motor_angles) {
  d.validate();
  if (motor_angles.size() != d.num_motors())
    throw std::invalid_argument("solve: motor_angles length must equal num_motors");
  if (!motor_angles.allFinite())
    throw std::invalid_argument("solve: motor_angles must be finite");
}

// Penalty on constraint violation: sum of squared negative slacks plus the
// squared smallest-magnitude slack (tautness residual).
struct PenaltyEval {
  double energy = 0.0;
  double penalty = 0.0;
  int taut = -1;
  Eigen::VectorXd w;
};

PenaltyEval eval_penalty(const DesignParams& d, const Eigen::VectorXd& take,
                         const Eigen::VectorXd& theta) {
  PenaltyEval e;
  e.w = d.flexion_radii * theta - take;
  e.energy = stored_energy(theta, d);
  double best_abs = std::numeric_limits<double>::infinity();
  for (int i = 0; i < e.w.size(); ++i) {
    if (e.w[i] < 0.0) e.penalty += e.w[i] * e.w[i];
    const double a = std::abs(e.w[i]);
    if (a < best_abs) {
      best_abs = a;
      e.taut = i;
    }
  }
  e.penalty += best_abs * best_abs;
  return e;
}

}  // namespace

void SolverConfig::validate() const {
  if (grid_resolution < 2)
    throw std::invalid_argument("solver.grid_resolution: must be >= 2");
  if (local_max_iters < 1)
    throw std::invalid_argument("solver.local_max_iters: must be >= 1");
  if (!(constraint_tol > 0.0))
    throw std::invalid_argument("solver.constraint_tol: must be > 0");
  if (!(energy_tol > 0.0))
    throw std::invalid_argument("solver.energy_tol: must be > 0");
  if (polish_starts < 1)
    throw std::invalid_argument("solver.polish_starts: must be >= 1");
}

LocalSolveResult solve_budgeted_local(const DesignParams& design,
                                      const ChainState& seed,
                                      const Eigen::VectorXd& motor_angles,
                                      int steps, double constraint_tol) {
  check_inputs(design, motor_angles);
  if (steps < 1) throw std::invalid_argument("solve_budgeted_local: steps must be >= 1");
  if (seed.joint_angles.size() != design.num_joints())
    throw std::invalid_argument("solve_budgeted_local: seed joint_angles size mismatch");

  const int n = design.num_joints();
  const Eigen::VectorXd take = design.winch_radii.cwiseProduct(motor_angles);
  const double hq = design.spring_k * design.extension_radius * design.extension_radius;
  const Eigen::VectorXd lin = design.spring_k * design.extension_radius * design.pretension;

  auto clamp = [&](Eigen::VectorXd v) {
    return v.cwiseMax(design.joint_limit_lo).cwiseMin(design.joint_limit_hi);
  };

  Eigen::VectorXd theta = clamp(seed.joint_angles);

  double row_sq = 0.0;
  for (int i = 0; i < design.num_motors(); ++i)
    row_sq += design.flexion_radii.row(i).squaredNorm();
  row_sq /= design.num_motors();
  double mu = 10.0 * hq / row_sq;

  std::optional<Eigen::VectorXd> best_feasible;
  double best_feasible_energy = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_infeasible = theta;
  double best_infeasible_penalty = std::numeric_limits<double>::infinity();

  auto record = [&](const Eigen::VectorXd& th, const PenaltyEval& e) {
    if (constraints_satisfied(e.w, constraint_tol)) {
      if (e.energy < best_feasible_energy) {
        best_feasible_energy = e.energy;
        best_feasible = th;
      }
    } else if (e.penalty < best_infeasible_penalty) {
      best_infeasible_penalty = e.penalty;
      best_infeasible = th;
    }
  };

  PenaltyEval cur = eval_penalty(design, take, theta);
  record(theta, cur);

  int it = 0;
  while (it < steps && mu <= 1e18) {
    bool stalled = false;
    for (int inner = 0; inner < 25 && it < steps; ++inner) {
      // gradient and Hessian of energy + mu * penalty
      Eigen::VectorXd g = hq * theta + lin;
      Eigen::MatrixXd H = hq * Eigen::MatrixXd::Identity(n, n);
      for (int i = 0; i < cur.w.size(); ++i) {
        if (cur.w[i] < 0.0) {
          g += 2.0 * mu * cur.w[i] * design.flexion_radii.row(i).transpose();
          H += 2.0 * mu * design.flexion_radii.row(i).transpose() *
               design.flexion_radii.row(i);
        }
      }
      g += 2.0 * mu * cur.w[cur.taut] * design.flexion_radii.row(cur.taut).transpose();
      H += 2.0 * mu * design.flexion_radii.row(cur.taut).transpose() *
           design.flexion_radii.row(cur.taut);
      H.diagonal().array() += 1e-12 * hq;

      Eigen::VectorXd dir = -H.ldlt().solve(g);
      if (!dir.allFinite()) dir = -g;

      const double f0 = cur.energy + mu * cur.penalty;
      const double slope = g.dot(dir);
      double alpha = 1.0;
      Eigen::VectorXd next = theta;
      PenaltyEval next_eval = cur;
      bool accepted = false;
      while (alpha > 1e-14) {
        next = clamp(theta + alpha * dir);
        next_eval = eval_penalty(design, take, next);
        const double f = next_eval.energy + mu * next_eval.penalty;
        if (f <= f0 + 1e-4 * alpha * slope || f < f0) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++it;
      if (!accepted) {
        stalled = true;
        break;
      }
      const double move = (next - theta).lpNorm<Eigen::Infinity>();
      theta = next;
      cur = next_eval;
      record(theta, cur);
      if (move < 1e-15) {
        stalled = true;
        break;
      }
    }
    mu *= 10.0;
    if (stalled && best_feasible && mu > 1e16) break;
  }

  LocalSolveResult out;
  out.iterations = it;
  if (best_feasible) {
    out.converged = true;
    out.state = finalize_state(design, *best_feasible, motor_angles);
    out.infeasibility =
        eval_penalty(design, take, *best_feasible).penalty;
  } else {
    out.converged = false;
    out.state = finalize_state(design, best_infeasible, motor_angles);
    out.infeasibility = best_infeasible_penalty;
  }
  return out;
}

namespace {

// Shared by global mode and the oracle: pick branch candidates from a scan.
std::vector<CellCandidate> candidate_cells(const ScanAccumulator& acc) {
  std::vector<CellCandidate> cells;
  for (const auto& pb : acc.per_branch)
    if (pb.taut_tendon >= 0) cells.push_back(pb);
  for (const auto& c : acc.topk) {
    bool dup = false;
    for (const auto& have : cells)
      if (have.idx == c.idx) {
        dup = true;
        break;
      }
    if (!dup) cells.push_back(c);
  }
  std::sort(cells.begin(), cells.end(), candidate_less);
  return cells;
}

ChainState solve_global(const DesignParams& d, const Eigen::VectorXd& motor_angles,
                        const SolverConfig& cfg) {
  const auto axes = full_axes(d, cfg.grid_resolution);
  const auto acc = scan_grid(d, axes, -d.winch_radii.cwiseProduct(motor_angles),
                             0.0, cfg.polish_starts, cfg.constraint_tol);
  const auto cells = candidate_cells(acc);
  if (cells.empty())
    throw InfeasibleCommandError(
        "solve_forward: no constraint-satisfying cell within joint limits",
        to_std(motor_angles));

  const Eigen::VectorXd take = d.winch_radii.cwiseProduct(motor_angles);
  std::optional<BranchResult> best;
  std::vector<bool> branch_done(d.num_motors(), false);
  for (const auto& cell : cells) {
    if (branch_done[cell.taut_tendon]) continue;
    branch_done[cell.taut_tendon] = true;
    auto res = solve_branch_qp(d, motor_angles, cell.taut_tendon);
    if (!res) continue;
    if (!constraints_satisfied(d.flexion_radii * res->theta - take,
                               cfg.constraint_tol))
      continue;
    if (!best || res->energy < best->energy ||
        (res->energy == best->energy &&
         std::lexicographical_compare(res->theta.data(),
                                      res->theta.data() + res->theta.size(),
                                      best->theta.data(),
                                      best->theta.data() + best->theta.size())))
      best = res;
  }

  if (!best) {
    // Degenerate active-set geometry: fall back to penalty descent from the
    // best grid cell.
    ChainState seed = finalize_state(d, cells.front().theta, motor_angles);
    auto local = solve_budgeted_local(d, seed, motor_angles, cfg.local_max_iters,
                                      cfg.constraint_tol);
    if (local.converged) return local.state;
    throw InfeasibleCommandError(
        "solve_forward: polish failed to reach the constraint surface",
        to_std(motor_angles));
  }
  return finalize_state(d, best->theta, motor_angles);
}

ChainState solve_warm_start(const DesignParams& d, const ChainState& seed,
                            const Eigen::VectorXd& motor_angles,
                            const SolverConfig& cfg) {
  validate_state(seed, d);
  auto local = solve_budgeted_local(d, seed, motor_angles, cfg.local_max_iters,
                                    cfg.constraint_tol);
  const Eigen::VectorXd take = d.winch_radii.cwiseProduct(motor_angles);
  const Eigen::VectorXd w = d.flexion_radii * local.state.joint_angles - take;

  // Commit to the branch the descent parked on, nearest-taut first.
  std::vector<int> order(d.num_motors());
  for (int i = 0; i < d.num_motors(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(w[a]) < std::abs(w[b]);
  });
  for (int branch : order) {
    auto res = solve_branch_qp(d, motor_angles, branch);
    if (!res) continue;
    if (!constraints_satisfied(d.flexion_radii * res->theta - take,
                               cfg.constraint_tol))
      continue;
    return finalize_state(d, res->theta, motor_angles);
  }
  if (local.converged) return local.state;
  throw InfeasibleCommandError(
      "solve_forward: no feasible configuration reachable from seed",
      to_std(motor_angles));
}

// Shrinking-window enumeration around a seed cell; pure grid refinement.
struct ZoomBest {
  Eigen::VectorXd theta;
  double energy = std::numeric_limits<double>::infinity();
  bool found = false;
};

void zoom_offer(ZoomBest& best, const Eigen::VectorXd& theta, double energy) {
  if (!best.found || energy < best.energy ||
      (energy == best.energy &&
       std::lexicographical_compare(theta.data(), theta.data() + theta.size(),
                                    best.theta.data(),
                                    best.theta.data() + best.theta.size()))) {
    best.theta = theta;
    best.energy = energy;
    best.found = true;
  }
}

ZoomBest zoom_refine(const DesignParams& d, const Eigen::VectorXd& take,
                     const Eigen::VectorXd& start, double start_half,
                     double constraint_tol) {
  constexpr int kZoomCells = 17;
  ZoomBest best;
  Eigen::VectorXd center = start;
  double half = start_half;

  for (int level = 0; level < 48; ++level) {
    std::vector<AxisTable> axes;
    axes.reserve(d.num_joints());
    for (int j = 0; j < d.num_joints(); ++j) {
      const double lo = std::max(d.joint_limit_lo, center[j] - half);
      const double hi = std::min(d.joint_limit_hi, center[j] + half);
      axes.push_back(make_axis(d, j, lo, hi, kZoomCells));
    }
    const Eigen::VectorXd band = tautness_band(d, axes, 1e-14);

    ZoomBest level_best;
    scan_cells(axes, -take, 0.0, 0, kZoomCells,
               [&](const std::vector<int>& idx, const Eigen::VectorXd& w, double u) {
                 if (cell_taut_tendon(w, band) < 0) return;
                 Eigen::VectorXd theta(axes.size());
                 for (std::size_t a = 0; a < axes.size(); ++a)
                   theta[a] = axes[a].centers[idx[a]];
                 zoom_offer(level_best, theta, u);
               });
    if (!level_best.found) break;
    zoom_offer(best, level_best.theta, level_best.energy);
    center = level_best.theta;
    const double band_max = band.maxCoeff();
    half = 5.0 * half / kZoomCells;
    if (band_max <= std::min(1e-10, 0.25 * constraint_tol) && level >= 6) break;
  }
  return best;
}

}  // namespace

ChainState brute_force_oracle(const DesignParams& design,
                              const Eigen::VectorXd& motor_angles,
                              const SolverConfig& cfg) {
  check_inputs(design, motor_angles);
  cfg.validate();

  const auto axes = full_axes(design, cfg.grid_resolution);
  const Eigen::VectorXd take = design.winch_radii.cwiseProduct(motor_angles);
  const auto acc = scan_grid(design, axes, -take, 0.0, 3, cfg.constraint_tol);
  const auto cells = candidate_cells(acc);
  if (cells.empty())
    throw InfeasibleCommandError(
        "brute_force_oracle: no feasible cell within joint limits",
        to_std(motor_angles));

  const double start_half = 1.5 * axes[0].step;
  ZoomBest best;
  for (const auto& cell : cells) {
    const ZoomBest z =
        zoom_refine(design, take, cell.theta, start_half, cfg.constraint_tol);
    if (z.found) zoom_offer(best, z.theta, z.energy);
  }
  if (!best.found)
    throw InfeasibleCommandError("brute_force_oracle: zoom refinement failed",
                                 to_std(motor_angles));
  return finalize_state(design, best.theta, motor_angles);
}

ChainState solve_forward(const DesignParams& design, const ChainState& seed,
                         const Eigen::VectorXd& motor_angles,
                         const SolverConfig& cfg) {
  check_inputs(design, motor_angles);
  cfg.validate();

  ChainState out;
  switch (cfg.mode) {
    case SolveMode::global:
      out = solve_global(design, motor_angles, cfg);
      break;
    case SolveMode::oracle:
      out = brute_force_oracle(design, motor_angles, cfg);
      break;
    case SolveMode::warm_start_local:
      out = solve_warm_start(design, seed, motor_angles, cfg);
      break;
    default:
      throw std::invalid_argument("solve_forward: unknown mode");
  }

  const Eigen::VectorXd w =
      tendon_slack(out.joint_angles, out.motor_angles, design);
  if (!constraints_satisfied(w, cfg.constraint_tol))
    throw std::runtime_error(
        "solve_forward: internal error, returned state violates constraints");
  return out;
}

ManifoldGrid manifold_map(const DesignParams& design,
                          const Eigen::VectorXd& motor_angles,
                          const std::map<int, double>& fixed_joints,
                          const SolverConfig& cfg) {
  check_inputs(design, motor_angles);
  cfg.validate();
  const int n = design.num_joints();
  for (const auto& [j, angle] : fixed_joints) {
    if (j < 0 || j >= n) {
      std::ostringstream os;
      os << "manifold_map: fixed joint index " << j << " out of range [0, "
         << n - 1 << "]";
      throw std::invalid_argument(os.str());
    }
    if (!std::isfinite(angle))
      throw std::invalid_argument("manifold_map: pinned angle must be finite");
  }

  ManifoldGrid grid;
  grid.fixed_joints = fixed_joints;
  for (int j = 0; j < n; ++j)
    if (!fixed_joints.count(j)) grid.free_joints.push_back(j);
  if (grid.free_joints.empty() || grid.free_joints.size() > 2)
    throw std::invalid_argument(
        "manifold_map: slice must leave one or two joints free");

  // pinned joints contribute constant slack and energy
  Eigen::VectorXd base_w = -design.winch_radii.cwiseProduct(motor_angles);
  double base_u = 0.0;
  for (const auto& [j, angle] : fixed_joints) {
    base_w += design.flexion_radii.col(j) * angle;
    const double dl = design.extension_radius * angle + design.pretension[j];
    base_u += 0.5 * design.spring_k * dl * dl;
  }

  std::vector<AxisTable> axes;
  for (int j : grid.free_joints)
    axes.push_back(make_axis(design, j, design.joint_limit_lo,
                             design.joint_limit_hi, cfg.grid_resolution));
  for (const auto& ax : axes) {
    grid.axes.push_back(ax.centers);
  }

  const Eigen::VectorXd band = tautness_band(design, axes, cfg.constraint_tol);
  const std::size_t cells = grid.cell_count();
  grid.satisfied.assign(cells, 0);
  grid.energy.assign(cells, 0.0);

  std::vector<std::size_t> strides(axes.size(), 1);
  for (int a = static_cast<int>(axes.size()) - 2; a >= 0; --a)
    strides[a] = strides[a + 1] * axes[a + 1].centers.size();

  scan_cells(axes, base_w, base_u, 0, axes[0].centers.size(),
             [&](const std::vector<int>& idx, const Eigen::VectorXd& w, double u) {
               std::size_t flat = 0;
               for (std::size_t a = 0; a < idx.size(); ++a)
                 flat += strides[a] * static_cast<std::size_t>(idx[a]);
               grid.satisfied[flat] = cell_taut_tendon(w, band) >= 0 ? 1 : 0;
               grid.energy[flat] = u;
             });
  return grid;
}

std::size_t ManifoldGrid::cell_count() const {
  std::size_t c = 1;
  for (const auto& a : axes) c *= a.size();
  return c;
}

std::string ManifoldGrid::to_csv() const {
  std::ostringstream os;
  for (std::size_t a = 0; a < axes.size(); ++a)
    os << "theta_" << free_joints[a] << ",";
  os << "satisfied,energy\n";

  char buf[64];
  std::vector<std::size_t> idx(axes.size(), 0);
  const std::size_t cells = cell_count();
  for (std::size_t flat = 0; flat < cells; ++flat) {
    std::size_t rem = flat;
    for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
      idx[a] = rem % axes[a].size();
      rem /= axes[a].size();
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
      std::snprintf(buf, sizeof(buf), "%.17g", axes[a][idx[a]]);
      os << buf << ",";
    }
    os << int(satisfied[flat]) << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", energy[flat]);
    os << buf << "\n";
  }
  return os.str();
}

StepOutcome step(const ChainState& state, const Eigen::VectorXd& action,
                 const DesignParams& design, const TaskSpec& task,
                 const SolverConfig& cfg, bool project_infeasible) {
  task.validate();
  StepOutcome out;
  out.applied_action = action;
  try {
    out.next = solve_forward(design, state, action, cfg);
  } catch (const InfeasibleCommandError&) {
    if (!project_infeasible)
      throw InfeasibleCommandError("step: infeasible motor command",
                                   to_std(action));
    // Shrink the command toward zero until it lands on the manifold.
    double lo = 0.0, hi = 1.0;
    ChainState good = solve_forward(design, state,
                                    Eigen::VectorXd::Zero(action.size()), cfg);
    for (int iter = 0; iter < 30; ++iter) {
      const double mid = 0.5 * (lo + hi);
      try {
        good = solve_forward(design, state, (mid * action).eval(), cfg);
        lo = mid;
      } catch (const InfeasibleCommandError&) {
        hi = mid;
      }
    }
    out.next = good;
    out.applied_action = lo * action;
    out.action_projected = true;
  }
  out.reward = reward(out.next.ee_position, task);
  return out;
}

}  // namespace tendonopt
