#include "tendonopt/chain.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tendonopt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

DesignParams DesignParams::initial() {
  DesignParams d;
  d.flexion_radii.resize(2, 3);
  d.flexion_radii << 0.005, 0.005, 0.005,  //
      0.005, 0.010, 0.020;
  d.winch_radii = Eigen::VectorXd::Constant(2, 0.01);
  d.extension_radius = 0.015;
  d.pretension = Eigen::VectorXd::Zero(3);
  d.link_lengths = Eigen::VectorXd::Constant(3, 0.8);
  d.spring_k = 100.0;
  d.joint_limit_lo = 0.0;
  d.joint_limit_hi = kHalfPi;
  return d;
}

void DesignParams::validate() const {
  const int n = num_joints();
  const int m = num_motors();
  require(n >= 1, "link_lengths: at least one link required");
  require(m >= 1, "winch_radii: at least one motor required");
  require(flexion_radii.rows() == m && flexion_radii.cols() == n,
          "flexion_radii: must be num_motors x num_joints");
  require(all_finite(flexion_radii) && (flexion_radii.array() > 0.0).all(),
          "flexion_radii: entries must be finite and > 0");
  require(winch_radii.allFinite() && (winch_radii.array() > 0.0).all(),
          "winch_radii: entries must be finite and > 0");
  require(std::isfinite(extension_radius) && extension_radius > 0.0,
          "extension_radius: must be finite and > 0");
  require(pretension.size() == n, "pretension: length must equal num_joints");
  require(pretension.allFinite() && (pretension.array() >= 0.0).all(),
          "pretension: entries must be finite and >= 0");
  require(link_lengths.allFinite() && (link_lengths.array() > 0.0).all(),
          "link_lengths: entries must be finite and > 0");
  require(std::isfinite(spring_k) && spring_k > 0.0,
          "spring_k: must be finite and > 0");
  require(std::isfinite(joint_limit_lo) && std::isfinite(joint_limit_hi) &&
              joint_limit_lo < joint_limit_hi,
          "joint_limits: lo must be < hi");
  require(joint_limit_lo <= 0.0 && joint_limit_hi >= 0.0,
          "joint_limits: must bracket zero (lo <= 0 <= hi)");
}

ChainState ChainState::zero(const DesignParams& design) {
  ChainState s;
  s.joint_angles = Eigen::VectorXd::Zero(design.num_joints());
  s.motor_angles = Eigen::VectorXd::Zero(design.num_motors());
  s.ee_position = forward_kinematics(s.joint_angles, design.link_lengths).ee_position;
  return s;
}

void TaskSpec::validate() const {
  require(goal.allFinite(), "goal: must be finite");
  require(std::isfinite(bonus), "bonus: must be finite");
  require(std::isfinite(bonus_threshold) && bonus_threshold > 0.0,
          "bonus_threshold: must be > 0");
  require(horizon >= 1, "horizon: must be >= 1");
}

ForwardKinematics forward_kinematics(const Eigen::VectorXd& joint_angles,
                                     const Eigen::VectorXd& link_lengths) {
  require(joint_angles.size() == link_lengths.size(),
          "forward_kinematics: joint_angles and link_lengths must have equal length");
  require(joint_angles.allFinite(), "forward_kinematics: joint_angles must be finite");

  const int n = static_cast<int>(joint_angles.size());
  ForwardKinematics fk;
  fk.joint_positions.resize(n + 1);
  fk.joint_positions[0] = Eigen::Vector2d::Zero();
  double cumulative = 0.0;
  for (int j = 0; j < n; ++j) {
    cumulative += joint_angles[j];
    fk.joint_positions[j + 1] =
        fk.joint_positions[j] +
        link_lengths[j] * Eigen::Vector2d(std::cos(cumulative), std::sin(cumulative));
  }
  fk.ee_position = fk.joint_positions[n];
  return fk;
}

Eigen::VectorXd tendon_slack(const Eigen::VectorXd& joint_angles,
                             const Eigen::VectorXd& motor_angles,
                             const DesignParams& design) {
  require(joint_angles.size() == design.num_joints(),
          "tendon_slack: joint_angles length must equal num_joints");
  require(motor_angles.size() == design.num_motors(),
          "tendon_slack: motor_angles length must equal num_motors");
  return design.flexion_radii * joint_angles -
         design.winch_radii.cwiseProduct(motor_angles);
}

Eigen::VectorXd elastic_elongation(const Eigen::VectorXd& joint_angles,
                                   const DesignParams& design) {
  require(joint_angles.size() == design.num_joints(),
          "elastic_elongation: joint_angles length must equal num_joints");
  return design.extension_radius * joint_angles + design.pretension;
}

double stored_energy(const Eigen::VectorXd& joint_angles,
                     const DesignParams& design) {
  const Eigen::VectorXd dl = elastic_elongation(joint_angles, design);
  return 0.5 * design.spring_k * dl.squaredNorm();
}

bool constraints_satisfied(const Eigen::VectorXd& slack, double tol) {
  require(slack.size() > 0, "constraints_satisfied: slack vector is empty");
  require(tol > 0.0, "constraints_satisfied: tol must be > 0");
  const double min_slack = slack.minCoeff();
  return min_slack >= -tol && min_slack <= tol;
}

double reward(const Eigen::Vector2d& ee, const TaskSpec& task) {
  const double dist = (ee - task.goal).norm();
  double r = -dist * dist;
  if (dist < task.bonus_threshold) r += task.bonus;
  return r;
}

void validate_state(const ChainState& state, const DesignParams& design) {
  require(state.joint_angles.size() == design.num_joints(),
          "state: joint_angles length must equal num_joints");
  require(state.motor_angles.size() == design.num_motors(),
          "state: motor_angles length must equal num_motors");
  const double slack_lim = 1e-9;
  for (int j = 0; j < state.joint_angles.size(); ++j) {
    if (state.joint_angles[j] < design.joint_limit_lo - slack_lim ||
        state.joint_angles[j] > design.joint_limit_hi + slack_lim) {
      std::ostringstream os;
      os << "state: joint " << j << " angle " << state.joint_angles[j]
         << " outside limits [" << design.joint_limit_lo << ", "
         << design.joint_limit_hi << "]";
      throw std::invalid_argument(os.str());
    }
  }
  const Eigen::Vector2d ee =
      forward_kinematics(state.joint_angles, design.link_lengths).ee_position;
  if ((ee - state.ee_position).norm() > 1e-9) {
    throw std::invalid_argument(
        "state: ee_position inconsistent with forward kinematics");
  }
}

}  // namespace tendonopt
