#pragma once

#include <Eigen/Core>
#include <vector>

namespace tendonopt {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

// Hardware parameter vector phi of an N-link chain driven by M flexion
// tendons, plus the passive extension mechanism shared by every joint.
// All quantities in SI units (meters, radians, N/m).
struct DesignParams {
  Eigen::MatrixXd flexion_radii;    // M x N, entry (i,j) = flexion pulley radius at joint j for tendon i
  Eigen::VectorXd winch_radii;      // M, actuated winch radius per motor
  double extension_radius = 0.015;  // constant extension pulley radius
  Eigen::VectorXd pretension;       // N, pretension elongation of the elastic tendon per joint
  Eigen::VectorXd link_lengths;     // N
  double spring_k = 100.0;          // elastic tendon stiffness
  double joint_limit_lo = 0.0;      // applied to every joint
  double joint_limit_hi = kHalfPi;

  int num_joints() const { return static_cast<int>(link_lengths.size()); }
  int num_motors() const { return static_cast<int>(winch_radii.size()); }

  // Three-link, two-tendon starting configuration used by the experiments.
  static DesignParams initial();

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ChainState {
  Eigen::VectorXd joint_angles;  // N
  Eigen::VectorXd motor_angles;  // M
  Eigen::Vector2d ee_position{0.0, 0.0};

  static ChainState zero(const DesignParams& design);
};

struct TaskSpec {
  Eigen::Vector2d goal{0.0, 0.0};
  double bonus = 1.0;
  double bonus_threshold = 0.002;  // meters
  int horizon = 20;                // steps per episode

  void validate() const;
};

struct ForwardKinematics {
  std::vector<Eigen::Vector2d> joint_positions;  // N+1, [0] is the base origin
  Eigen::Vector2d ee_position;
};

// Planar chain kinematics with cumulative angle sums, base at the origin.
ForwardKinematics forward_kinematics(const Eigen::VectorXd& joint_angles,
                                     const Eigen::VectorXd& link_lengths);

// Slack collected in each tendon: w = R^F theta_J - diag(R^A) theta_A.
Eigen::VectorXd tendon_slack(const Eigen::VectorXd& joint_angles,
                             const Eigen::VectorXd& motor_angles,
                             const DesignParams& design);

// Elastic tendon elongation per joint: R^e theta_j + l^pre_j.
Eigen::VectorXd elastic_elongation(const Eigen::VectorXd& joint_angles,
                                   const DesignParams& design);

// Total stored elastic energy 1/2 k sum_j dl_j^2.
double stored_energy(const Eigen::VectorXd& joint_angles,
                     const DesignParams& design);

// True iff all slacks are nonnegative and at least one tendon is taut,
// both within tol. Implemented as the min-element test.
bool constraints_satisfied(const Eigen::VectorXd& slack, double tol);

// Negative squared distance to the goal, plus the completion bonus when the
// end effector is within bonus_threshold of it.
double reward(const Eigen::Vector2d& ee, const TaskSpec& task);

// Checks joint limits and that the cached ee position matches the
// kinematics of joint_angles to 1e-9 m. Throws std::invalid_argument.
void validate_state(const ChainState& state, const DesignParams& design);

}  // namespace tendonopt
