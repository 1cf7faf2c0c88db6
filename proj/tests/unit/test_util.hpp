#pragma once

#include <random>

#include "tendonopt/chain.hpp"

namespace tendonopt::test {

// One joint, one tendon.
inline DesignParams scalar_design(double flexion_r = 0.005, double winch_r = 0.01) {
  DesignParams d;
  d.flexion_radii = Eigen::MatrixXd::Constant(1, 1, flexion_r);
  d.winch_radii = Eigen::VectorXd::Constant(1, winch_r);
  d.pretension = Eigen::VectorXd::Zero(1);
  d.link_lengths = Eigen::VectorXd::Constant(1, 0.8);
  return d;
}

// Two equal-radius joints on a single tendon.
inline DesignParams two_joint_design(double flexion_r = 0.005,
                                     double winch_r = 0.01) {
  DesignParams d;
  d.flexion_radii = Eigen::MatrixXd::Constant(1, 2, flexion_r);
  d.winch_radii = Eigen::VectorXd::Constant(1, winch_r);
  d.pretension = Eigen::VectorXd::Zero(2);
  d.link_lengths = Eigen::VectorXd::Constant(2, 0.8);
  return d;
}

// Random three-joint, two-tendon design with radii and pretension inside
// the hardware search box.
inline DesignParams random_design(std::mt19937_64& rng, bool with_pretension = true) {
  std::uniform_real_distribution<double> radius(0.002, 0.03);
  std::uniform_real_distribution<double> pre(0.0, 0.02);
  DesignParams d = DesignParams::initial();
  for (int i = 0; i < d.flexion_radii.rows(); ++i)
    for (int j = 0; j < d.flexion_radii.cols(); ++j)
      d.flexion_radii(i, j) = radius(rng);
  if (with_pretension)
    for (int j = 0; j < d.pretension.size(); ++j) d.pretension[j] = pre(rng);
  return d;
}

}  // namespace tendonopt::test
