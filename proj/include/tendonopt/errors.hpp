#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tendonopt {

// Motor command outside the achievable manifold: no joint configuration
// within the joint limits satisfies the slack constraints.
class InfeasibleCommandError : public std::runtime_error {
 public:
  explicit InfeasibleCommandError(const std::string& msg,
                                  std::vector<double> action = {})
      : std::runtime_error(msg), action_(std::move(action)) {}

  const std::vector<double>& action() const { return action_; }

 private:
  std::vector<double> action_;
};

class TrainingDivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a derivative-free optimizer hits a non-finite objective value.
class OptimizerAbortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tendonopt
