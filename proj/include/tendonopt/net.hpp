#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace tendonopt {

enum class Activation { tanh_fn, relu };

// Small feedforward network with identity output layer. Plain value type:
// updates produce new parameter sets, never mutate in place.
struct Network {
  std::vector<int> layer_sizes;  // input, hidden..., output
  std::vector<Eigen::MatrixXd> weights;  // [l]: out x in
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::tanh_fn;
  std::uint64_t seed = 0;

  static Network xavier(const std::vector<int>& sizes, Activation act,
                        std::uint64_t seed);

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t num_params() const;
  bool finite() const;
};

// Activation cache from one forward pass; required for the backward pass.
struct Tape {
  std::vector<int> layer_sizes;       // of the network that produced it
  Eigen::MatrixXd input;              // in x batch
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
  std::vector<Eigen::MatrixXd> post;  // post-activations (post.back() = output)
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const Network& net);
  void accumulate(const Gradients& other);
  void scale(double s);
  double squared_norm() const;
  bool finite() const;
};

// Columns are batch samples. Pass a tape to enable net_backward.
Eigen::MatrixXd net_forward(const Network& net, const Eigen::MatrixXd& input,
                            Tape* tape = nullptr);
Eigen::VectorXd net_forward_vec(const Network& net, const Eigen::VectorXd& input,
                                Tape* tape = nullptr);

struct BackwardResult {
  Gradients params;
  Eigen::MatrixXd input_grad;
};

// Exact reverse-mode gradients of <output_grad, output> summed over the
// batch. The tape must come from a forward pass of the same network shape.
BackwardResult net_backward(const Network& net, const Tape& tape,
                            const Eigen::MatrixXd& output_grad);

// Adam optimizer state (beta1=0.9, beta2=0.999, eps=1e-8). Throws
// TrainingDivergenceError on non-finite gradients.
class Adam {
 public:
  Adam() = default;
  Network update(const Network& net, const Gradients& grads, double lr);
  int step_count() const { return t_; }

 private:
  Gradients m_, v_;
  bool initialized_ = false;
  int t_ = 0;
};

// Max relative error between analytic parameter/input gradients and central
// finite differences with step h, for the scalar <output_grad, output>.
double finite_difference_check(const Network& net, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& output_grad,
                               double h = 1e-5);

}  // namespace tendonopt
