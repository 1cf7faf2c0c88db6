#include "tendonopt/net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "tendonopt/errors.hpp"

namespace tendonopt {

namespace {

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::tanh_fn) return z.array().tanh();
  return z.cwiseMax(0.0);
}

Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::tanh_fn) {
    return 1.0 - z.array().tanh().square();
  }
  return (z.array() > 0.0).cast<double>();
}

}  // namespace

Network Network::xavier(const std::vector<int>& sizes, Activation act,
                        std::uint64_t seed) {
  if (sizes.size() < 2)
    throw std::invalid_argument("network: need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("network: layer sizes must be >= 1");

  Network net;
  net.layer_sizes = sizes;
  net.activation = act;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return net;
}

std::size_t Network::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size()) + biases[l].size();
  return n;
}

bool Network::finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                              net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
}

void Gradients::scale(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
}

double Gradients::squared_norm() const {
  double n = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].squaredNorm() + biases[l].squaredNorm();
  return n;
}

bool Gradients::finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

Eigen::MatrixXd net_forward(const Network& net, const Eigen::MatrixXd& input,
                            Tape* tape) {
  if (input.rows() != net.input_size())
    throw std::invalid_argument("net_forward: input rows must equal input size");
  if (tape) {
    tape->layer_sizes = net.layer_sizes;
    tape->input = input;
    tape->pre.clear();
    tape->post.clear();
  }
  Eigen::MatrixXd x = input;
  const int layers = net.num_layers();
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (net.weights[l] * x).colwise() + net.biases[l];
    Eigen::MatrixXd a =
        (l + 1 == layers) ? z : apply_activation(z, net.activation);
    if (tape) {
      tape->pre.push_back(z);
      tape->post.push_back(a);
    }
    x = std::move(a);
  }
  return x;
}

Eigen::VectorXd net_forward_vec(const Network& net, const Eigen::VectorXd& input,
                                Tape* tape) {
  return net_forward(net, Eigen::MatrixXd(input), tape).col(0);
}

BackwardResult net_backward(const Network& net, const Tape& tape,
                            const Eigen::MatrixXd& output_grad) {
  if (tape.layer_sizes != net.layer_sizes ||
      tape.pre.size() != static_cast<std::size_t>(net.num_layers()))
    throw std::invalid_argument(
        "net_backward: tape does not match this network");
  if (output_grad.rows() != net.output_size() ||
      output_grad.cols() != tape.input.cols())
    throw std::invalid_argument("net_backward: output_grad shape mismatch");

  BackwardResult res;
  res.params = Gradients::zeros_like(net);
  const int layers = net.num_layers();
  Eigen::MatrixXd delta = output_grad;  // output layer is identity
  for (int l = layers - 1; l >= 0; --l) {
    if (l != layers - 1)
      delta = delta.cwiseProduct(activation_derivative(tape.pre[l], net.activation));
    const Eigen::MatrixXd& below = (l == 0) ? tape.input : tape.post[l - 1];
    res.params.weights[l] = delta * below.transpose();
    res.params.biases[l] = delta.rowwise().sum();
    delta = (net.weights[l].transpose() * delta).eval();
  }
  res.input_grad = delta;
  return res;
}

Network Adam::update(const Network& net, const Gradients& grads, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be > 0");
  if (grads.weights.size() != net.weights.size())
    throw std::invalid_argument("adam: gradient shape mismatch");
  if (!grads.finite())
    throw TrainingDivergenceError("adam: non-finite gradients");

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  if (!initialized_) {
    m_ = Gradients::zeros_like(net);
    v_ = Gradients::zeros_like(net);
    initialized_ = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, t_);
  const double bc2 = 1.0 - std::pow(beta2, t_);

  Network out = net;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    m_.weights[l] = beta1 * m_.weights[l] + (1.0 - beta1) * grads.weights[l];
    v_.weights[l] = beta2 * v_.weights[l].array().matrix() +
                    (1.0 - beta2) * grads.weights[l].array().square().matrix();
    m_.biases[l] = beta1 * m_.biases[l] + (1.0 - beta1) * grads.biases[l];
    v_.biases[l] = beta2 * v_.biases[l].array().matrix() +
                   (1.0 - beta2) * grads.biases[l].array().square().matrix();

    out.weights[l] -=
        (lr * (m_.weights[l] / bc1).array() /
         ((v_.weights[l] / bc2).array().sqrt() + eps))
            .matrix();
    out.biases[l] -= (lr * (m_.biases[l] / bc1).array() /
                      ((v_.biases[l] / bc2).array().sqrt() + eps))
                         .matrix();
  }
  if (!out.finite())
    throw TrainingDivergenceError("adam: parameters diverged to non-finite values");
  return out;
}

double finite_difference_check(const Network& net, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& output_grad, double h) {
  Tape tape;
  net_forward_vec(net, input, &tape);
  const BackwardResult analytic = net_backward(net, tape, output_grad);

  auto scalar = [&](const Network& n, const Eigen::VectorXd& x) {
    return output_grad.dot(net_forward_vec(n, x));
  };

  double max_rel = 0.0;
  auto compare = [&](double numeric, double exact) {
    const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
    max_rel = std::max(max_rel, std::abs(numeric - exact) / denom);
  };

  Network probe = net;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (int r = 0; r < net.weights[l].rows(); ++r) {
      for (int c = 0; c < net.weights[l].cols(); ++c) {
        const double saved = probe.weights[l](r, c);
        probe.weights[l](r, c) = saved + h;
        const double fp = scalar(probe, input);
        probe.weights[l](r, c) = saved - h;
        const double fm = scalar(probe, input);
        probe.weights[l](r, c) = saved;
        compare((fp - fm) / (2.0 * h), analytic.params.weights[l](r, c));
      }
    }
    for (int r = 0; r < net.biases[l].size(); ++r) {
      const double saved = probe.biases[l][r];
      probe.biases[l][r] = saved + h;
      const double fp = scalar(probe, input);
      probe.biases[l][r] = saved - h;
      const double fm = scalar(probe, input);
      probe.biases[l][r] = saved;
      compare((fp - fm) / (2.0 * h), analytic.params.biases[l][r]);
    }
  }
  Eigen::VectorXd xprobe = input;
  for (int i = 0; i < input.size(); ++i) {
    const double saved = xprobe[i];
    xprobe[i] = saved + h;
    const double fp = scalar(net, xprobe);
    xprobe[i] = saved - h;
    const double fm = scalar(net, xprobe);
    xprobe[i] = saved;
    compare((fp - fm) / (2.0 * h), analytic.input_grad(i, 0));
  }
  return max_rel;
}

}  // namespace tendonopt
