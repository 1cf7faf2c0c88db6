#include "tendonopt/cma.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tendonopt/errors.hpp"
#include "tendonopt/parallel.hpp"

namespace tendonopt {

void CmaConfig::validate(int dims) const {
  if (dims < 1) throw std::invalid_argument("cma: dimension must be >= 1");
  if (population_size != 0 && population_size < 4)
    throw std::invalid_argument("cma: population_size must be >= 4");
  if (!(initial_sigma > 0.0))
    throw std::invalid_argument("cma: initial_sigma must be > 0");
  if (max_evals < 1) throw std::invalid_argument("cma: max_evals must be >= 1");
  if (lower.size() != dims || upper.size() != dims)
    throw std::invalid_argument("cma: bounds must match the dimension");
  for (int i = 0; i < dims; ++i)
    if (!(lower[i] < upper[i]))
      throw std::invalid_argument("cma: bounds must satisfy lower < upper");
}

std::string CmaResult::history_csv() const {
  std::ostringstream os;
  os << "generation,best_f,mean_f,sigma\n";
  char buf[64];
  for (const auto& g : history) {
    os << g.generation << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", g.best_f);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", g.mean_f);
    os << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", g.sigma);
    os << buf << "\n";
  }
  return os.str();
}

CmaResult cmaes_minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                         const Eigen::VectorXd& x0, const CmaConfig& cfg) {
  const int n = static_cast<int>(x0.size());
  cfg.validate(n);
  for (int i = 0; i < n; ++i)
    if (x0[i] < cfg.lower[i] || x0[i] > cfg.upper[i])
      throw std::invalid_argument("cma: x0 must lie within bounds");

  const Eigen::VectorXd width = cfg.upper - cfg.lower;
  auto to_x = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    return cfg.lower + width.cwiseProduct(y);
  };

  auto eval_raw = [&](const Eigen::VectorXd& x) {
    const double f = objective(x);
    if (!std::isfinite(f)) {
      std::ostringstream os;
      os << "cma: objective returned non-finite value at candidate [";
      for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
      os << "]";
      throw OptimizerAbortError(os.str());
    }
    return f;
  };

  const int lambda =
      cfg.population_size > 0
          ? cfg.population_size
          : 4 + static_cast<int>(std::floor(3.0 * std::log(n)));
  const int mu = lambda / 2;

  Eigen::VectorXd weights(mu);
  for (int i = 0; i < mu; ++i)
    weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
  weights /= weights.sum();
  const double mu_eff = 1.0 / weights.squaredNorm();

  const double c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
  const double d_sigma =
      1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) +
      c_sigma;
  const double c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
  const double c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
  const double c_mu =
      std::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                              ((n + 2.0) * (n + 2.0) + mu_eff));
  const double chi_n =
      std::sqrt(static_cast<double>(n)) *
      (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::VectorXd mean = (x0 - cfg.lower).cwiseQuotient(width);
  double sigma = cfg.initial_sigma;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd p_sigma = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd p_c = Eigen::VectorXd::Zero(n);

  CmaResult result;
  result.best_x = x0;
  result.best_f = eval_raw(x0);
  result.evaluations = 1;
  const bool has_target = std::isfinite(cfg.target_fitness);
  if (has_target && result.best_f <= cfg.target_fitness) {
    result.converged = true;
    return result;
  }

  struct Candidate {
    Eigen::VectorXd z;       // base normal draw
    Eigen::VectorXd y;       // clipped point in box coordinates
    Eigen::VectorXd y_step;  // (y - mean)/sigma used for adaptation
    double raw_f = 0.0;
    double selection_f = 0.0;
  };

  int generation = 0;
  while (result.evaluations < cfg.max_evals) {
    ++generation;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd eigvals = eig.eigenvalues().cwiseMax(1e-20);
    const Eigen::MatrixXd basis = eig.eigenvectors();
    const Eigen::VectorXd scale = eigvals.cwiseSqrt();
    Eigen::MatrixXd cov_inv_sqrt =
        basis * scale.cwiseInverse().asDiagonal() * basis.transpose();

    // Draw all candidates up front so random draws are indexed per
    // candidate; evaluations may then run in any order.
    std::vector<Candidate> pop(lambda);
    std::vector<double> clip_sq(lambda, 0.0);
    for (int k = 0; k < lambda; ++k) {
      Candidate& cand = pop[k];
      Eigen::VectorXd y_raw;
      bool inside = false;
      for (int attempt = 0; attempt < 10 && !inside; ++attempt) {
        Eigen::VectorXd z(n);
        for (int i = 0; i < n; ++i) z[i] = gauss(rng);
        cand.z = z;
        y_raw = mean + sigma * (basis * (scale.cwiseProduct(z)));
        inside = (y_raw.array() >= 0.0).all() && (y_raw.array() <= 1.0).all();
      }
      cand.y = y_raw.cwiseMax(0.0).cwiseMin(1.0);
      cand.y_step = (cand.y - mean) / sigma;
      clip_sq[k] = (y_raw - cand.y).squaredNorm();
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    const int workers =
        cfg.parallel_objective ? configured_threads() : 1;
    parallel_chunks(static_cast<std::size_t>(lambda), workers,
                    [&](std::size_t begin, std::size_t end, int) {
                      for (std::size_t k = begin; k < end; ++k) {
                        try {
                          pop[k].raw_f = eval_raw(to_x(pop[k].y));
                        } catch (...) {
                          std::lock_guard<std::mutex> lock(failure_mutex);
                          if (!failure) failure = std::current_exception();
                        }
                      }
                    });
    if (failure) std::rethrow_exception(failure);
    result.evaluations += lambda;
    for (int k = 0; k < lambda; ++k) {
      pop[k].selection_f =
          pop[k].raw_f +
          clip_sq[k] * 1e6 * std::max(1.0, std::abs(pop[k].raw_f));
    }

    std::vector<int> order(lambda);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return pop[a].selection_f < pop[b].selection_f;
    });

    double gen_best = std::numeric_limits<double>::infinity();
    double gen_sum = 0.0;
    for (const auto& cand : pop) {
      gen_best = std::min(gen_best, cand.raw_f);
      gen_sum += cand.raw_f;
    }
    const Candidate& top = pop[order[0]];
    if (top.raw_f < result.best_f) {
      result.best_f = top.raw_f;
      result.best_x = to_x(top.y);
    }
    result.history.push_back(
        {generation, gen_best, gen_sum / lambda, sigma});

    if (has_target && result.best_f <= cfg.target_fitness) {
      result.converged = true;
      break;
    }

    // recombination
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < mu; ++i) step += weights[i] * pop[order[i]].y_step;
    mean += sigma * step;

    // step-size adaptation
    p_sigma = (1.0 - c_sigma) * p_sigma +
              std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) *
                  (cov_inv_sqrt * step);
    const double ps_norm = p_sigma.norm();
    sigma *= std::exp((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0));

    const double hsig_thresh =
        (1.4 + 2.0 / (n + 1.0)) * chi_n *
        std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * generation));
    const double hsig = ps_norm < hsig_thresh ? 1.0 : 0.0;

    // covariance adaptation
    p_c = (1.0 - c_c) * p_c +
          hsig * std::sqrt(c_c * (2.0 - c_c) * mu_eff) * step;
    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) {
      const Eigen::VectorXd& d = pop[order[i]].y_step;
      rank_mu += weights[i] * d * d.transpose();
    }
    cov = (1.0 - c_1 - c_mu) * cov +
          c_1 * (p_c * p_c.transpose() +
                 (1.0 - hsig) * c_c * (2.0 - c_c) * cov) +
          c_mu * rank_mu;
    cov = 0.5 * (cov + cov.transpose());

    if (sigma * scale.maxCoeff() < 1e-16) break;  // fully collapsed
  }
  return result;
}

}  // namespace tendonopt
