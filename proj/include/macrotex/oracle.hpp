#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "macrotex/errors.hpp"

namespace macrotex {

// Scalar feature on R^d (d <= 3) with certified polynomial growth, so that
// integrability against exp(-eps ||x||^2) is a fact, not an assumption.
struct OracleFeature {
  std::string name;
  std::function<double(const std::array<double, 3>&)> eval;
  int degree = 0;  // total polynomial growth degree
};

inline OracleFeature monomial(const std::vector<int>& exponents) {
  std::string name = "x";
  for (int e : exponents) name += "^" + std::to_string(e);
  int degree = std::accumulate(exponents.begin(), exponents.end(), 0);
  auto exps = exponents;
  return {name,
          [exps](const std::array<double, 3>& x) {
            double v = 1.0;
            for (std::size_t j = 0; j < exps.size(); ++j)
              v *= std::pow(x[j], exps[j]);
            return v;
          },
          degree};
}

// coordinate x_j as a feature
inline OracleFeature coordinate(int j = 0) {
  return {"x" + std::to_string(j),
          [j](const std::array<double, 3>& x) { return x[j]; }, 1};
}

// Low-dimensional exponential-family model whose lambda-integrals are
// evaluated by deterministic Simpson quadrature on [-L, L]^d.
struct LowDimModel {
  int d = 1;
  std::vector<OracleFeature> features;
  std::vector<double> target;  // f(x0)
  double epsilon = 1.0;
  double half_width = 0.0;     // L
  int points_per_axis = 0;     // K, odd

  int p() const { return static_cast<int>(features.size()); }
};

inline LowDimModel make_low_dim_model(int d, std::vector<OracleFeature> features,
                                      std::vector<double> target, double epsilon,
                                      double half_width = 0.0,
                                      int points_per_axis = 0) {
  if (d < 1 || d > 3)
    throw std::invalid_argument("make_low_dim_model: d must be 1, 2, or 3");
  if (features.size() != target.size())
    throw std::invalid_argument("make_low_dim_model: |features| != |target|");
  if (epsilon <= 0.0)
    throw std::invalid_argument("make_low_dim_model: epsilon must be > 0");
  LowDimModel m;
  m.d = d;
  m.features = std::move(features);
  m.target = std::move(target);
  m.epsilon = epsilon;
  m.half_width = half_width > 0.0 ? half_width : 12.0 / std::sqrt(epsilon);
  if (points_per_axis > 0)
    m.points_per_axis = points_per_axis;
  else
    m.points_per_axis = d == 1 ? 2049 : (d == 2 ? 257 : 65);
  if (m.points_per_axis % 2 == 0) ++m.points_per_axis;  // Simpson needs odd K
  // Recorded truncation bound: the Gaussian tail outside the box must be
  // negligible relative to the bulk.
  if (std::exp(-m.epsilon * m.half_width * m.half_width) >= 1e-12)
    throw precision_error("make_low_dim_model: tail bound exp(-eps L^2) >= 1e-12");
  return m;
}

namespace detail {

// Visits every tensor-product Simpson node with its log-weight.
template <typename Fn>
void for_each_node(const LowDimModel& m, Fn&& fn) {
  const int K = m.points_per_axis;
  const double h = 2.0 * m.half_width / (K - 1);
  const double log_h3 = std::log(h / 3.0);
  auto axis_logw = [&](int i) {
    const double w = (i == 0 || i == K - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    return log_h3 + std::log(w);
  };
  std::array<double, 3> x{0.0, 0.0, 0.0};
  std::array<int, 3> idx{0, 0, 0};
  const int k1 = K, k2 = m.d >= 2 ? K : 1, k3 = m.d >= 3 ? K : 1;
  for (idx[0] = 0; idx[0] < k1; ++idx[0]) {
    x[0] = -m.half_width + h * idx[0];
    double lw0 = axis_logw(idx[0]);
    for (idx[1] = 0; idx[1] < k2; ++idx[1]) {
      double lw1 = lw0;
      if (m.d >= 2) {
        x[1] = -m.half_width + h * idx[1];
        lw1 += axis_logw(idx[1]);
      }
      for (idx[2] = 0; idx[2] < k3; ++idx[2]) {
        double lw = lw1;
        if (m.d >= 3) {
          x[2] = -m.half_width + h * idx[2];
          lw += axis_logw(idx[2]);
        }
        fn(x, lw);
      }
    }
  }
}

// log integrand of Z at a node: -<theta, f(x) - target> - eps ||x||^2.
inline double log_density_unnorm(const LowDimModel& m,
                                 const std::vector<double>& theta,
                                 const std::array<double, 3>& x) {
  double g = 0.0;
  for (int i = 0; i < m.p(); ++i)
    g -= theta[i] * (m.features[i].eval(x) - m.target[i]);
  double nsq = 0.0;
  for (int j = 0; j < m.d; ++j) nsq += x[j] * x[j];
  return g - m.epsilon * nsq;
}

}  // namespace detail

// log Z(theta) by log-sum-exp over the Simpson nodes.
inline double log_partition(const LowDimModel& model,
                            const std::vector<double>& theta) {
  if (static_cast<int>(theta.size()) != model.p())
    throw std::invalid_argument("log_partition: |theta| != p");
  for (double t : theta)
    if (!std::isfinite(t)) throw std::invalid_argument("log_partition: non-finite theta");
  double max_term = -std::numeric_limits<double>::infinity();
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    max_term = std::max(max_term, lw + detail::log_density_unnorm(model, theta, x));
  });
  double sum = 0.0;
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    sum += std::exp(lw + detail::log_density_unnorm(model, theta, x) - max_term);
  });
  return max_term + std::log(sum);
}

struct Moments {
  std::vector<double> mean;        // Pi_theta(f)
  Eigen::MatrixXd covariance;      // Cov_theta(f), symmetric
};

// Quadrature expectations of f and its covariance under Pi_theta.
inline Moments moments(const LowDimModel& model, const std::vector<double>& theta) {
  const int p = model.p();
  if (static_cast<int>(theta.size()) != p)
    throw std::invalid_argument("moments: |theta| != p");
  double max_term = -std::numeric_limits<double>::infinity();
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    max_term = std::max(max_term, lw + detail::log_density_unnorm(model, theta, x));
  });
  double mass = 0.0;
  std::vector<double> first(p, 0.0);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(p, p);
  std::vector<double> fx(p);
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    const double w = std::exp(lw + detail::log_density_unnorm(model, theta, x) - max_term);
    mass += w;
    for (int i = 0; i < p; ++i) fx[i] = model.features[i].eval(x);
    for (int i = 0; i < p; ++i) {
      first[i] += w * fx[i];
      for (int j = i; j < p; ++j) second(i, j) += w * fx[i] * fx[j];
    }
  });
  Moments out;
  out.mean.resize(p);
  out.covariance.resize(p, p);
  for (int i = 0; i < p; ++i) out.mean[i] = first[i] / mass;
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) {
      const double c = second(i, j) / mass - out.mean[i] * out.mean[j];
      out.covariance(i, j) = c;
      out.covariance(j, i) = c;
    }
  return out;
}

struct EntropyReport {
  double entropy = 0.0;   // H_J(Pi_theta)
  double kl = 0.0;        // KL(Pi_theta | Pi_J)
  double log_zj = 0.0;    // log Z_J
};

// Direct quadrature of the defining integrals of H_J and KL; the identity
// H_J = -KL + log Z_J is a consequence, not an input.
inline EntropyReport entropy_and_kl(const LowDimModel& model,
                                    const std::vector<double>& theta) {
  const double log_z = log_partition(model, theta);
  // log Z_J by the same quadrature with theta = 0 contributions removed.
  double max_j = -std::numeric_limits<double>::infinity();
  auto log_j = [&](const std::array<double, 3>& x) {
    double nsq = 0.0;
    for (int j = 0; j < model.d; ++j) nsq += x[j] * x[j];
    return -model.epsilon * nsq;
  };
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    max_j = std::max(max_j, lw + log_j(x));
  });
  double sum_j = 0.0;
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    sum_j += std::exp(lw + log_j(x) - max_j);
  });
  const double log_zj = max_j + std::log(sum_j);

  // H_J = -int log(rho/J) rho,  KL = int log(rho / (J/Z_J)) rho,
  // with log(rho/J)(x) = -<theta, f(x) - target> - log Z.
  double h = 0.0, kl = 0.0;
  detail::for_each_node(model, [&](const std::array<double, 3>& x, double lw) {
    const double g = detail::log_density_unnorm(model, theta, x);
    const double rho_w = std::exp(lw + g - log_z);  // rho(x) * quad weight
    double dot = 0.0;
    for (int i = 0; i < model.p(); ++i)
      dot += theta[i] * (model.features[i].eval(x) - model.target[i]);
    const double log_rho_over_j = -dot - log_z;
    h -= log_rho_over_j * rho_w;
    kl += (log_rho_over_j + log_zj) * rho_w;
  });
  return {h, kl, log_zj};
}

// Newton minimization of log Z with step halving; at the minimizer the
// constraint Pi_theta(f) = f(x0) holds (the maximum-entropy first-order
// condition).
inline std::vector<double> solve_theta_star(const LowDimModel& model,
                                            int max_iterations = 100,
                                            double tol = 1e-10) {
  const int p = model.p();
  if (p > 3) throw std::invalid_argument("solve_theta_star: p must be <= 3");
  std::vector<double> theta(p, 0.0);
  double current = log_partition(model, theta);
  for (int it = 0; it < max_iterations; ++it) {
    Moments m = moments(model, theta);
    double err = 0.0;
    for (int i = 0; i < p; ++i)
      err = std::max(err, std::fabs(m.mean[i] - model.target[i]));
    if (err < tol) return theta;

    Eigen::VectorXd grad(p);  // grad log Z = target - Pi_theta(f)
    for (int i = 0; i < p; ++i) grad(i) = model.target[i] - m.mean[i];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m.covariance);
    if (!lu.isInvertible())
      throw numeric_error("solve_theta_star: degenerate model (singular covariance)");
    Eigen::VectorXd step = lu.solve(-grad);

    // Halve while log Z fails to decrease.
    double scale = 1.0;
    for (int halvings = 0; halvings <= 60; ++halvings) {
      std::vector<double> trial(theta);
      for (int i = 0; i < p; ++i) trial[i] += scale * step(i);
      const double value = log_partition(model, trial);
      if (value <= current + 1e-15 || halvings == 60) {
        theta = std::move(trial);
        current = value;
        break;
      }
      scale *= 0.5;
    }
  }
  // Final check at loop exhaustion.
  Moments m = moments(model, theta);
  for (int i = 0; i < p; ++i)
    if (std::fabs(m.mean[i] - model.target[i]) >= tol)
      throw numeric_error("solve_theta_star: Newton did not converge");
  return theta;
}

}  // namespace macrotex
