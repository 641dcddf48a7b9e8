#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/gibbs.hpp"
#include "macrotex/sampler.hpp"

namespace macrotex {

// Parameter domain for the dual iterate.
struct ThetaDomain {
  enum class Kind { Unbounded, Ball } kind = Kind::Unbounded;
  double radius = 0.0;

  static ThetaDomain unbounded() { return {Kind::Unbounded, 0.0}; }
  static ThetaDomain ball(double r) {
    if (r <= 0.0) throw std::invalid_argument("ThetaDomain: radius must be > 0");
    return {Kind::Ball, r};
  }
};

// P_Theta: identity on the unbounded domain, radial projection onto the
// Euclidean ball otherwise.
inline std::vector<double> project_theta(std::vector<double> theta,
                                         const ThetaDomain& domain) {
  if (domain.kind == ThetaDomain::Kind::Unbounded) return theta;
  double norm_sq = 0.0;
  for (double t : theta) norm_sq += t * t;
  const double norm = std::sqrt(norm_sq);
  if (norm > domain.radius) {
    const double scale = domain.radius / norm;
    for (double& t : theta) t *= scale;
  }
  return theta;
}

// theta' = P_Theta[theta + delta * (batch_avg - target)].
inline std::vector<double> theta_update(const std::vector<double>& theta,
                                        double delta,
                                        const FeatureVector& batch_avg,
                                        const FeatureVector& target,
                                        const ThetaDomain& domain) {
  if (theta.size() != batch_avg.size() || theta.size() != target.size())
    throw std::invalid_argument("theta_update: dimension mismatch");
  if (!std::isfinite(delta))
    throw numeric_error("theta_update: non-finite delta");
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = batch_avg[i] - target[i];
    if (!std::isfinite(g)) throw numeric_error("theta_update: non-finite gradient");
    out[i] = theta[i] + delta * g;
  }
  return project_theta(std::move(out), domain);
}

enum class ThetaAverage { LastIterate, RunningAverage };

struct SoulConfig {
  StepSchedule schedule;
  int outer_iterations = 0;
  ThetaDomain domain = ThetaDomain::unbounded();
  std::vector<double> theta0;  // empty = zero vector
  ThetaAverage averaging = ThetaAverage::LastIterate;
};

struct SoulIterRecord {
  int iteration = 0;
  std::vector<double> theta;
  double residual_norm = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  int m = 0;
  bool diverged = false;
  double seconds = 0.0;
};

struct SoulTrace {
  std::vector<SoulIterRecord> records;
  bool diverged = false;
};

struct SoulResult {
  std::vector<double> theta_hat;
  Image final_image;
  SoulTrace trace;
  bool diverged = false;
  // Ergodic average of f over every inner state visited during the run.
  FeatureVector ergodic_mean;
};

// CSV export: iteration,theta_norm,residual_norm,gamma,delta,m,diverged,
// plus one column per theta component when p <= 64.
inline void write_trace_csv(const SoulTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("write_trace_csv: cannot open " + path);
  const int p = trace.records.empty() ? 0
                                      : static_cast<int>(trace.records[0].theta.size());
  const bool with_theta = p > 0 && p <= 64;
  out << "iteration,theta_norm,residual_norm,gamma,delta,m,diverged";
  if (with_theta)
    for (int i = 0; i < p; ++i) out << ",theta" << i;
  out << "\n";
  out.precision(17);
  for (const auto& r : trace.records) {
    double norm_sq = 0.0;
    for (double t : r.theta) norm_sq += t * t;
    out << r.iteration << "," << std::sqrt(norm_sq) << "," << r.residual_norm
        << "," << r.gamma << "," << r.delta << "," << r.m << ","
        << (r.diverged ? 1 : 0);
    if (with_theta)
      for (double t : r.theta) out << "," << t;
    out << "\n";
  }
}

// The coupled recursion: for each outer iteration n >= 1, run m_n inner
// Langevin steps at gamma_n warm-started from the previous chain state,
// then move theta by delta_n times the batch feature residual.
inline SoulResult run_soul(const SoulConfig& config, const GibbsModel& model,
                           const Image& init, RandomStream& stream) {
  const int p = model.p();
  GibbsModel work = model;
  work.theta = config.theta0.empty() ? std::vector<double>(p, 0.0) : config.theta0;
  if (static_cast<int>(work.theta.size()) != p)
    throw std::invalid_argument("run_soul: |theta0| != p");

  SoulResult result;
  ChainState state(init);
  state.reset_batch(p);

  std::vector<double> theta_running(p, 0.0);
  FeatureVector global_sum(p, 0.0);
  long long global_count = 0;

  for (int n = 1; n <= config.outer_iterations; ++n) {
    const auto t_start = std::chrono::steady_clock::now();
    const double gamma = config.schedule.gamma_at(n);
    const double delta = config.schedule.delta_at(n);
    const int m = config.schedule.inner_at(n);

    FeatureVector batch_avg = run_chain(work, state, m, gamma, stream);

    SoulIterRecord rec;
    rec.iteration = n;
    rec.gamma = gamma;
    rec.delta = delta;
    rec.m = m;
    rec.diverged = state.diverged;

    if (!state.diverged) {
      for (int i = 0; i < p; ++i)
        global_sum[i] += state.feature_sum[i];
      global_count += state.feature_count;

      double res_sq = 0.0;
      for (int i = 0; i < p; ++i) {
        const double r = batch_avg[i] - work.target[i];
        res_sq += r * r;
      }
      rec.residual_norm = std::sqrt(res_sq);
      work.theta = theta_update(work.theta, delta, batch_avg, work.target,
                                config.domain);
      // an overflowing dual iterate is a divergence, not a usage error
      for (double t : work.theta)
        if (!std::isfinite(t)) rec.diverged = true;
      if (!rec.diverged)
        for (int i = 0; i < p; ++i) theta_running[i] += work.theta[i];
    }
    rec.theta = work.theta;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                t_start)
                      .count();
    const bool stop = state.diverged || rec.diverged;
    result.trace.records.push_back(std::move(rec));
    if (stop) {
      result.trace.diverged = true;
      break;
    }
  }

  result.diverged = result.trace.diverged;
  const auto completed = static_cast<double>(result.trace.records.size());
  if (config.averaging == ThetaAverage::RunningAverage && completed > 0 &&
      !result.diverged) {
    result.theta_hat.resize(p);
    for (int i = 0; i < p; ++i) result.theta_hat[i] = theta_running[i] / completed;
  } else {
    result.theta_hat = work.theta;
  }
  result.final_image = std::move(state.x);
  result.ergodic_mean.assign(p, 0.0);
  if (global_count > 0)
    for (int i = 0; i < p; ++i)
      result.ergodic_mean[i] = global_sum[i] / static_cast<double>(global_count);
  return result;
}

}  // namespace macrotex
