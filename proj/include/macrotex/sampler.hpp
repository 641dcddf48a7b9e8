#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/gibbs.hpp"
#include "macrotex/image.hpp"
#include "macrotex/random.hpp"

namespace macrotex {

// One step-size sequence: constant c, or the power family c * n^{-alpha}
// (monotone non-increasing for alpha >= 0). n is 1-based.
struct StepSequence {
  enum class Family { Constant, Power };
  Family family = Family::Constant;
  double c = 0.0;
  double alpha = 0.0;

  static StepSequence constant(double c) { return {Family::Constant, c, 0.0}; }
  static StepSequence power(double c, double alpha) {
    if (alpha < 0.0)
      throw std::invalid_argument("StepSequence: power family needs alpha >= 0");
    return {Family::Power, c, alpha};
  }

  double value(int n) const {
    if (n < 1) throw std::invalid_argument("StepSequence: n must be >= 1");
    return family == Family::Constant ? c : c * std::pow(static_cast<double>(n), -alpha);
  }
};

// The (delta_n, gamma_n, m_n) triple driving SOUL. delta may be zero,
// gamma must stay positive, m is integer-valued and at least 1.
struct StepSchedule {
  StepSequence delta;
  StepSequence gamma;
  StepSequence inner;  // m_n

  double delta_at(int n) const {
    double v = delta.value(n);
    if (v < 0.0) throw std::invalid_argument("StepSchedule: delta_n < 0");
    return v;
  }
  double gamma_at(int n) const {
    double v = gamma.value(n);
    if (v <= 0.0) throw std::invalid_argument("StepSchedule: gamma_n <= 0");
    return v;
  }
  int inner_at(int n) const {
    return std::max(1, static_cast<int>(std::floor(inner.value(n))));
  }
};

// Langevin chain state. The running feature sum accumulates f over the
// states counted into the current batch; reset_batch starts a new batch.
struct ChainState {
  Image x;
  long long total_steps = 0;
  FeatureVector feature_sum;
  int feature_count = 0;
  bool diverged = false;

  explicit ChainState(Image init) : x(std::move(init)) {}

  void reset_batch(int p) {
    feature_sum.assign(p, 0.0);
    feature_count = 0;
  }

  FeatureVector batch_average() const {
    FeatureVector avg(feature_sum);
    if (feature_count > 0)
      for (double& v : avg) v /= static_cast<double>(feature_count);
    return avg;
  }
};

// One unadjusted Langevin step:
//   x' = x - gamma * grad U(x) + sqrt(2 gamma) * z,  z ~ N(0, Id).
// f(x') is folded into the running batch sums. Non-finite values mark the
// state diverged instead of throwing, so callers can report status.
inline void ula_step(const GibbsModel& model, ChainState& state, double gamma,
                     RandomStream& stream) {
  if (state.diverged) throw state_error("ula_step: state already diverged");
  if (gamma <= 0.0) throw std::invalid_argument("ula_step: gamma must be > 0");
  if (state.feature_sum.empty()) state.reset_batch(model.p());

  Image grad(state.x.height, state.x.width, state.x.channels);
  bool finite = true;
  try {
    grad = potential_gradient(model, state.x);
  } catch (const numeric_error&) {
    finite = false;
  }
  const double noise_scale = std::sqrt(2.0 * gamma);
  for (std::size_t i = 0; i < state.x.data.size(); ++i) {
    // Noise is drawn even on the divergent path so the stream position
    // stays a pure function of the step count.
    const double z = stream.normal();
    if (finite) state.x.data[i] += -gamma * grad.data[i] + noise_scale * z;
  }
  ++state.total_steps;
  if (!finite || !state.x.finite()) {
    state.diverged = true;
    return;
  }

  FeatureVector f = eval_features(model.spec, state.x);
  for (double v : f)
    if (!std::isfinite(v)) {
      state.diverged = true;
      return;
    }
  for (std::size_t i = 0; i < f.size(); ++i) state.feature_sum[i] += f[i];
  ++state.feature_count;
}

// `steps` ULA steps at fixed gamma; returns the average of f over the
// visited states (no burn-in discard). Divergence stops early with the
// partial average preserved in the state.
inline FeatureVector run_chain(const GibbsModel& model, ChainState& state,
                               int steps, double gamma, RandomStream& stream) {
  if (steps < 1) throw std::invalid_argument("run_chain: steps must be >= 1");
  state.reset_batch(model.p());
  for (int k = 0; k < steps; ++k) {
    ula_step(model, state, gamma, stream);
    if (state.diverged) break;
  }
  return state.batch_average();
}

}  // namespace macrotex
