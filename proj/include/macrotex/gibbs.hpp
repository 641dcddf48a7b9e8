#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/features.hpp"
#include "macrotex/image.hpp"

namespace macrotex {

// Gibbs measure with density proportional to
//   exp(-<theta, f(x) - target>) * exp(-epsilon ||x||^2).
// The normalizer is never computed here; in image dimension only the
// potential and its gradient are needed.
struct GibbsModel {
  FeatureMapSpec spec;
  FeatureVector target;       // f(x0)
  std::vector<double> theta;  // length p
  double epsilon = 0.0;       // reference strength; 0 means flat reference
  int exemplar_height = 0, exemplar_width = 0, exemplar_channels = 1;

  int p() const { return static_cast<int>(target.size()); }
};

// U(x) = <theta, f(x) - target> + epsilon * ||x||^2.
inline double potential(const GibbsModel& model, const Image& x) {
  FeatureVector f = eval_features(model.spec, x);
  if (f.size() != model.target.size() || model.theta.size() != model.target.size())
    throw std::invalid_argument("potential: dimension mismatch");
  double u = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    u += model.theta[i] * (f[i] - model.target[i]);
  if (model.epsilon != 0.0) u += model.epsilon * squared_norm(x);
  if (!std::isfinite(u)) throw numeric_error("potential: non-finite (model diverged)");
  return u;
}

// grad U(x) = sum_i theta_i grad f_i(x) + 2 epsilon x.
inline Image potential_gradient(const GibbsModel& model, const Image& x) {
  Image g = eval_weighted_gradient(model.spec, x, model.theta);
  if (model.epsilon != 0.0) {
    const double two_eps = 2.0 * model.epsilon;
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += two_eps * x.data[i];
  }
  if (!g.finite())
    throw numeric_error("potential_gradient: non-finite (model diverged)");
  return g;
}

// -------------------------------------------- maximum-entropy precondition

enum class Verdict { Pass, Warn, Fail };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Warn: return "WARN";
    default: return "FAIL";
  }
}

struct ConditionReport {
  bool epsilon_positive = false;
  bool all_phi_sublinear = false;
  bool all_phi_c1 = false;
  int jacobian_rank_value = 0;
  bool full_row_rank = false;
  Verdict integrability = Verdict::Fail;
  Verdict rank_condition = Verdict::Fail;
  Verdict overall = Verdict::Fail;
  std::string message;

  std::string format() const {
    std::ostringstream os;
    os << "integrability: " << to_string(integrability)
       << " (epsilon " << (epsilon_positive ? "> 0" : "= 0")
       << ", sub-linear phi: " << (all_phi_sublinear ? "yes" : "no")
       << ", C1 phi: " << (all_phi_c1 ? "yes" : "no") << ")\n"
       << "rank condition: " << to_string(rank_condition) << " (rank "
       << jacobian_rank_value << ", full row rank: "
       << (full_row_rank ? "yes" : "no") << ")\n"
       << "verdict: " << to_string(overall) << "\n";
    if (!message.empty()) os << message << "\n";
    return os.str();
  }
};

// Checks the hypotheses under which the maximum-entropy principle holds:
// integrability of the Gibbs density (epsilon > 0 with sub-linear phi) and
// full row rank of the feature Jacobian at the exemplar.
inline ConditionReport check_maxent_conditions(const GibbsModel& model,
                                               const Image& x0,
                                               double rank_tol = 1e-8) {
  ConditionReport rep;
  rep.epsilon_positive = model.epsilon > 0.0;
  rep.all_phi_sublinear = true;
  rep.all_phi_c1 = true;
  for (const auto& phi : spec_nonlinearities(model.spec)) {
    if (!(phi.sublinear_c > 0.0 && audit_sublinear(phi)))
      rep.all_phi_sublinear = false;
    if (!phi.continuously_differentiable) rep.all_phi_c1 = false;
  }

  if (rep.epsilon_positive && rep.all_phi_sublinear) {
    rep.integrability = Verdict::Pass;
  } else if (!rep.epsilon_positive) {
    rep.integrability = Verdict::Warn;
    rep.message +=
        "epsilon = 0: flat reference, outside the maximum-entropy guarantee; "
        "the algorithm may diverge for some images.";
  } else {
    rep.integrability = Verdict::Fail;
    rep.message += "a nonlinearity in the spec is not sub-linear.";
  }

  const int p = feature_count(model.spec, x0.channels);
  if (p <= static_cast<int>(x0.size())) {
    JacobianRank jr = jacobian_rank(model.spec, x0, rank_tol);
    rep.jacobian_rank_value = jr.rank;
    rep.full_row_rank = jr.full_row_rank;
    rep.rank_condition = jr.full_row_rank ? Verdict::Pass : Verdict::Fail;
  } else {
    rep.rank_condition = Verdict::Fail;
    rep.message += " p > d: rank condition cannot hold.";
  }

  if (rep.integrability == Verdict::Fail || rep.rank_condition == Verdict::Fail)
    rep.overall = Verdict::Fail;
  else if (rep.integrability == Verdict::Warn)
    rep.overall = Verdict::Warn;
  else
    rep.overall = Verdict::Pass;
  return rep;
}

}  // namespace macrotex
