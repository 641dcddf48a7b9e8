// Test-only finite-difference oracle for feature gradients, independent of
// the adjoint implementation path.
#pragma once

#include <cmath>
#include <vector>

#include "macrotex/features.hpp"
#include "macrotex/image.hpp"

namespace macrotex::testing {

inline double weighted_features(const FeatureMapSpec& spec, const Image& x,
                                const std::vector<double>& theta) {
  FeatureVector f = eval_features(spec, x);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += theta[i] * f[i];
  return s;
}

// Central differences of <theta, f(.)> pixel by pixel.
inline Image fd_weighted_gradient(const FeatureMapSpec& spec, const Image& x,
                                  const std::vector<double>& theta,
                                  double h = 1e-4) {
  Image grad(x.height, x.width, x.channels);
  Image probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    probe.data[i] = x.data[i] + h;
    const double up = weighted_features(spec, probe, theta);
    probe.data[i] = x.data[i] - h;
    const double dn = weighted_features(spec, probe, theta);
    probe.data[i] = x.data[i];
    grad.data[i] = (up - dn) / (2.0 * h);
  }
  return grad;
}

// ||a - b|| / max(||b||, floor)
inline double relative_gradient_error(const Image& a, const Image& b) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    diff += d * d;
    norm += b.data[i] * b.data[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

}  // namespace macrotex::testing
