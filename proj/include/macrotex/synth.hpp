#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/fft.hpp"
#include "macrotex/gibbs.hpp"
#include "macrotex/image.hpp"
#include "macrotex/random.hpp"
#include "macrotex/soul.hpp"

namespace macrotex {

// ------------------------------------------------- Gaussian random field

// ADSN construction with an explicit noise field (one field shared by all
// channels, preserving cross-channel correlation):
//   t_c = (u_c - m_c on the support) / sqrt(H*W of the exemplar),
//   out_c = m_c + t_c (*) noise,  (*) = circular convolution.
// m_c is the exemplar mean over the ORIGINAL pixel count.
inline Image gaussian_field_init(const Image& exemplar, int out_height,
                                 int out_width, const Image& noise) {
  if (out_height < exemplar.height || out_width < exemplar.width)
    throw std::invalid_argument("gaussian_field_init: output smaller than exemplar");
  if (noise.height != out_height || noise.width != out_width || noise.channels != 1)
    throw std::invalid_argument("gaussian_field_init: noise shape mismatch");

  const double inv_n = 1.0 / (static_cast<double>(exemplar.height) * exemplar.width);
  const double texton_scale = std::sqrt(inv_n);
  Image out(out_height, out_width, exemplar.channels);
  std::vector<double> texton(static_cast<std::size_t>(out_height) * out_width);

  for (int c = 0; c < exemplar.channels; ++c) {
    double mean = 0.0;
    for (int y = 0; y < exemplar.height; ++y)
      for (int x = 0; x < exemplar.width; ++x) mean += exemplar.at(y, x, c);
    mean *= inv_n;

    std::fill(texton.begin(), texton.end(), 0.0);
    for (int y = 0; y < exemplar.height; ++y)
      for (int x = 0; x < exemplar.width; ++x)
        texton[static_cast<std::size_t>(y) * out_width + x] =
            (exemplar.at(y, x, c) - mean) * texton_scale;

    auto field = circular_convolve(texton, noise.data, out_height, out_width);
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x)
        out.at(y, x, c) = mean + field[static_cast<std::size_t>(y) * out_width + x];
  }
  return out;
}

inline Image gaussian_field_init(const Image& exemplar, int out_height,
                                 int out_width, RandomStream& stream) {
  Image noise = white_noise_image(out_height, out_width, 1, 0.0, 1.0, stream);
  return gaussian_field_init(exemplar, out_height, out_width, noise);
}

// ------------------------------------------- microcanonical baseline

struct MicrocanonicalResult {
  Image x;
  std::vector<double> residuals;  // ||f(x) - target||_2 before each step + final
  bool diverged = false;
};

// Plain gradient descent on x -> ||f(x) - target||^2; the gradient is the
// weighted feature gradient with theta = 2 (f(x) - target).
inline MicrocanonicalResult microcanonical_descent(const FeatureMapSpec& spec,
                                                   const FeatureVector& target,
                                                   Image init, int steps,
                                                   double eta) {
  if (steps < 0) throw std::invalid_argument("microcanonical_descent: steps < 0");
  if (eta <= 0.0) throw std::invalid_argument("microcanonical_descent: eta <= 0");
  MicrocanonicalResult result;
  result.x = std::move(init);

  auto residual_of = [&](const FeatureVector& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double r = f[i] - target[i];
      s += r * r;
    }
    return std::sqrt(s);
  };

  FeatureVector f = eval_features(spec, result.x);
  if (f.size() != target.size())
    throw std::invalid_argument("microcanonical_descent: dimension mismatch");
  result.residuals.push_back(residual_of(f));

  for (int k = 0; k < steps; ++k) {
    std::vector<double> theta(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) theta[i] = 2.0 * (f[i] - target[i]);
    Image grad = eval_weighted_gradient(spec, result.x, theta);
    for (std::size_t i = 0; i < result.x.data.size(); ++i)
      result.x.data[i] -= eta * grad.data[i];
    if (!result.x.finite()) {
      result.diverged = true;
      return result;
    }
    f = eval_features(spec, result.x);
    const double r = residual_of(f);
    if (!std::isfinite(r)) {
      result.diverged = true;
      return result;
    }
    result.residuals.push_back(r);
  }
  return result;
}

// --------------------------------------------------- histogram matching

// Rank-based quantile transfer, per channel. Each source pixel receives the
// reference quantile at its own rank; the sorted reference is resampled by
// linear interpolation when pixel counts differ, so equal sizes transfer the
// reference multiset exactly. Ties keep raster order (stable sort).
inline Image histogram_match(const Image& src, const Image& reference) {
  if (src.channels != reference.channels)
    throw std::invalid_argument("histogram_match: channel count mismatch");
  const std::size_t n_src = static_cast<std::size_t>(src.height) * src.width;
  const std::size_t n_ref = static_cast<std::size_t>(reference.height) * reference.width;
  Image out(src.height, src.width, src.channels);

  std::vector<std::size_t> order(n_src);
  std::vector<double> ref_sorted(n_ref);
  for (int c = 0; c < src.channels; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return src.data[a * src.channels + c] <
                              src.data[b * src.channels + c];
                     });
    for (std::size_t i = 0; i < n_ref; ++i)
      ref_sorted[i] = reference.data[i * reference.channels + c];
    std::sort(ref_sorted.begin(), ref_sorted.end());

    for (std::size_t rank = 0; rank < n_src; ++rank) {
      double value;
      if (n_src == n_ref) {
        value = ref_sorted[rank];
      } else if (n_src == 1) {
        value = ref_sorted[(n_ref - 1) / 2];
      } else {
        const double pos = static_cast<double>(rank) *
                           static_cast<double>(n_ref - 1) /
                           static_cast<double>(n_src - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n_ref - 1);
        const double frac = pos - static_cast<double>(lo);
        value = ref_sorted[lo] * (1.0 - frac) + ref_sorted[hi] * frac;
      }
      out.data[order[rank] * src.channels + c] = value;
    }
  }
  return out;
}

// ------------------------------------------------------ full pipeline

enum class InitMode { GaussianField, WhiteNoise };

struct SynthesisJob {
  Image exemplar;
  int out_height = 0, out_width = 0;
  FeatureMapSpec spec;
  double epsilon = 0.0;
  SoulConfig soul;
  bool histogram_matching = true;
  InitMode init_mode = InitMode::GaussianField;
  double white_noise_mean = 0.5, white_noise_std = 0.1;
  std::uint64_t seed = 0;
};

struct SynthesisResult {
  Image output;
  Image init;
  SoulTrace trace;
  ConditionReport report;
  FeatureVector target;
  bool diverged = false;
};

// exemplar statistics -> condition report -> initialization -> SOUL ->
// optional histogram match against the raw exemplar.
inline SynthesisResult synthesize(const SynthesisJob& job) {
  if (job.out_height < job.exemplar.height || job.out_width < job.exemplar.width)
    throw std::invalid_argument("synthesize: output shape smaller than exemplar");

  SynthesisResult result;
  result.target = eval_features(job.spec, job.exemplar);

  GibbsModel model;
  model.spec = job.spec;
  model.target = result.target;
  model.theta.assign(result.target.size(), 0.0);
  model.epsilon = job.epsilon;
  model.exemplar_height = job.exemplar.height;
  model.exemplar_width = job.exemplar.width;
  model.exemplar_channels = job.exemplar.channels;

  result.report = check_maxent_conditions(model, job.exemplar);

  RandomStream root(job.seed);
  RandomStream init_stream = root.substream(0);
  RandomStream chain_stream = root.substream(1);

  if (job.init_mode == InitMode::GaussianField) {
    result.init = gaussian_field_init(job.exemplar, job.out_height, job.out_width,
                                      init_stream);
  } else {
    result.init = white_noise_image(job.out_height, job.out_width,
                                    job.exemplar.channels, job.white_noise_mean,
                                    job.white_noise_std, init_stream);
  }

  if (job.soul.outer_iterations > 0) {
    SoulResult soul = run_soul(job.soul, model, result.init, chain_stream);
    result.trace = std::move(soul.trace);
    result.diverged = soul.diverged;
    result.output = std::move(soul.final_image);
  } else {
    result.output = result.init;
  }

  if (job.histogram_matching && !result.diverged)
    result.output = histogram_match(result.output, job.exemplar);
  return result;
}

}  // namespace macrotex
