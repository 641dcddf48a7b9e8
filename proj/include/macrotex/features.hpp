#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/image.hpp"
#include "macrotex/random.hpp"

namespace macrotex {

// ------------------------------------------------------------ nonlinearity

// Pointwise scalar map with derivative and a recorded growth bound
// |f(t)| <= sublinear_c * (1 + |t|). sublinear_c == 0 means the bound does
// not hold (the map is super-linear); continuously_differentiable tracks
// whether the derivative is continuous on all of R.
struct Nonlinearity {
  std::string name;
  double (*f)(double);
  double (*df)(double);
  double sublinear_c = 0.0;
  bool continuously_differentiable = false;
};

namespace detail {
inline double nl_identity(double t) { return t; }
inline double nl_one(double) { return 1.0; }
inline double nl_zero(double) { return 0.0; }
inline double nl_softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}
inline double nl_sigmoid(double t) {
  return t > 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}
inline double nl_relu(double t) { return t > 0.0 ? t : 0.0; }
inline double nl_relu_d(double t) { return t > 0.0 ? 1.0 : 0.0; }
inline double nl_tanh(double t) { return std::tanh(t); }
inline double nl_tanh_d(double t) {
  double y = std::tanh(t);
  return 1.0 - y * y;
}
inline double nl_abs(double t) { return std::fabs(t); }
inline double nl_abs_d(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }
inline double nl_square(double t) { return t * t; }
inline double nl_square_d(double t) { return 2.0 * t; }
}  // namespace detail

// Registered scalar maps, usable both as pixelwise transforms (FirstOrder)
// and as post-convolution nonlinearities.
inline Nonlinearity nonlinearity(const std::string& name) {
  if (name == "identity")
    return {"identity", detail::nl_identity, detail::nl_one, 1.0, true};
  if (name == "softplus")  // softplus(t) <= log 2 + max(t,0) <= 1 + |t|
    return {"softplus", detail::nl_softplus, detail::nl_sigmoid, 1.0, true};
  if (name == "relu")  // sub-linear but only piecewise C^1
    return {"relu", detail::nl_relu, detail::nl_relu_d, 1.0, false};
  if (name == "tanh")
    return {"tanh", detail::nl_tanh, detail::nl_tanh_d, 1.0, true};
  if (name == "abs")
    return {"abs", detail::nl_abs, detail::nl_abs_d, 1.0, false};
  if (name == "square")  // super-linear: no valid sub-linearity constant
    return {"square", detail::nl_square, detail::nl_square_d, 0.0, true};
  if (name == "one")
    return {"one", detail::nl_one, detail::nl_zero, 1.0, true};
  throw format_error("nonlinearity: unknown name '" + name + "'");
}

// Grid audit of the recorded growth bound on log-spaced |t| up to 1e6.
inline bool audit_sublinear(const Nonlinearity& phi) {
  if (phi.sublinear_c <= 0.0) return false;
  for (double t = 1e-6; t <= 1.0000001e6; t *= 1.5) {
    for (double s : {t, -t}) {
      if (std::fabs(phi.f(s)) > phi.sublinear_c * (1.0 + std::fabs(s)))
        return false;
    }
  }
  return std::fabs(phi.f(0.0)) <= phi.sublinear_c;
}

// --------------------------------------------------------------- spec types

enum class PaddingMode { Periodic, Zero };

inline std::string to_string(PaddingMode p) {
  return p == PaddingMode::Periodic ? "periodic" : "zero";
}
inline PaddingMode padding_mode(const std::string& s) {
  if (s == "periodic") return PaddingMode::Periodic;
  if (s == "zero") return PaddingMode::Zero;
  throw format_error("padding_mode: unknown mode '" + s + "'");
}

// Pixelwise transforms, one feature per (transform, channel):
// f_{k,c}(x) = mean over spatial positions of transform_k(x(., ., c)).
struct FirstOrderSpec {
  std::vector<Nonlinearity> transforms;
};

struct Kernel {
  int kh = 0, kw = 0;
  std::vector<double> taps;  // row-major kh*kw
};

// One feature per (kernel, channel): spatial mean of phi(kernel * channel).
struct FilterBankSpec {
  std::vector<Kernel> kernels;
  Nonlinearity phi;
  PaddingMode pad = PaddingMode::Periodic;
};

struct ConvLayer {
  int in_channels = 0, out_channels = 0;
  int kh = 0, kw = 0;
  int stride = 1;
  PaddingMode pad = PaddingMode::Periodic;
  Nonlinearity phi;
  std::vector<double> weights;  // (out, in, kh, kw) row-major
  std::vector<double> bias;     // (out)

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kh * kw;
  }
  double w(int oc, int ic, int a, int b) const {
    return weights[((static_cast<std::size_t>(oc) * in_channels + ic) * kh + a) * kw + b];
  }
};

// Strided convolutional stack G_j = phi o A_j o ... o phi o A_1, with
// features given by the total mean of each selected layer's output.
struct ConvNetSpec {
  std::vector<ConvLayer> layers;
  std::vector<int> selected_layers;   // 1-based layer indices
  std::vector<double> input_offset;   // per-channel shift; empty = none
};

using FeatureMapSpec = std::variant<FirstOrderSpec, FilterBankSpec, ConvNetSpec>;

using FeatureVector = std::vector<double>;

// Number of statistics p produced on an image with `channels` channels.
inline int feature_count(const FeatureMapSpec& spec, int channels) {
  if (const auto* fo = std::get_if<FirstOrderSpec>(&spec))
    return static_cast<int>(fo->transforms.size()) * channels;
  if (const auto* fb = std::get_if<FilterBankSpec>(&spec))
    return static_cast<int>(fb->kernels.size()) * channels;
  return static_cast<int>(std::get<ConvNetSpec>(spec).selected_layers.size());
}

// All scalar nonlinearities a spec applies, for the integrability audit.
inline std::vector<Nonlinearity> spec_nonlinearities(const FeatureMapSpec& spec) {
  std::vector<Nonlinearity> out;
  if (const auto* fo = std::get_if<FirstOrderSpec>(&spec)) {
    out = fo->transforms;
  } else if (const auto* fb = std::get_if<FilterBankSpec>(&spec)) {
    out.push_back(fb->phi);
  } else {
    for (const auto& layer : std::get<ConvNetSpec>(spec).layers)
      out.push_back(layer.phi);
  }
  return out;
}

namespace detail {

// Deterministic compensated (Kahan) accumulator.
struct KahanSum {
  double sum = 0.0, carry = 0.0;
  void add(double v) {
    double y = v - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

inline int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Correlation-style strided convolution of one layer; returns preactivations
// (affine output, before phi). Output spatial dims are ceil(H/stride).
inline Image conv_forward(const ConvLayer& layer, const Image& in) {
  if (in.channels != layer.in_channels)
    throw std::invalid_argument("conv_forward: channel count mismatch");
  const int oh = ceil_div(in.height, layer.stride);
  const int ow = ceil_div(in.width, layer.stride);
  const int ca = (layer.kh - 1) / 2, cb = (layer.kw - 1) / 2;
  Image out(oh, ow, layer.out_channels);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int oc = 0; oc < layer.out_channels; ++oc) {
        double acc = layer.bias[oc];
        for (int a = 0; a < layer.kh; ++a) {
          const int iy = oy * layer.stride + a - ca;
          int yy = iy;
          if (layer.pad == PaddingMode::Periodic) yy = wrap(iy, in.height);
          else if (iy < 0 || iy >= in.height) continue;
          for (int b = 0; b < layer.kw; ++b) {
            const int ix = ox * layer.stride + b - cb;
            int xx = ix;
            if (layer.pad == PaddingMode::Periodic) xx = wrap(ix, in.width);
            else if (ix < 0 || ix >= in.width) continue;
            for (int ic = 0; ic < layer.in_channels; ++ic)
              acc += layer.w(oc, ic, a, b) * in.at(yy, xx, ic);
          }
        }
        out.at(oy, ox, oc) = acc;
      }
  return out;
}

// Exact adjoint of conv_forward (without bias): scatters the output-side
// gradient back onto the input grid.
inline Image conv_backward(const ConvLayer& layer, const Image& grad_out,
                           int in_height, int in_width) {
  const int ca = (layer.kh - 1) / 2, cb = (layer.kw - 1) / 2;
  Image grad_in(in_height, in_width, layer.in_channels);
  for (int oy = 0; oy < grad_out.height; ++oy)
    for (int ox = 0; ox < grad_out.width; ++ox)
      for (int oc = 0; oc < layer.out_channels; ++oc) {
        const double g = grad_out.at(oy, ox, oc);
        if (g == 0.0) continue;
        for (int a = 0; a < layer.kh; ++a) {
          const int iy = oy * layer.stride + a - ca;
          int yy = iy;
          if (layer.pad == PaddingMode::Periodic) yy = wrap(iy, in_height);
          else if (iy < 0 || iy >= in_height) continue;
          for (int b = 0; b < layer.kw; ++b) {
            const int ix = ox * layer.stride + b - cb;
            int xx = ix;
            if (layer.pad == PaddingMode::Periodic) xx = wrap(ix, in_width);
            else if (ix < 0 || ix >= in_width) continue;
            for (int ic = 0; ic < layer.in_channels; ++ic)
              grad_in.at(yy, xx, ic) += layer.w(oc, ic, a, b) * g;
          }
        }
      }
  return grad_in;
}

// Single-channel plane correlation with one kernel (FilterBank path).
inline std::vector<double> plane_conv(const Image& x, int channel,
                                      const Kernel& k, PaddingMode pad) {
  const int ca = (k.kh - 1) / 2, cb = (k.kw - 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(x.height) * x.width, 0.0);
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      double acc = 0.0;
      for (int a = 0; a < k.kh; ++a) {
        const int iy = y + a - ca;
        int yy = iy;
        if (pad == PaddingMode::Periodic) yy = wrap(iy, x.height);
        else if (iy < 0 || iy >= x.height) continue;
        for (int b = 0; b < k.kw; ++b) {
          const int ix = xx + b - cb;
          int xi = ix;
          if (pad == PaddingMode::Periodic) xi = wrap(ix, x.width);
          else if (ix < 0 || ix >= x.width) continue;
          acc += k.taps[static_cast<std::size_t>(a) * k.kw + b] * x.at(yy, xi, channel);
        }
      }
      out[static_cast<std::size_t>(y) * x.width + xx] = acc;
    }
  return out;
}

inline Image shifted_input(const ConvNetSpec& net, const Image& x) {
  if (net.input_offset.empty()) return x;
  if (static_cast<int>(net.input_offset.size()) != x.channels)
    throw std::invalid_argument("ConvNet input_offset size != channel count");
  Image y = x;
  for (int yy = 0; yy < y.height; ++yy)
    for (int xx = 0; xx < y.width; ++xx)
      for (int c = 0; c < y.channels; ++c) y.at(yy, xx, c) -= net.input_offset[c];
  return y;
}

}  // namespace detail

// ------------------------------------------------------------- evaluation

// f(x): spatial means of the lifted feature maps, summed with compensated
// summation in raster order.
inline FeatureVector eval_features(const FeatureMapSpec& spec, const Image& x) {
  FeatureVector out;
  const double inv_hw = 1.0 / (static_cast<double>(x.height) * x.width);

  if (const auto* fo = std::get_if<FirstOrderSpec>(&spec)) {
    out.reserve(fo->transforms.size() * x.channels);
    for (const auto& tr : fo->transforms)
      for (int c = 0; c < x.channels; ++c) {
        detail::KahanSum s;
        for (int y = 0; y < x.height; ++y)
          for (int xx = 0; xx < x.width; ++xx) s.add(tr.f(x.at(y, xx, c)));
        out.push_back(s.sum * inv_hw);
      }
    return out;
  }

  if (const auto* fb = std::get_if<FilterBankSpec>(&spec)) {
    out.reserve(fb->kernels.size() * x.channels);
    for (const auto& k : fb->kernels)
      for (int c = 0; c < x.channels; ++c) {
        auto plane = detail::plane_conv(x, c, k, fb->pad);
        detail::KahanSum s;
        for (double v : plane) s.add(fb->phi.f(v));
        out.push_back(s.sum * inv_hw);
      }
    return out;
  }

  const auto& net = std::get<ConvNetSpec>(spec);
  Image act = detail::shifted_input(net, x);
  const int max_layer =
      net.selected_layers.empty()
          ? 0
          : *std::max_element(net.selected_layers.begin(), net.selected_layers.end());
  std::vector<FeatureVector::value_type> layer_means(max_layer + 1, 0.0);
  for (int j = 1; j <= max_layer; ++j) {
    Image z = detail::conv_forward(net.layers[j - 1], act);
    act = z;
    for (double& v : act.data) v = net.layers[j - 1].phi.f(v);
    detail::KahanSum s;
    for (double v : act.data) s.add(v);
    layer_means[j] = s.sum / static_cast<double>(act.size());
  }
  out.reserve(net.selected_layers.size());
  for (int j : net.selected_layers) {
    if (j < 1 || j > static_cast<int>(net.layers.size()))
      throw std::invalid_argument("eval_features: selected layer out of range");
    out.push_back(layer_means[j]);
  }
  return out;
}

// grad_x <theta, f(x)> by the adjoint (reverse) pass.
inline Image eval_weighted_gradient(const FeatureMapSpec& spec, const Image& x,
                                    const std::vector<double>& theta) {
  const int p = feature_count(spec, x.channels);
  if (static_cast<int>(theta.size()) != p)
    throw std::invalid_argument("eval_weighted_gradient: |theta| != p");
  for (double t : theta)
    if (!std::isfinite(t))
      throw std::invalid_argument("eval_weighted_gradient: non-finite theta");

  const double inv_hw = 1.0 / (static_cast<double>(x.height) * x.width);
  Image grad(x.height, x.width, x.channels);

  if (const auto* fo = std::get_if<FirstOrderSpec>(&spec)) {
    int idx = 0;
    for (const auto& tr : fo->transforms)
      for (int c = 0; c < x.channels; ++c, ++idx) {
        const double scale = theta[idx] * inv_hw;
        if (scale == 0.0) continue;
        for (int y = 0; y < x.height; ++y)
          for (int xx = 0; xx < x.width; ++xx)
            grad.at(y, xx, c) += scale * tr.df(x.at(y, xx, c));
      }
    return grad;
  }

  if (const auto* fb = std::get_if<FilterBankSpec>(&spec)) {
    int idx = 0;
    for (const auto& k : fb->kernels) {
      const int ca = (k.kh - 1) / 2, cb = (k.kw - 1) / 2;
      for (int c = 0; c < x.channels; ++c, ++idx) {
        if (theta[idx] == 0.0) continue;
        auto plane = detail::plane_conv(x, c, k, fb->pad);
        const double scale = theta[idx] * inv_hw;
        // adjoint scatter of the correlation
        for (int y = 0; y < x.height; ++y)
          for (int xx = 0; xx < x.width; ++xx) {
            const double u =
                scale * fb->phi.df(plane[static_cast<std::size_t>(y) * x.width + xx]);
            if (u == 0.0) continue;
            for (int a = 0; a < k.kh; ++a) {
              const int iy = y + a - ca;
              int yy = iy;
              if (fb->pad == PaddingMode::Periodic) yy = detail::wrap(iy, x.height);
              else if (iy < 0 || iy >= x.height) continue;
              for (int b = 0; b < k.kw; ++b) {
                const int ix = xx + b - cb;
                int xi = ix;
                if (fb->pad == PaddingMode::Periodic) xi = detail::wrap(ix, x.width);
                else if (ix < 0 || ix >= x.width) continue;
                grad.at(yy, xi, c) += k.taps[static_cast<std::size_t>(a) * k.kw + b] * u;
              }
            }
          }
      }
    }
    return grad;
  }

  const auto& net = std::get<ConvNetSpec>(spec);
  if (net.selected_layers.empty()) return grad;
  const int max_layer =
      *std::max_element(net.selected_layers.begin(), net.selected_layers.end());

  // Forward pass, caching preactivations.
  std::vector<Image> preact(max_layer + 1);
  std::vector<Image> activation(max_layer + 1);
  activation[0] = detail::shifted_input(net, x);
  for (int j = 1; j <= max_layer; ++j) {
    preact[j] = detail::conv_forward(net.layers[j - 1], activation[j - 1]);
    activation[j] = preact[j];
    for (double& v : activation[j].data) v = net.layers[j - 1].phi.f(v);
  }

  // Per-layer seed: selected layer j contributes theta_i / n_j to every
  // entry of its activation gradient.
  auto layer_seed = [&](int j) {
    double seed = 0.0;
    for (std::size_t i = 0; i < net.selected_layers.size(); ++i)
      if (net.selected_layers[i] == j)
        seed += theta[i] / static_cast<double>(activation[j].size());
    return seed;
  };

  Image g_act(activation[max_layer].height, activation[max_layer].width,
              activation[max_layer].channels);
  for (double& v : g_act.data) v = layer_seed(max_layer);

  for (int j = max_layer; j >= 1; --j) {
    Image gz = g_act;
    for (std::size_t i = 0; i < gz.data.size(); ++i)
      gz.data[i] *= net.layers[j - 1].phi.df(preact[j].data[i]);
    Image g_prev = detail::conv_backward(net.layers[j - 1], gz,
                                         activation[j - 1].height,
                                         activation[j - 1].width);
    if (j > 1) {
      const double seed = layer_seed(j - 1);
      if (seed != 0.0)
        for (double& v : g_prev.data) v += seed;
    }
    g_act = std::move(g_prev);
  }
  return g_act;  // input shift has identity derivative
}

// ---------------------------------------------------------- Jacobian rank

struct JacobianRank {
  int rank = 0;
  bool full_row_rank = false;
};

// Numerical rank of the p x d Jacobian df(x0), built row by row from
// eval_weighted_gradient with unit weight vectors. Requires p <= d.
// The singular values come from the p x p Gram matrix J J^T, since d can be
// a full image dimension.
inline JacobianRank jacobian_rank(const FeatureMapSpec& spec, const Image& x0,
                                  double tol = 1e-8) {
  const int p = feature_count(spec, x0.channels);
  const int d = static_cast<int>(x0.size());
  if (p > d)
    throw std::invalid_argument("jacobian_rank: p > d");
  Eigen::MatrixXd jac(p, d);
  std::vector<double> unit(p, 0.0);
  for (int i = 0; i < p; ++i) {
    unit[i] = 1.0;
    Image row = eval_weighted_gradient(spec, x0, unit);
    unit[i] = 0.0;
    for (int k = 0; k < d; ++k) jac(i, k) = row.data[k];
  }
  Eigen::MatrixXd gram = jac * jac.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const auto& ev = eig.eigenvalues();  // ascending, eigenvalue = sv^2
  JacobianRank result;
  const double max_ev = ev(p - 1);
  if (!(max_ev > 0.0)) return result;
  const double cutoff = tol * tol * max_ev;
  for (int i = 0; i < p; ++i)
    if (ev(i) > cutoff) ++result.rank;
  result.full_row_rank = (result.rank == p);
  return result;
}

// ----------------------------------------------------- weight randomization

// Fresh i.i.d. Gaussian weights per layer. Kernel draws use the template's
// per-output-channel empirical mean/std; biases use the per-layer moments.
inline ConvNetSpec randomize_weights(const ConvNetSpec& tmpl, RandomStream& stream) {
  ConvNetSpec out = tmpl;
  for (auto& layer : out.layers) {
    const std::size_t per_oc =
        static_cast<std::size_t>(layer.in_channels) * layer.kh * layer.kw;
    for (int oc = 0; oc < layer.out_channels; ++oc) {
      double mean = 0.0, sq = 0.0;
      const std::size_t base = static_cast<std::size_t>(oc) * per_oc;
      for (std::size_t i = 0; i < per_oc; ++i) mean += layer.weights[base + i];
      mean /= static_cast<double>(per_oc);
      for (std::size_t i = 0; i < per_oc; ++i) {
        const double dv = layer.weights[base + i] - mean;
        sq += dv * dv;
      }
      const double stddev = std::sqrt(sq / static_cast<double>(per_oc));
      for (std::size_t i = 0; i < per_oc; ++i)
        layer.weights[base + i] = stream.normal(mean, stddev);
    }
    if (!layer.bias.empty()) {
      double mean = 0.0, sq = 0.0;
      for (double b : layer.bias) mean += b;
      mean /= static_cast<double>(layer.bias.size());
      for (double b : layer.bias) sq += (b - mean) * (b - mean);
      const double stddev = std::sqrt(sq / static_cast<double>(layer.bias.size()));
      for (double& b : layer.bias) b = stream.normal(mean, stddev);
    }
  }
  return out;
}

}  // namespace macrotex
