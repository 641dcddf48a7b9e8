#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "macrotex/random.hpp"

namespace macrotex {

// Real-valued pixel grid, the state x in R^d of all dynamics.
// Row-major, channel-interleaved: data[(y*width + x)*channels + c].
// Values live in natural units (8-bit inputs map to [0,1] on load); the
// dynamics run unclamped and clamping happens only at export time.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;

  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw std::invalid_argument("Image: dimensions must be positive");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  std::size_t size() const { return data.size(); }

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// I.i.d. Gaussian image; consumes exactly H*W*C normal draws from `stream`.
inline Image white_noise_image(int height, int width, int channels,
                               double mean, double stddev,
                               RandomStream& stream) {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw std::invalid_argument("white_noise_image: zero-sized shape");
  if (stddev < 0.0)
    throw std::invalid_argument("white_noise_image: negative std");
  Image out(height, width, channels);
  for (double& v : out.data) v = mean + stddev * stream.normal();
  return out;
}

// Original placed at the top-left corner, zeros elsewhere.
inline Image zero_pad(const Image& x, int target_height, int target_width) {
  if (target_height < x.height || target_width < x.width)
    throw std::invalid_argument("zero_pad: target smaller than source");
  Image out(target_height, target_width, x.channels);
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx)
      for (int c = 0; c < x.channels; ++c)
        out.at(y, xx, c) = x.at(y, xx, c);
  return out;
}

// Euclidean norm squared of the pixel vector.
inline double squared_norm(const Image& x) {
  double s = 0.0;
  for (double v : x.data) s += v * v;
  return s;
}

}  // namespace macrotex
