#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "macrotex/errors.hpp"

namespace macrotex {

namespace detail {
// FFTW plan creation is not thread-safe; execution of independent plans is.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Forward 2-D real-to-complex DFT of a row-major h*w field.
// Output has h*(w/2+1) entries (FFTW half-spectrum layout).
inline std::vector<std::complex<double>> fft2_r2c(const std::vector<double>& field,
                                                  int h, int w) {
  std::vector<double> in(field);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * (w / 2 + 1));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_2d(h, w, in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  if (!plan) throw numeric_error("fft2_r2c: planning failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

// Inverse of fft2_r2c, normalized so that ifft(fft(x)) == x.
inline std::vector<double> fft2_c2r(std::vector<std::complex<double>> spectrum,
                                    int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
    plan = fftw_plan_dft_c2r_2d(h, w,
                                reinterpret_cast<fftw_complex*>(spectrum.data()),
                                out.data(), FFTW_ESTIMATE);
  }
  if (!plan) throw numeric_error("fft2_c2r: planning failed");
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / (static_cast<double>(h) * w);
  for (double& v : out) v *= scale;
  return out;
}

// Circular (periodic) convolution of two h*w fields via the DFT.
inline std::vector<double> circular_convolve(const std::vector<double>& a,
                                             const std::vector<double>& b,
                                             int h, int w) {
  auto fa = fft2_r2c(a, h, w);
  auto fb = fft2_r2c(b, h, w);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  return fft2_c2r(std::move(fa), h, w);
}

}  // namespace macrotex
