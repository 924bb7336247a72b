#pragma once

// Fourier-basis projection of periodic fields and the spectral derivative used
// as the reference ("true") derivative throughout the diagnostics.

#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "npde/grid.hpp"

namespace npde {

struct FourierCoeffs {
  Grid1D grid;
  std::vector<std::complex<double>> modes;  // unnormalised DFT, length n_points
};

namespace detail {

// The FFTW planner is not thread-safe; execution on a private plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline void dft(std::vector<std::complex<double>>& data, int sign) {
  const int n = static_cast<int>(data.size());
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(n, ptr, ptr, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

/// Signed wavenumber index of DFT bin j.
inline int wavenumber_index(int j, int n) { return j <= n / 2 ? j : j - n; }

}  // namespace detail

inline FourierCoeffs forward_transform(const Field& f) {
  require_finite(f.values, "forward_transform input");
  FourierCoeffs c{f.grid, std::vector<std::complex<double>>(f.values.begin(), f.values.end())};
  detail::dft(c.modes, FFTW_FORWARD);
  return c;
}

inline Field inverse_transform(const FourierCoeffs& c) {
  auto data = c.modes;
  detail::dft(data, FFTW_BACKWARD);
  Field out(c.grid);
  const double inv_n = 1.0 / c.grid.n_points();
  for (int i = 0; i < c.grid.n_points(); ++i) out[i] = data[i].real() * inv_n;
  return out;
}

/// p-th derivative by Fourier multipliers (ik)^p. The Nyquist bin of an even grid
/// is dropped for odd p, where its derivative is not real-representable.
inline Field spectral_derivative(const Field& f, int p) {
  if (p < 0) throw Error(ErrorKind::config, "derivative order must be non-negative");
  FourierCoeffs c = forward_transform(f);
  const int n = f.grid.n_points();
  const double k0 = 2.0 * std::numbers::pi / f.grid.length();
  for (int j = 0; j < n; ++j) {
    const int kj = detail::wavenumber_index(j, n);
    if (n % 2 == 0 && j == n / 2 && p % 2 == 1) {
      c.modes[j] = 0.0;
      continue;
    }
    const std::complex<double> ik(0.0, k0 * kj);
    std::complex<double> mult = 1.0;
    for (int q = 0; q < p; ++q) mult *= ik;
    c.modes[j] *= mult;
  }
  return inverse_transform(c);
}

}  // namespace npde
