#pragma once

// All eigenvalues of a dense real nonsymmetric matrix: diagonal balancing,
// Hessenberg reduction and Francis double-shift QR (Eigen's real Schur solver).

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npde/error.hpp"

namespace npde {

using Complex = std::complex<double>;

/// Similarity scaling D^-1 A D that equalizes row and column norms (powers of
/// two, so it is exact). Eigenvalues are unchanged.
inline Eigen::MatrixXd balance(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  constexpr double radix = 2.0;
  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0, r = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double f = 1.0;
      const double s = c + r;
      double g = r / radix;
      while (c < g) {
        f *= radix;
        c *= radix * radix;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= radix * radix;
      }
      if ((c + r) / f < 0.95 * s) {
        converged = false;
        a.row(i) /= f;
        a.col(i) *= f;
      }
    }
  }
  return a;
}

/// Sort key: |lambda| descending, then argument ascending.
inline void sort_spectrum(std::vector<Complex>& eigs) {
  std::sort(eigs.begin(), eigs.end(), [](const Complex& x, const Complex& y) {
    const double ax = std::abs(x), ay = std::abs(y);
    if (ax != ay) return ax > ay;
    return std::arg(x) < std::arg(y);
  });
}

inline std::vector<Complex> eigenvalues_dense(const Eigen::MatrixXd& m, const std::string& context = "matrix") {
  if (m.rows() != m.cols()) throw Error(ErrorKind::config, context + ": eigenvalues need a square matrix");
  if (!m.allFinite()) throw Error(ErrorKind::non_finite, context + ": matrix has non-finite entries");
  std::vector<Complex> out;
  if (m.rows() == 0) return out;
  Eigen::EigenSolver<Eigen::MatrixXd> solver;
  solver.setMaxIterations(100 * m.rows());
  solver.compute(balance(m), false);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::no_convergence, context + ": QR iteration did not converge");
  const auto& ev = solver.eigenvalues();
  out.reserve(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) out.emplace_back(ev(i).real(), ev(i).imag());
  sort_spectrum(out);
  return out;
}

inline double spectral_radius(const std::vector<Complex>& eigs) {
  double r = 0.0;
  for (const auto& e : eigs) r = std::max(r, std::abs(e));
  return r;
}

}  // namespace npde
