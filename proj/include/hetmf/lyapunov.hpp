#pragma once

#include "hetmf/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <limits>
#include <string>

namespace hetmf {

struct LyapunovResult {
  Eigen::MatrixXd X;
  double spectral_abscissa = 0.0;  // max real part of eig(A)
};

// Solves A X + X A^T + C = 0 for real A and symmetric C. Requires A Hurwitz
// (every eigenvalue with negative real part), which makes the solution unique.
inline LyapunovResult solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                                     double stability_margin = 1e-12) {
  using Complex = std::complex<double>;
  using CMatrix = Eigen::MatrixXcd;
  const auto n = A.rows();
  LyapunovResult out;
  if (n == 0) {
    out.X = Eigen::MatrixXd::Zero(0, 0);
    return out;
  }
  // A = U T U^H with T upper triangular.
  Eigen::ComplexSchur<CMatrix> schur(A.cast<Complex>());
  if (schur.info() != Eigen::Success) throw StabilityError("Schur decomposition failed");
  const CMatrix& T = schur.matrixT();
  const CMatrix& U = schur.matrixU();

  double abscissa = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) abscissa = std::max(abscissa, T(i, i).real());
  out.spectral_abscissa = abscissa;
  const double scale = std::max(1.0, T.diagonal().cwiseAbs().maxCoeff());
  if (abscissa >= -stability_margin * scale) {
    throw StabilityError("linearization is not Hurwitz (spectral abscissa " + std::to_string(abscissa) + ")");
  }

  // With X = U Y U^H the equation becomes T Y + Y T^H = -U^H C U =: R.
  const CMatrix R = -(U.adjoint() * C.cast<Complex>() * U);
  CMatrix Y = CMatrix::Zero(n, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      Complex rhs = R(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) rhs -= T(i, k) * Y(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) rhs -= Y(i, k) * std::conj(T(j, k));
      Y(i, j) = rhs / (T(i, i) + std::conj(T(j, j)));
    }
  }
  const Eigen::MatrixXd X = (U * Y * U.adjoint()).real();
  out.X = 0.5 * (X + X.transpose());
  return out;
}

}  // namespace hetmf
