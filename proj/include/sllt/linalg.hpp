#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "sllt/error.hpp"

namespace sllt {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

/// exp(A) by scaling-and-squaring with Pade approximants (Eigen's expm).
template <typename Derived>
auto expm(const Eigen::MatrixBase<Derived>& a) {
  using Plain = typename Derived::PlainObject;
  Plain out = a.derived().exp();
  return out;
}

/// Max row sum of moduli: the operator norm induced by the sup norm.
template <typename Derived>
double sup_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().maxCoeff();
}

/// Solve L z = rhs on the complement of ker(L), pinned by <pin, z> = 0.
///
/// L must have one-dimensional kernel spanned by the constant vector and
/// left kernel spanned by `pin` (true for G and I - exp(G) of an irreducible
/// generator with invariant law `pin`). The bordered system
///   [ L    1 ] [z]   [rhs]
///   [ pin' 0 ] [c] = [ 0 ]
/// is then nonsingular; c vanishes whenever <pin, rhs> = 0.
inline Matrix solve_bordered(const Matrix& l, const Vector& pin, const Matrix& rhs) {
  const Index n = l.rows();
  Matrix border = Matrix::Zero(n + 1, n + 1);
  border.topLeftCorner(n, n) = l;
  border.topRightCorner(n, 1).setOnes();
  border.bottomLeftCorner(1, n) = pin.transpose();
  Eigen::FullPivLU<Matrix> lu(border);
  if (!lu.isInvertible()) {
    throw Error(ErrorKind::SingularSystem, "solve_bordered", "bordered Poisson system is singular");
  }
  Matrix extended = Matrix::Zero(n + 1, rhs.cols());
  extended.topRows(n) = rhs;
  Matrix sol = lu.solve(extended);
  return sol.topRows(n);
}

/// Gauss-Legendre nodes and weights on [lo, hi] (Newton on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int points, double lo = 0.0,
                                                                          double hi = 1.0) {
  if (points < 1) throw Error(ErrorKind::InvalidArgument, "gauss_legendre", "need at least one point");
  std::vector<double> nodes(points), weights(points);
  const double mid = 0.5 * (hi + lo);
  const double half = 0.5 * (hi - lo);
  for (int i = 0; i < (points + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= points; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
      }
      dp = points * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= points; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
    }
    dp = points * (x * p0 - p1) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = mid - half * x;
    nodes[points - 1 - i] = mid + half * x;
    weights[i] = weights[points - 1 - i] = half * w;
  }
  return {nodes, weights};
}

}  // namespace sllt
