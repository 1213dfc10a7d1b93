#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/kernel.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"
#include "sllt/simulate.hpp"
#include "sllt/spectral.hpp"

namespace sllt {

struct SigmaMatrix {
  Matrix cov;      // Sigma Sigma^*
  Matrix factor;   // lower-triangular Sigma
  std::vector<std::pair<double, Matrix>> per_alpha;  // (alpha, Hessian of lambda at t = 0)
  std::vector<double> weights;                       // quadrature weights matching per_alpha
  std::string route = "green-kubo";
  double lo = 0.0;
  double hi = 1.0;
};

/// Poisson corrector at a fixed alpha: g = int_0^1 P_s b ds and (I - P_1) u = g.
struct Corrector {
  double alpha = 0.0;
  Matrix u;  // d x n
  Matrix g;  // d x n
};

namespace detail {

inline void require_centered(const GeneratorModel& model, const Observable& b, const char* where) {
  if (!model.has_invariant_measure()) throw Error(ErrorKind::InvalidArgument, where, "model has no invariant law");
  if (b.states() != model.size()) throw Error(ErrorKind::DimensionMismatch, where, "observable/model state count");
  if (!b.has_zero_mean(model.nu)) throw Error(ErrorKind::InvalidArgument, where, "observable must be nu-centered");
}

inline Complex lambda_at(const GeneratorModel& model, const Observable& b, const Vector& t, double alpha,
                         double beta, const PropagatorConfig& cfg) {
  return dominant_decomposition(fourier_operator(model, b, t, alpha, beta, cfg)).lambda;
}

}  // namespace detail

/// |d lambda / d t_j| at t = 0 by central differences, one entry per coordinate.
inline Vector lambda_gradient_check(const GeneratorModel& model, const Observable& b, double alpha, double beta,
                                    double h = 1e-3, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "lambda_gradient_check";
  detail::require_centered(model, b, where);
  if (!(h >= 1e-4 && h <= 1e-2)) throw Error(ErrorKind::InvalidArgument, where, "h must lie in [1e-4, 1e-2]");
  const Index d = b.dim();
  Vector out(d);
  for (Index j = 0; j < d; ++j) {
    Vector e = Vector::Zero(d);
    e(j) = h;
    const Complex up = detail::lambda_at(model, b, e, alpha, beta, cfg);
    const Complex down = detail::lambda_at(model, b, -e, alpha, beta, cfg);
    out(j) = std::abs((up - down) / (2.0 * h));
  }
  return out;
}

/// g by the closed form G g = (e^G - I) b on the mean-zero subspace.
inline Matrix corrector_g(const GeneratorModel& model, const Observable& b, double alpha) {
  const Matrix bt = b.values(alpha).transpose();  // n x d
  const Matrix p1 = expm(model.generator);
  const Matrix rhs = (p1 - Matrix::Identity(model.size(), model.size())) * bt;
  return solve_bordered(model.generator, model.nu, rhs).transpose();
}

/// g by Gauss-Legendre quadrature of s -> exp(sG) b (validation route).
inline Matrix corrector_g_quadrature(const GeneratorModel& model, const Observable& b, double alpha,
                                     int points = 32) {
  const Matrix bt = b.values(alpha).transpose();
  const auto [nodes, weights] = gauss_legendre(points, 0.0, 1.0);
  Matrix acc = Matrix::Zero(bt.rows(), bt.cols());
  for (int i = 0; i < points; ++i) acc += weights[i] * (expm(Matrix(nodes[i] * model.generator)) * bt);
  return acc.transpose();
}

inline Corrector corrector_solve(const GeneratorModel& model, const Observable& b, double alpha) {
  detail::require_centered(model, b, "corrector_solve");
  Corrector c;
  c.alpha = alpha;
  c.g = corrector_g(model, b, alpha);
  const Index n = model.size();
  const Matrix i_minus_p = Matrix::Identity(n, n) - expm(model.generator);
  c.u = solve_bordered(i_minus_p, model.nu, c.g.transpose()).transpose();
  return c;
}

/// Second-difference Hessian of Re lambda(t, alpha, alpha) at t = 0.
inline Matrix hessian_fd(const GeneratorModel& model, const Observable& b, double alpha, double h = 1e-3,
                         const PropagatorConfig& cfg = {}) {
  constexpr auto where = "hessian_fd";
  detail::require_centered(model, b, where);
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, where, "h must be > 0");
  const Index d = b.dim();
  auto re_lambda = [&](const Vector& t) { return detail::lambda_at(model, b, t, alpha, alpha, cfg).real(); };
  const double center = re_lambda(Vector::Zero(d));
  Matrix hess(d, d);
  for (Index i = 0; i < d; ++i) {
    Vector e = Vector::Zero(d);
    e(i) = h;
    hess(i, i) = (re_lambda(e) - 2.0 * center + re_lambda(-e)) / (h * h);
    for (Index j = 0; j < i; ++j) {
      Vector pp = Vector::Zero(d), pm = Vector::Zero(d);
      pp(i) = h;
      pp(j) = h;
      pm(i) = h;
      pm(j) = -h;
      const double val = (re_lambda(pp) - re_lambda(pm) - re_lambda(-pm) + re_lambda(-pp)) / (4.0 * h * h);
      hess(i, j) = val;
      hess(j, i) = val;
    }
  }
  return hess;
}

/// FD Hessians at h and h/2 with their Richardson extrapolation.
struct HessianRichardson {
  Matrix coarse;
  Matrix fine;
  Matrix extrapolated;
  double discrepancy = 0.0;  // max |coarse - fine|
};

inline HessianRichardson hessian_fd_richardson(const GeneratorModel& model, const Observable& b, double alpha,
                                               double h = 1e-3, const PropagatorConfig& cfg = {}) {
  HessianRichardson r;
  r.coarse = hessian_fd(model, b, alpha, h, cfg);
  r.fine = hessian_fd(model, b, alpha, 0.5 * h, cfg);
  r.extrapolated = (4.0 * r.fine - r.coarse) / 3.0;
  r.discrepancy = max_abs(r.coarse - r.fine);
  return r;
}

/// -E_nu[b phi^T + phi b^T] with G phi = -b on the mean-zero subspace.
inline Matrix hessian_green_kubo(const GeneratorModel& model, const Observable& b, double alpha) {
  detail::require_centered(model, b, "hessian_green_kubo");
  const Matrix bv = b.values(alpha);  // d x n
  const Matrix phi = solve_bordered(model.generator, model.nu, -bv.transpose());  // n x d
  const Matrix weighted = bv * model.nu.asDiagonal() * phi;                     // d x d
  Matrix h = -(weighted + weighted.transpose());
  return h;
}

struct MonteCarloHessian {
  Matrix value;
  Matrix se;
  double horizon = 0.0;
  Index reps = 0;
};

/// -(1/T) E_nu[S S^T] for the frozen-alpha functional S = int_0^T b(alpha, X_s) ds.
inline MonteCarloHessian hessian_mc(const GeneratorModel& model, const Observable& b, double alpha, double horizon,
                                    Index reps, std::uint64_t seed) {
  constexpr auto where = "hessian_mc";
  if (!(horizon >= 50.0)) throw Error(ErrorKind::InvalidArgument, where, "T must be >= 50");
  if (reps < 10000) throw Error(ErrorKind::InvalidArgument, where, "need at least 1e4 replicas");
  if (!model.has_invariant_measure()) throw Error(ErrorKind::InvalidArgument, where, "model has no invariant law");
  const Observable frozen = Observable::constant_in_alpha(b.values(alpha));
  const EndpointSamples samples = sample_endpoints(model, frozen, horizon, model.nu, reps, seed);
  const Index d = b.dim();
  MonteCarloHessian out;
  out.horizon = horizon;
  out.reps = reps;
  out.value = Matrix::Zero(d, d);
  out.se = Matrix::Zero(d, d);
  Matrix sum = Matrix::Zero(d, d), sq = Matrix::Zero(d, d);
  for (Index r = 0; r < reps; ++r) {
    const double* s = samples.s(r);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) {
        const double v = s[i] * s[j] / horizon;
        sum(i, j) += v;
        sq(i, j) += v * v;
      }
  }
  const double n = static_cast<double>(reps);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      const double mean = sum(i, j) / n;
      out.value(i, j) = 0.0 - mean;
      out.se(i, j) = std::sqrt(std::max(0.0, (sq(i, j) - n * mean * mean) / (n - 1.0)) / n);
    }
  return out;
}

/// Sigma Sigma^* = -int_lo^hi Hessian(alpha) d alpha by Gauss-Legendre, with
/// Cholesky factor. [lo, hi] = [rho, 1] gives the rho-shifted matrix.
inline SigmaMatrix sigma_total(const GeneratorModel& model, const Observable& b, int points = 17, double lo = 0.0,
                               double hi = 1.0) {
  constexpr auto where = "sigma_total";
  detail::require_centered(model, b, where);
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw Error(ErrorKind::InvalidArgument, where, "need 0 <= lo < hi <= 1");
  const auto [nodes, weights] = gauss_legendre(points, lo, hi);
  SigmaMatrix sig;
  sig.lo = lo;
  sig.hi = hi;
  sig.weights = weights;
  sig.per_alpha.resize(static_cast<std::size_t>(points));
  parallel_for(static_cast<std::size_t>(points), [&](std::size_t i) {
    sig.per_alpha[i] = {nodes[i], hessian_green_kubo(model, b, nodes[i])};
  });
  const Index d = b.dim();
  Matrix cov = Matrix::Zero(d, d);
  for (int i = 0; i < points; ++i) cov -= weights[i] * sig.per_alpha[i].second;
  sig.cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sig.cov);
  const double min_eig = es.eigenvalues().minCoeff();
  if (!(min_eig >= 1e-10)) {
    throw Error(ErrorKind::NotPositiveDefinite, where,
                "smallest eigenvalue of Sigma Sigma^* is " + std::to_string(min_eig));
  }
  Eigen::LLT<Matrix> llt(sig.cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, where, "Cholesky failed");
  sig.factor = llt.matrixL();
  return sig;
}

}  // namespace sllt
