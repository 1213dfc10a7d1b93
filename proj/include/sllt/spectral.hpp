#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/kernel.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"

namespace sllt {

/// Q = lambda v (x) phi + N with N = Q (I - v (x) phi), <phi, v> = 1 and
/// ||v||_inf = 1.
struct SpectralDecomposition {
  Complex lambda{1.0, 0.0};
  CVector v;
  CVector phi;
  CMatrix n;
  double remainder_radius = 0.0;  // r(N)
  double gap = 0.0;               // |lambda| - r(N)
  double residual = 0.0;          // ||Q v - lambda v||_inf
};

/// Relative modulus gap below which the dominant eigenvalue is not treated as
/// isolated (the frequency is outside the perturbative neighbourhood).
inline constexpr double min_relative_gap = 1e-3;

inline double spectral_radius(const CMatrix& m) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::NotSquare, "spectral_radius", "matrix must be square");
  if (m.size() == 0) return 0.0;
  Eigen::ComplexEigenSolver<CMatrix> es(m, false);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, "spectral_radius", "eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_radius(const Matrix& m) { return spectral_radius(CMatrix(m.cast<Complex>())); }

namespace detail {

/// A few steps of shifted inverse iteration to polish an eigenpair of a
/// larger matrix.
inline void polish_eigenpair(const CMatrix& m, Complex& lambda, CVector& v) {
  const Index n = m.rows();
  const Complex shift = lambda + Complex(1e-10 * std::max(1.0, std::abs(lambda)), 0.0);
  Eigen::PartialPivLU<CMatrix> lu(m - shift * CMatrix::Identity(n, n));
  for (int it = 0; it < 3; ++it) {
    v = lu.solve(v);
    v /= v.cwiseAbs().maxCoeff();
  }
  const CVector mv = m * v;
  lambda = v.dot(mv) / v.squaredNorm();
}

inline Index argmax_modulus(const CVector& values, Index skip = -1) {
  Index best = -1;
  for (Index i = 0; i < values.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || std::abs(values(i)) > std::abs(values(best))) best = i;
  }
  return best;
}

}  // namespace detail

inline SpectralDecomposition dominant_decomposition(const CMatrix& m) {
  constexpr auto where = "dominant_decomposition";
  if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorKind::NotSquare, where, "matrix must be square");
  const Index n = m.rows();
  SpectralDecomposition dec;
  if (n == 1) {
    dec.lambda = m(0, 0);
    if (std::abs(dec.lambda) == 0.0) throw Error(ErrorKind::GapTooSmall, where, "zero operator");
    dec.v = CVector::Ones(1);
    dec.phi = CVector::Ones(1);
    dec.n = CMatrix::Zero(1, 1);
    dec.gap = std::abs(dec.lambda);
    return dec;
  }

  Eigen::ComplexEigenSolver<CMatrix> right(m, true);
  if (right.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, where, "right eigensolve failed");
  const CVector& evals = right.eigenvalues();
  const Index top = detail::argmax_modulus(evals);
  const Index second = detail::argmax_modulus(evals, top);
  const double top_mod = std::abs(evals(top));
  if (top_mod == 0.0 || std::abs(evals(second)) >= (1.0 - min_relative_gap) * top_mod) {
    throw Error(ErrorKind::GapTooSmall, where, "leading eigenvalues within relative 1e-3");
  }
  dec.lambda = evals(top);
  CVector v = right.eigenvectors().col(top);
  if (n > 64) detail::polish_eigenpair(m, dec.lambda, v);

  // Left eigenvector from the (non-conjugated) transpose, paired by eigenvalue.
  Eigen::ComplexEigenSolver<CMatrix> left(m.transpose(), true);
  if (left.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, where, "left eigensolve failed");
  Index match = -1;
  double best = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double dist = std::abs(left.eigenvalues()(i) - dec.lambda);
    if (match < 0 || dist < best) {
      match = i;
      best = dist;
    }
  }
  if (best > 1e-8 * std::max(1.0, top_mod)) {
    throw Error(ErrorKind::NonConvergence, where, "left and right spectra do not pair up");
  }
  CVector phi = left.eigenvectors().col(match);

  // Fix the phase so that sum(v) is real positive (v = 1 at t = 0), then the scale.
  const Complex total = v.sum();
  Complex phase = std::abs(total) > 1e-12 * v.cwiseAbs().sum() ? total : v(detail::argmax_modulus(v));
  v *= std::conj(phase) / std::abs(phase);
  v /= v.cwiseAbs().maxCoeff();
  const Complex pairing = (phi.transpose() * v)(0, 0);
  if (std::abs(pairing) < 1e-14) throw Error(ErrorKind::NonConvergence, where, "left/right pairing vanishes");
  phi /= pairing;

  dec.v = v;
  dec.phi = phi;
  dec.n = m - dec.lambda * v * phi.transpose();
  dec.remainder_radius = spectral_radius(dec.n);
  dec.gap = top_mod - dec.remainder_radius;
  dec.residual = max_abs(m * v - dec.lambda * v);
  return dec;
}

inline SpectralDecomposition dominant_decomposition(const FourierOperator& op) { return dominant_decomposition(op.m); }

/// Smallest integer m >= 1 whose m-step kernel has ||N||_inf = 2 TV <= target.
inline int rebase_sampling(const GeneratorModel& model, double target_norm) {
  if (!(target_norm > 0.0 && target_norm < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "rebase_sampling", "target norm must lie in (0, 1)");
  }
  auto norm_at = [&](long m) { return 2.0 * ergodicity_certificate(model, static_cast<double>(m)); };
  long hi = 1;
  while (norm_at(hi) > target_norm) {
    hi *= 2;
    if (hi > (1L << 50)) throw Error(ErrorKind::NonConvergence, "rebase_sampling", "chain does not mix");
  }
  long lo = hi / 2;  // norm_at(lo) > target or lo == 0
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (norm_at(mid) <= target_norm) hi = mid; else lo = mid;
  }
  return static_cast<int>(hi);
}

/// The same additive functional on the coarser clock u = s / m: generator mG,
/// observable m b, horizon T / m.
struct RebasedProblem {
  GeneratorModel model;
  Observable observable;
  int factor = 1;
  double horizon(double original) const { return original / factor; }
};

inline RebasedProblem rebase(const GeneratorModel& model, const Observable& b, int factor) {
  if (factor < 1) throw Error(ErrorKind::InvalidArgument, "rebase", "factor must be >= 1");
  RebasedProblem out{model, b.scaled(static_cast<double>(factor)), factor};
  out.model.generator *= static_cast<double>(factor);
  out.model.mixing_time /= factor;
  return out;
}

struct ScanRow {
  Vector t;
  double alpha = 0.0;
  double radius = 0.0;
  bool sanity = false;  // t = 0 row
};

struct ScanReport {
  std::vector<ScanRow> rows;
  double max_radius = 0.0;        // over t != 0
  double zero_row_error = 0.0;    // max |r - 1| over t = 0 rows
  double tolerance = 1e-6;
  bool pass = false;
};

inline std::vector<double> uniform_grid(double lo, double hi, int points) {
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[i] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
  return g;
}

/// r(Q(t, alpha, alpha)) over t_grid x alpha_grid, plus t = 0 sanity rows.
/// PASS iff every t != 0 radius is below 1 - tol and the t = 0 rows give 1.
inline ScanReport nonarithmetic_scan(const GeneratorModel& model, const Observable& b,
                                     const std::vector<Vector>& t_grid, const std::vector<double>& alpha_grid,
                                     const PropagatorConfig& cfg = {}, double tol = 1e-6) {
  ScanReport report;
  report.tolerance = tol;
  std::vector<Vector> ts;
  ts.push_back(Vector::Zero(b.dim()));
  for (const auto& t : t_grid)
    if (t.norm() > 0.0) ts.push_back(t);
  for (const auto& t : ts)
    for (double a : alpha_grid) report.rows.push_back({t, a, 0.0, t.norm() == 0.0});
  parallel_for(report.rows.size(), [&](std::size_t i) {
    auto& row = report.rows[i];
    row.radius = spectral_radius(fourier_operator(model, b, row.t, row.alpha, row.alpha, cfg).m);
  });
  for (const auto& row : report.rows) {
    if (row.sanity) report.zero_row_error = std::max(report.zero_row_error, std::abs(row.radius - 1.0));
    else report.max_radius = std::max(report.max_radius, row.radius);
  }
  report.pass = report.max_radius < 1.0 - tol && report.zero_row_error <= 1e-8;
  return report;
}

/// Decompositions of Q(t, k/T, (k+1)/T), k < floor(T).
inline std::vector<SpectralDecomposition> block_decompositions(const GeneratorModel& model, const Observable& b,
                                                               const Vector& t, double horizon,
                                                               const PropagatorConfig& cfg = {}) {
  const auto whole = static_cast<std::size_t>(std::floor(horizon));
  std::vector<SpectralDecomposition> out(whole);
  parallel_for(whole, [&](std::size_t k) {
    const double lo = static_cast<double>(k) / horizon;
    const double hi = std::min(1.0, static_cast<double>(k + 1) / horizon);
    out[k] = dominant_decomposition(fourier_operator(model, b, t, lo, hi, cfg));
  });
  return out;
}

/// prod_k lambda(t, k/T, (k+1)/T), multiplied in k order.
inline Complex eigenvalue_product(const GeneratorModel& model, const Observable& b, const Vector& t,
                                  double horizon, const PropagatorConfig& cfg = {}) {
  Complex prod{1.0, 0.0};
  for (const auto& d : block_decompositions(model, b, t, horizon, cfg)) prod *= d.lambda;
  return prod;
}

struct ProductResidual {
  double p = 0.0;  // |component along v(t, 0, 1/T)|
  double q = 0.0;  // sup norm of the complement in H(t, 0, 1/T)
};

/// Splits prod_k Q(t, k/T, (k+1)/T) f minus its leading eigen-term, divided by
/// prod lambda and ||f||, into its v-component p and its H-component q.
inline ProductResidual product_residual(const GeneratorModel& model, const Observable& b, const Vector& t,
                                        double horizon, const CVector& f, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "product_residual";
  if (f.size() != model.size()) throw Error(ErrorKind::DimensionMismatch, where, "f has wrong length");
  if (!(horizon >= 2.0)) throw Error(ErrorKind::InvalidArgument, where, "T must be >= 2");
  const auto whole = static_cast<std::size_t>(std::floor(horizon));
  std::vector<CMatrix> mats(whole);
  std::vector<SpectralDecomposition> decs(whole);
  parallel_for(whole, [&](std::size_t k) {
    const double lo = static_cast<double>(k) / horizon;
    const double hi = std::min(1.0, static_cast<double>(k + 1) / horizon);
    mats[k] = fourier_operator(model, b, t, lo, hi, cfg).m;
    decs[k] = dominant_decomposition(mats[k]);
  });
  const double f_norm = f.cwiseAbs().maxCoeff();
  if (f_norm == 0.0) return {};

  // Everything is carried relative to prod lambda to avoid underflow.
  CVector w = f;
  for (std::size_t k = whole; k-- > 0;) w = (mats[k] * w / decs[k].lambda).eval();
  Complex lead = (decs.back().phi.transpose() * f)(0, 0);
  for (std::size_t k = 0; k + 1 < whole; ++k) lead *= (decs[k].phi.transpose() * decs[k + 1].v)(0, 0);
  const CVector residual = (w - lead * decs.front().v) / f_norm;
  const Complex p = (decs.front().phi.transpose() * residual)(0, 0);
  return {std::abs(p), max_abs(residual - p * decs.front().v)};
}

}  // namespace sllt
