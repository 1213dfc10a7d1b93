#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"

namespace sllt {

struct PropagatorConfig {
  enum class Method { RungeKutta4, CommutatorFreeMagnus4 };
  Method method = Method::CommutatorFreeMagnus4;
  int steps = 256;            // substeps per unit of time
  bool refine_check = false;  // re-solve at 2x steps and compare
};

/// Dense matrix of Q(t, alpha, beta) (or of the remainder operator), acting on
/// functions by (Qf)(x) = sum_y m(x, y) f(y).
struct FourierOperator {
  CMatrix m;
  Vector t;
  double alpha = 0.0;
  double beta = 0.0;
  int step_count = 0;
  double refinement_error = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void check_problem(const GeneratorModel& model, const Observable& b, const Vector& t, const char* where) {
  if (b.states() != model.size()) {
    throw Error(ErrorKind::DimensionMismatch, where, "observable and model disagree on the state count");
  }
  if (t.size() != b.dim()) throw Error(ErrorKind::DimensionMismatch, where, "frequency has wrong dimension");
  if (!t.allFinite()) throw Error(ErrorKind::InvalidArgument, where, "frequency must be finite");
}

/// i * diag(t . b(a, .)) added to G.
inline CMatrix twisted_generator(const Matrix& g, const Observable& b, const Vector& t, double a) {
  CMatrix out = g.cast<Complex>();
  const Matrix vals = b.values(a);
  const Vector w = vals.transpose() * t;
  for (Index x = 0; x < g.rows(); ++x) out(x, x) += Complex(0.0, w(x));
  return out;
}

/// Solves M' = M (G + i diag(t . b(a(r), .))), M(0) = I on r in [0, length]
/// where a(r) = a0 + r * slope.
inline CMatrix propagate(const Matrix& g, const Observable& b, const Vector& t, double a0, double slope,
                         double length, int steps, PropagatorConfig::Method method) {
  const Index n = g.rows();
  CMatrix m = CMatrix::Identity(n, n);
  if (length <= 0.0 || steps <= 0) return m;
  const double h = length / steps;
  auto gen = [&](double r) { return twisted_generator(g, b, t, a0 + r * slope); };

  if (method == PropagatorConfig::Method::RungeKutta4) {
    CMatrix k1(n, n), k2(n, n), k3(n, n), k4(n, n);
    for (int s = 0; s < steps; ++s) {
      const double r = s * h;
      const CMatrix a_lo = gen(r), a_mid = gen(r + 0.5 * h), a_hi = gen(r + h);
      k1.noalias() = m * a_lo;
      k2.noalias() = (m + (0.5 * h) * k1) * a_mid;
      k3.noalias() = (m + (0.5 * h) * k2) * a_mid;
      k4.noalias() = (m + h * k3) * a_hi;
      m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return m;
  }

  // Commutator-free fourth-order exponential integrator (two exponentials per
  // step, Gauss nodes). For right multiplication the factor nearest M carries
  // the larger weight on the earlier node.
  const double root3 = std::sqrt(3.0);
  const double c1 = 0.5 - root3 / 6.0, c2 = 0.5 + root3 / 6.0;
  const double w1 = 0.25 + root3 / 6.0, w2 = 0.25 - root3 / 6.0;
  for (int s = 0; s < steps; ++s) {
    const double r = s * h;
    const CMatrix a1 = gen(r + c1 * h), a2 = gen(r + c2 * h);
    const CMatrix first = (h * (w1 * a1 + w2 * a2)).eval().exp();
    const CMatrix second = (h * (w2 * a1 + w1 * a2)).eval().exp();
    m = (m * first * second).eval();
  }
  return m;
}

inline FourierOperator solve_with_check(const GeneratorModel& model, const Observable& b, const Vector& t,
                                        double a0, double slope, double length, const PropagatorConfig& cfg,
                                        const char* where) {
  if (cfg.steps < 8) throw Error(ErrorKind::InvalidArgument, where, "steps must be >= 8");
  FourierOperator op;
  op.t = t;
  op.step_count = length > 0.0 ? std::max(1, static_cast<int>(std::ceil(cfg.steps * length - 1e-9))) : 0;
  op.m = propagate(model.generator, b, t, a0, slope, length, op.step_count, cfg.method);
  if (cfg.refine_check && op.step_count > 0) {
    const CMatrix fine = propagate(model.generator, b, t, a0, slope, length, 2 * op.step_count, cfg.method);
    op.refinement_error = max_abs(fine - op.m);
    if (op.refinement_error > 1e-6) {
      throw Error(ErrorKind::OdeToleranceFailure, where,
                  "step doubling changed the propagator by " + std::to_string(op.refinement_error));
    }
  }
  return op;
}

}  // namespace detail

/// Q(t, alpha, beta): the transition operator over unit time twisted by
/// exp(i t . int_0^1 b(alpha + s (beta - alpha), X_s) ds).
inline FourierOperator fourier_operator(const GeneratorModel& model, const Observable& b, const Vector& t,
                                        double alpha, double beta, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "fourier_operator";
  detail::check_problem(model, b, t, where);
  if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0) {
    throw Error(ErrorKind::AlphaOutOfRange, where, "alpha and beta must lie in [0, 1]");
  }
  FourierOperator op = detail::solve_with_check(model, b, t, alpha, beta - alpha, 1.0, cfg, where);
  op.alpha = alpha;
  op.beta = beta;
  return op;
}

/// Q~(t, T): propagator over the fractional tail [0, T - floor(T)] with weight
/// b((floor(T) + s) / T, .). Identity for integer T.
inline FourierOperator remainder_operator(const GeneratorModel& model, const Observable& b, const Vector& t,
                                          double horizon, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "remainder_operator";
  detail::check_problem(model, b, t, where);
  if (!(horizon >= 1.0)) throw Error(ErrorKind::InvalidArgument, where, "T must be >= 1");
  const double whole = std::floor(horizon);
  const double tail = horizon - whole;
  FourierOperator op = detail::solve_with_check(model, b, t, whole / horizon, 1.0 / horizon, tail, cfg, where);
  op.alpha = whole / horizon;
  op.beta = 1.0;
  return op;
}

/// A_1 A_2 ... A_k (A_k acts first on a function). Empty product = identity.
inline CMatrix operator_product(std::span<const CMatrix> factors, Index n) {
  CMatrix out = CMatrix::Identity(n, n);
  for (const CMatrix& a : factors) {
    if (a.rows() != n || a.cols() != n) {
      throw Error(ErrorKind::DimensionMismatch, "operator_product", "factor is not n x n");
    }
    out = (out * a).eval();
  }
  return out;
}

inline CMatrix operator_product(std::span<const FourierOperator> factors, Index n) {
  std::vector<CMatrix> mats;
  mats.reserve(factors.size());
  for (const auto& f : factors) mats.push_back(f.m);
  return operator_product(std::span<const CMatrix>(mats), n);
}

/// The factors of the characteristic-function product for S_T:
/// Q(t, k/T, (k+1)/T) for k < floor(T), then Q~(t, T).
struct NagaevProduct {
  std::vector<FourierOperator> factors;
  FourierOperator remainder;

  /// (prod_k Q_k) Q~ f, evaluated right to left on the vector.
  CVector apply(const CVector& f) const {
    CVector w = remainder.m * f;
    for (std::size_t k = factors.size(); k-- > 0;) w = factors[k].m * w;
    return w;
  }

  Complex value(const CVector& f, const Vector& mu) const {
    return (mu.cast<Complex>().transpose() * apply(f))(0, 0);
  }

  /// Full operator, for residual analyses that need every column.
  CMatrix matrix() const {
    std::vector<CMatrix> mats;
    for (const auto& q : factors) mats.push_back(q.m);
    mats.push_back(remainder.m);
    return operator_product(std::span<const CMatrix>(mats), remainder.m.rows());
  }
};

/// Builds the factors in parallel; each factor is an independent ODE solve.
inline NagaevProduct nagaev_product(const GeneratorModel& model, const Observable& b, const Vector& t,
                                    double horizon, const PropagatorConfig& cfg = {}) {
  if (!(horizon >= 1.0)) throw Error(ErrorKind::InvalidArgument, "nagaev_value", "T must be >= 1");
  const auto whole = static_cast<std::size_t>(std::floor(horizon));
  NagaevProduct prod;
  prod.factors.resize(whole);
  parallel_for(whole, [&](std::size_t k) {
    const double lo = static_cast<double>(k) / horizon;
    const double hi = std::min(1.0, static_cast<double>(k + 1) / horizon);
    prod.factors[k] = fourier_operator(model, b, t, lo, hi, cfg);
  });
  prod.remainder = remainder_operator(model, b, t, horizon, cfg);
  return prod;
}

/// E_mu[exp(i t . S_T) f(X_T)] computed as <mu, prod_k Q(t, k/T, (k+1)/T) Q~(t, T) f>.
inline Complex nagaev_value(const GeneratorModel& model, const Observable& b, const Vector& t, double horizon,
                            const CVector& f, const Vector& mu, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "nagaev_value";
  if (f.size() != model.size() || mu.size() != model.size()) {
    throw Error(ErrorKind::DimensionMismatch, where, "f and mu must have one entry per state");
  }
  return nagaev_product(model, b, t, horizon, cfg).value(f, mu);
}

}  // namespace sllt
