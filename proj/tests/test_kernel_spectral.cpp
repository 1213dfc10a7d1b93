#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "sllt/kernel.hpp"
#include "sllt/simulate.hpp"
#include "sllt/spectral.hpp"

using namespace sllt;

namespace {

GeneratorModel symmetric_model() {
  Matrix g(2, 2);
  g << -1, 1, 1, -1;
  return make_model(g);
}

GeneratorModel cycle_model() {
  Matrix g(3, 3);
  g << -2.0, 2.0, 0.0, 0.5, -1.5, 1.0, 1.5, 0.0, -1.5;
  return make_model(g);
}

Observable sign_observable() { return Observable(Observable::Table{{{1.0}, {-1.0}}}); }

Observable ramp_observable(const GeneratorModel& m) {
  return Observable(Observable::Table{{{1.0, 1.0}, {-1.0, -1.0}}}).center(m.nu);
}

Observable cycle_observable(const GeneratorModel& m) {
  return Observable(Observable::Table{{{1.0, 0.5}, {0.0}, {-1.0, 0.25}}, {{0.0, 1.0, -0.5}, {1.0}, {-0.5}}})
      .center(m.nu);
}

Vector vec(double a) { return Vector::Constant(1, a); }

Vector vec(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

/// Dominant eigenvalue of G + i t diag(b) for the symmetric chain with b = (1, -1).
double symmetric_lambda(double t) { return std::exp(-1.0 + std::sqrt(1.0 - t * t)); }

}  // namespace

TEST(Kernel, ConstantWeightEqualsMatrixExponential) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const Vector t = vec(0.8, -1.3);
  for (double a : {0.0, 0.35, 1.0}) {
    CMatrix gen = m.generator.cast<Complex>();
    const Vector w = b.values(a).transpose() * t;
    for (Index x = 0; x < 3; ++x) gen(x, x) += Complex(0.0, w(x));
    const CMatrix oracle = expm(gen);
    for (auto method : {PropagatorConfig::Method::CommutatorFreeMagnus4, PropagatorConfig::Method::RungeKutta4}) {
      PropagatorConfig cfg;
      cfg.method = method;
      EXPECT_LT(max_abs(fourier_operator(m, b, t, a, a, cfg).m - oracle), 1e-10);
    }
  }
}

TEST(Kernel, ZeroFrequencyIsTransitionMatrix) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const CMatrix q = fourier_operator(m, b, Vector::Zero(2), 0.1, 0.6).m;
  EXPECT_LT(max_abs(q - transition_matrix(m, 1.0).p.cast<Complex>()), 1e-13);
}

TEST(Kernel, TenfoldResolutionAgrees) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const Vector t = vec(2.0, 1.0);
  PropagatorConfig fine;
  fine.steps = 2560;
  PropagatorConfig rk;
  rk.method = PropagatorConfig::Method::RungeKutta4;
  const CMatrix ref = fourier_operator(m, b, t, 0.2, 0.9, fine).m;
  EXPECT_LT(max_abs(fourier_operator(m, b, t, 0.2, 0.9).m - ref), 1e-9);
  EXPECT_LT(max_abs(fourier_operator(m, b, t, 0.2, 0.9, rk).m - ref), 1e-9);
}

TEST(Kernel, RefineCheckReportsAndFails) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  PropagatorConfig cfg;
  cfg.refine_check = true;
  const auto op = fourier_operator(m, b, vec(1.0, 1.0), 0.0, 1.0, cfg);
  EXPECT_LT(op.refinement_error, 1e-9);
  cfg.steps = 8;
  cfg.method = PropagatorConfig::Method::RungeKutta4;
  Observable wild(Observable::Table{{{0.0, 400.0}, {0.0}, {0.0}}, {{0.0}, {0.0}, {0.0}}});
  try {
    fourier_operator(m, wild, vec(1.0, 0.0), 0.0, 1.0, cfg);
    FAIL() << "expected OdeToleranceFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OdeToleranceFailure);
  }
}

TEST(Kernel, ConjugateSymmetry) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const CMatrix q = fourier_operator(m, b, vec(0.7, -0.4), 0.3, 0.8).m;
  const CMatrix qm = fourier_operator(m, b, vec(-0.7, 0.4), 0.3, 0.8).m;
  EXPECT_LT(max_abs(q.conjugate() - qm), 1e-14);
}

TEST(Kernel, ProductConventionsAndIdentity) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  // Integer horizon: the remainder operator is the identity.
  const auto rem = remainder_operator(m, b, vec(1.0, 2.0), 4.0);
  EXPECT_LT(max_abs(rem.m - CMatrix::Identity(3, 3)), 1e-15);
  EXPECT_EQ(max_abs(operator_product(std::span<const CMatrix>{}, 3) - CMatrix::Identity(3, 3)), 0.0);
  // At t = 0 the product is P(T) for any T.
  CVector f(3);
  f << 1.0, -2.0, 0.5;
  Vector mu(3);
  mu << 0.2, 0.3, 0.5;
  for (double horizon : {1.0, 2.5, 7.25}) {
    const Complex val = nagaev_value(m, b, Vector::Zero(2), horizon, f, mu);
    const double oracle = mu.dot(transition_matrix(m, horizon).p * f.real());
    EXPECT_NEAR(val.real(), oracle, 1e-12);
    EXPECT_NEAR(val.imag(), 0.0, 1e-12);
  }
}

TEST(Kernel, ProductOrderMatters) {
  // For an alpha-dependent observable the factors do not commute; the
  // k-ordered product must differ from the reversed one.
  const auto m = symmetric_model();
  const auto b = ramp_observable(m);
  const auto prod = nagaev_product(m, b, vec(2.0), 6.0);
  std::vector<CMatrix> reversed;
  for (std::size_t k = prod.factors.size(); k-- > 0;) reversed.push_back(prod.factors[k].m);
  EXPECT_GT(max_abs(prod.matrix() - operator_product(std::span<const CMatrix>(reversed), 2)), 1e-6);
}

TEST(Kernel, NagaevMatchesMonteCarlo) {
  const auto m = symmetric_model();
  const auto b = sign_observable();
  Vector mu(2);
  mu << 1.0, 0.0;
  const CVector f = CVector::Ones(2);
  const Complex exact = nagaev_value(m, b, vec(0.7), 6.5, f, mu);
  const CharEstimate mc = char_function_mc(m, b, vec(0.7), 6.5, f, mu, 100000, 11);
  EXPECT_LE(std::abs(mc.mean - exact), 4.0 * mc.se());
}

TEST(Kernel, InputErrors) {
  const auto m = symmetric_model();
  const auto b = sign_observable();
  EXPECT_THROW(fourier_operator(m, b, vec(1.0, 2.0), 0.0, 1.0), Error);
  EXPECT_THROW(fourier_operator(m, b, vec(1.0), 0.0, 1.5), Error);
  EXPECT_THROW(nagaev_value(m, b, vec(1.0), 0.5, CVector::Ones(2), Vector::Ones(2) / 2), Error);
}

// ---------------------------------------------------------------------------

TEST(Spectral, SymmetricChainAnalyticEigenvalue) {
  const auto m = symmetric_model();
  const auto b = sign_observable();
  for (double t : {0.0, 0.3, 0.7, 0.95}) {
    const auto dec = dominant_decomposition(fourier_operator(m, b, vec(t), 0.4, 0.4));
    EXPECT_NEAR(dec.lambda.real(), symmetric_lambda(t), 1e-12);
    EXPECT_NEAR(dec.lambda.imag(), 0.0, 1e-12);
  }
}

TEST(Spectral, DecompositionInvariants) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  for (double s : {0.0, 0.2, 0.5}) {
    const auto op = fourier_operator(m, b, vec(s, -s), 0.1, 0.3);
    const auto dec = dominant_decomposition(op);
    EXPECT_NEAR(dec.v.cwiseAbs().maxCoeff(), 1.0, 1e-14);
    EXPECT_NEAR(std::abs((dec.phi.transpose() * dec.v)(0, 0) - Complex(1.0, 0.0)), 0.0, 1e-12);
    EXPECT_LT(max_abs(dec.n * dec.v), 1e-12);
    EXPECT_LT(max_abs(dec.phi.transpose() * dec.n), 1e-12);
    EXPECT_LT(dec.remainder_radius, std::abs(dec.lambda));
    EXPECT_LT(dec.residual, 1e-12);
    const CMatrix rebuilt = dec.lambda * dec.v * dec.phi.transpose() + dec.n;
    EXPECT_LT(max_abs(rebuilt - op.m), 1e-13);
    EXPECT_GT(dec.v.sum().real(), 0.0);
    EXPECT_NEAR(dec.v.sum().imag(), 0.0, 1e-12);
  }
  // At t = 0: lambda = 1, v = 1, phi = nu.
  const auto dec0 = dominant_decomposition(fourier_operator(m, b, Vector::Zero(2), 0.0, 1.0));
  EXPECT_NEAR(std::abs(dec0.lambda - Complex(1.0)), 0.0, 1e-13);
  EXPECT_LT(max_abs(dec0.v - CVector::Ones(3)), 1e-12);
  EXPECT_LT(max_abs(dec0.phi - m.nu.cast<Complex>()), 1e-12);
}

TEST(Spectral, GapTooSmallIsReported) {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  try {
    dominant_decomposition(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GapTooSmall);
  }
}

TEST(Spectral, NonArithmeticScan) {
  const auto m = symmetric_model();
  const std::vector<Vector> ts{vec(-2), vec(-1), vec(-0.5), vec(0.5), vec(1), vec(2)};
  const auto pass = nonarithmetic_scan(m, sign_observable(), ts, {0.0, 0.5, 1.0}, {}, 1e-4);
  EXPECT_TRUE(pass.pass);
  EXPECT_LE(pass.zero_row_error, 1e-8);
  EXPECT_LE(pass.max_radius, 1.0 - 1e-4);
  // |lambda(t)| for |t| >= 1 is e^{-1}; for t = 0.5 it is exp(-1 + sqrt(0.75)).
  EXPECT_NEAR(pass.max_radius, symmetric_lambda(0.5), 1e-12);
  const auto fail = nonarithmetic_scan(m, Observable::zero(1, 2), ts, {0.0, 0.5, 1.0}, {}, 1e-4);
  EXPECT_FALSE(fail.pass);
  EXPECT_NEAR(fail.max_radius, 1.0, 1e-12);
}

TEST(Spectral, ScanDetectsLatticeObservable) {
  // A constant 2 pi observable puts t S_T on 2 pi Z at t = 1, so Q(1) is P(1)
  // up to a unimodular factor. Uses the kernel's uncentered probe mode.
  const auto m = symmetric_model();
  Observable lattice(Observable::Table{{{2.0 * std::numbers::pi}, {2.0 * std::numbers::pi}}});
  const auto rep = nonarithmetic_scan(m, lattice, {vec(1.0)}, {0.5});
  EXPECT_FALSE(rep.pass);  // e^{i 2 pi T} has modulus one
}

TEST(Spectral, EigenvalueProductAtZeroIsOne) {
  const auto m = symmetric_model();
  const Complex p = eigenvalue_product(m, ramp_observable(m), vec(0.0), 25.0);
  EXPECT_NEAR(std::abs(p - Complex(1.0)), 0.0, 1e-12);
}

TEST(Spectral, ProductResidualScalesLikeOneOverT) {
  const auto m = symmetric_model();
  const auto b = ramp_observable(m);
  CVector f = CVector::Zero(2);
  f(0) = 1.0;
  std::vector<double> pt, qt;
  for (double horizon : {25.0, 50.0, 100.0}) {
    const auto r = product_residual(m, b, vec(0.2), horizon, f);
    pt.push_back(r.p * horizon);
    qt.push_back(r.q * horizon);
  }
  const auto ratio = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
  };
  EXPECT_LE(ratio(pt), 3.0);
  EXPECT_LE(ratio(qt), 3.0);
}

TEST(Spectral, RebaseSampling) {
  const auto m = symmetric_model();
  // 2 * cert(k) = e^{-2k}; smallest k with e^{-2k} <= 0.01 is 3.
  EXPECT_EQ(rebase_sampling(m, 0.01), 3);
  EXPECT_EQ(rebase_sampling(m, 0.5), 1);
  const auto rb = rebase(m, sign_observable(), 4);
  EXPECT_DOUBLE_EQ(rb.horizon(20.0), 5.0);
  // The rebased unit block equals four original unit blocks for frozen b.
  const CMatrix one = fourier_operator(m, sign_observable(), vec(0.3), 0.5, 0.5).m;
  const CMatrix four = fourier_operator(rb.model, rb.observable, vec(0.3), 0.5, 0.5).m;
  EXPECT_LT(max_abs(four - one * one * one * one), 1e-11);
}
