#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "sllt/simulate.hpp"
#include "sllt/variance.hpp"

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

Observable cycle_observable(const GeneratorModel& m) {
  return Observable(Observable::Table{{{1.0, 0.5}, {0.0}, {-1.0, 0.25}}, {{0.0, 1.0, -0.5}, {1.0}, {-0.5}}})
      .center(m.nu);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Composite midpoint rule inside each holding interval, ~`points` nodes total.
Vector riemann_oracle(const PathSample& path, const Observable& b, double rho, double horizon, long points) {
  const double limit = (1.0 - rho) * horizon;
  Vector acc = Vector::Zero(b.dim());
  double lo = 0.0;
  for (std::size_t k = 0; k < path.states.size() && lo < limit; ++k) {
    const double hi = std::min(limit, k < path.times.size() ? path.times[k] : path.horizon);
    const long n = std::max(1L, static_cast<long>(std::ceil(points * (hi - lo) / limit)));
    const double h = (hi - lo) / n;
    for (long i = 0; i < n; ++i) acc += h * b.evaluate(rho + (lo + (i + 0.5) * h) / horizon, path.states[k]);
    lo = hi;
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate

TEST(Simulate, SingleStateHasNoJumps) {
  const auto m = make_model(Matrix::Zero(1, 1));
  const auto path = sample_path(m, 50.0, 0, 1);
  EXPECT_TRUE(path.times.empty());
  ASSERT_EQ(path.states.size(), 1u);
  Observable ramp(Observable::Table{{{0.0, 1.0}}});
  EXPECT_NEAR(integrate_S(path, ramp, 50.0)(0), 25.0, 1e-12);
}

TEST(Simulate, PathInvariantsAndReproducibility) {
  const auto m = cycle_model();
  const auto a = sample_path(m, 200.0, 1, 77);
  const auto b = sample_path(m, 200.0, 1, 77);
  EXPECT_EQ(a.times, b.times);
  EXPECT_EQ(a.states, b.states);
  ASSERT_EQ(a.states.size(), a.times.size() + 1);
  EXPECT_EQ(a.states.front(), 1);
  for (std::size_t k = 0; k + 1 < a.times.size(); ++k) EXPECT_LT(a.times[k], a.times[k + 1]);
  for (std::size_t k = 0; k + 1 < a.states.size(); ++k) EXPECT_NE(a.states[k], a.states[k + 1]);
  EXPECT_LT(a.times.back(), 200.0);
  EXPECT_NE(sample_path(m, 200.0, 1, 78).times, a.times);
}

TEST(Simulate, HoldingTimesAreExponential) {
  const auto m = symmetric_model();
  const auto path = sample_path(m, 1000.0, 0, 5);
  // Completed holding intervals only.
  std::vector<double> holds;
  double prev = 0.0;
  for (double t : path.times) {
    holds.push_back(t - prev);
    prev = t;
  }
  holds.erase(holds.begin());
  double mean = 0.0;
  for (double h : holds) mean += h;
  mean /= static_cast<double>(holds.size());
  EXPECT_NEAR(mean, 1.0, 3.0 / std::sqrt(static_cast<double>(holds.size())));
}

TEST(Simulate, OccupationFractionMatchesInvariantLaw) {
  const auto m = symmetric_model();
  const auto path = sample_path(m, 1e4, 0, 6);
  Observable ind(Observable::Table{{{1.0}, {0.0}}});
  const double frac = integrate_S(path, ind, 1e4)(0) / 1e4;
  // Asymptotic variance of the occupation time is T / 4 for this chain.
  EXPECT_NEAR(frac, 0.5, 3.0 * std::sqrt(0.25 / 1e4));
}

TEST(Simulate, IntegralMatchesRiemannOracle) {
  const auto m = cycle_model();
  Observable b(Observable::Table{{{0.3, -1.0, 2.0, 0.5}, {1.0, 0.0, -3.0}, {-0.2, 0.7}}});
  const double horizon = 10.0;
  const auto path = sample_path(m, horizon, 0, 91);
  const double exact = integrate_S(path, b, horizon)(0);
  const double oracle = riemann_oracle(path, b, 0.0, horizon, 1000000)(0);
  EXPECT_NEAR(exact, oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
  const double exact_half = integrate_S_rho(path, b, 0.5, horizon)(0);
  const double oracle_half = riemann_oracle(path, b, 0.5, horizon, 1000000)(0);
  EXPECT_NEAR(exact_half, oracle_half, 1e-9 * std::max(1.0, std::abs(oracle_half)));
}

TEST(Simulate, ConstantObservableGivesCT) {
  const auto m = cycle_model();
  Observable c(Observable::Table{{{2.5}, {2.5}, {2.5}}});
  const auto path = sample_path(m, 1e4, 2, 3);
  EXPECT_NEAR(integrate_S(path, c, 1e4)(0), 2.5e4, 1e-10 * 2.5e4);
}

TEST(Simulate, RhoShiftProperties) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const double horizon = 40.0;
  const auto path = sample_path(m, horizon, 0, 12);
  const Vector s0 = integrate_S(path, b, horizon);
  const Vector r0 = integrate_S_rho(path, b, 0.0, horizon);
  EXPECT_EQ(s0(0), r0(0));
  EXPECT_EQ(s0(1), r0(1));
  const double rho = 0.999;
  const Vector near_one = integrate_S_rho(path, b, rho, horizon);
  EXPECT_LE(near_one.cwiseAbs().maxCoeff(), b.sup_bound() * (1.0 - rho) * horizon + 1e-12);
  EXPECT_THROW(integrate_S(path, b, 41.0), Error);
  EXPECT_THROW(integrate_S_rho(sample_path(m, 10.0, 0, 1), b, 0.5, 40.0), Error);
}

TEST(Simulate, CharFunctionTrivialitiesAndConjugation) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  Vector mu(3);
  mu << 0.2, 0.5, 0.3;
  const CVector one = CVector::Ones(3);
  const auto zero = char_function_mc(m, b, Vector::Zero(2), 5.0, one, mu, 1000, 4);
  EXPECT_EQ(zero.mean, Complex(1.0, 0.0));
  EXPECT_EQ(zero.se(), 0.0);
  Vector t(2);
  t << 0.6, -1.1;
  const auto plus = char_function_mc(m, b, t, 5.0, one, mu, 1000, 4);
  const auto minus = char_function_mc(m, b, -t, 5.0, one, mu, 1000, 4);
  EXPECT_EQ(plus.mean.real(), minus.mean.real());
  EXPECT_EQ(plus.mean.imag(), -minus.mean.imag());
  EXPECT_THROW(char_function_mc(m, b, t, 5.0, one, mu, 99, 4), Error);
}

TEST(Simulate, ReplicasIndependentOfThreadCount) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  set_thread_count(1);
  const auto a = sample_endpoints(m, b, 20.0, m.nu, 5000, 8, {0.0, 0.3});
  set_thread_count(3);
  const auto c = sample_endpoints(m, b, 20.0, m.nu, 5000, 8, {0.0, 0.3});
  set_thread_count(0);
  EXPECT_EQ(a.values, c.values);
  EXPECT_EQ(a.terminal, c.terminal);
}

TEST(Simulate, CentralLimitCalibration) {
  const auto m = symmetric_model();
  const double horizon = 200.0;
  const Index reps = 100000;
  const auto samples = sample_endpoints(m, sign_observable(), horizon, m.nu, reps, 2024);
  std::vector<double> z(static_cast<std::size_t>(reps));
  double var = 0.0;
  for (Index r = 0; r < reps; ++r) {
    z[r] = samples.s(r)[0] / std::sqrt(horizon);
    var += z[r] * z[r];
  }
  var /= static_cast<double>(reps);
  // Sigma Sigma^* = 1; finite-T variance is 1 - (1 - e^{-2T}) / (2T).
  EXPECT_NEAR(var, 1.0 - 1.0 / (2.0 * horizon), 4.0 * std::sqrt(2.0 / reps));
  std::sort(z.begin(), z.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / reps), std::abs(f - static_cast<double>(i + 1) / reps)});
  }
  EXPECT_LE(ks, 0.01);
}

TEST(FastSlow, DeterministicForcingHasNoFluctuation) {
  const auto m = cycle_model();
  FastSlowSystem sys;
  sys.a = PolyMatrix::constant(Matrix::Constant(1, 1, -1.0));
  sys.v = Observable(Observable::Table{{{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}});
  sys.t_final = 1.0;
  sys.y0 = Vector::Constant(1, 0.5);
  const auto plan = prepare_fastslow(m, sys);
  const auto run = fastslow_run(m, plan, 0.01, 0, 3);
  EXPECT_LE(std::abs(run.rescaled_error(0)), 1e-8);
  // y' = -y + 1 + 2s, y(0) = 1/2 solves to y(s) = 2s - 1 + (3/2) e^{-s}.
  EXPECT_NEAR(run.y_bar(0), 1.0 + 1.5 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(run.u(0, 0), std::exp(-1.0), 1e-12);
}

TEST(FastSlow, ZeroDriftReducesToAdditiveFunctional) {
  const auto m = cycle_model();
  FastSlowSystem sys;
  sys.a = PolyMatrix::constant(Matrix::Zero(2, 2));
  sys.v = Observable(Observable::Table{{{1.0, 0.5}, {0.0}, {-1.0, 0.25}}, {{0.0, 1.0}, {1.0}, {-0.5}}});
  sys.t_final = 2.0;
  sys.y0 = Vector::Zero(2);
  const double eps = 0.02;
  const auto plan = prepare_fastslow(m, sys);
  const auto run = fastslow_run(m, plan, eps, 1, 55);
  const double horizon = sys.t_final / eps;
  const auto path = sample_path(m, horizon, 1, 55);
  const Vector s = integrate_S(path, sys.v.center(m.nu), horizon);
  EXPECT_LT((run.rescaled_error - s).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FastSlow, ScalarDuhamelOracle) {
  const auto m = symmetric_model();
  const double a = -0.7, eps = 1.0 / 200.0, t_final = 1.5;
  FastSlowSystem sys;
  sys.a = PolyMatrix::constant(Matrix::Constant(1, 1, a));
  sys.v = Observable(Observable::Table{{{2.0}, {-1.0}}});
  sys.t_final = t_final;
  sys.y0 = Vector::Constant(1, 1.0);
  const auto plan = prepare_fastslow(m, sys);
  const Vector fluct = plan.fluctuation.values(0.0).row(0).transpose();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto run = fastslow_run(m, plan, eps, 0, seed);
    EXPECT_LE(run.duhamel_residual, 1e-6);
    // (Y - y) / eps = (1/eps) int_0^t e^{a (t - s)} (v - vbar)(X_{s / eps}) ds, piece by piece.
    const auto path = sample_path(m, t_final / eps, 0, seed);
    double oracle = 0.0, lo = 0.0;
    for (std::size_t k = 0; k < path.states.size(); ++k) {
      const double hi = k < path.times.size() ? path.times[k] : path.horizon;
      const double s0 = eps * lo, s1 = eps * hi;
      oracle += fluct(path.states[k]) * (std::exp(a * (t_final - s0)) - std::exp(a * (t_final - s1))) / a;
      lo = hi;
    }
    oracle /= eps;
    EXPECT_NEAR(run.rescaled_error(0), oracle, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// variance

TEST(Variance, GreenKuboHandPoissonOracle) {
  const auto m = symmetric_model();
  const auto b = sign_observable();
  // Independent null-space arithmetic: G phi = -b with phi = c (1, -1) gives
  // -2c = -1, so c = 1/2, and -E_nu[2 b phi] = -2 (1/2 * 1/2 + 1/2 * 1/2) = -1.
  for (double a : {0.0, 0.5, 1.0}) EXPECT_NEAR(hessian_green_kubo(m, b, a)(0, 0), -1.0, 1e-12);
}

TEST(Variance, ZeroObservable) {
  const auto m = cycle_model();
  const auto z = Observable::zero(2, 3);
  EXPECT_EQ(max_abs(hessian_green_kubo(m, z, 0.3)), 0.0);
  EXPECT_EQ(max_abs(hessian_fd(m, z, 0.3)), 0.0);
  EXPECT_EQ(lambda_gradient_check(m, z, 0.1, 0.9).maxCoeff(), 0.0);
  const auto c = corrector_solve(m, z, 0.4);
  EXPECT_EQ(max_abs(c.u), 0.0);
  EXPECT_EQ(max_abs(c.g), 0.0);
  EXPECT_EQ(max_abs(hessian_mc(m, z, 0.4, 50.0, 10000, 1).value), 0.0);
  EXPECT_THROW(sigma_total(m, z), Error);
}

TEST(Variance, FiniteDifferenceHessian) {
  const auto m = symmetric_model();
  const auto b = sign_observable();
  EXPECT_NEAR(hessian_fd(m, b, 0.5)(0, 0), -1.0, 2e-4);
  const double h1 = hessian_fd(m, b, 0.5)(0, 0);
  const double h2 = hessian_fd(m, b.scaled(2.0), 0.5)(0, 0);
  EXPECT_NEAR(h2, 4.0 * h1, 1e-5);
}

TEST(Variance, RouteAgreementOnCycle) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  for (double a : {0.0, 0.37, 1.0}) {
    const Matrix gk = hessian_green_kubo(m, b, a);
    const auto fd = hessian_fd_richardson(m, b, a);
    EXPECT_LE(max_abs(fd.coarse - gk), 5e-4);
    EXPECT_LE(max_abs(fd.coarse - fd.coarse.transpose()), 1e-6);
    EXPECT_LE(fd.discrepancy, 5e-4);
    EXPECT_LT(Eigen::SelfAdjointEigenSolver<Matrix>(gk).eigenvalues().maxCoeff(), 0.0);
  }
}

TEST(Variance, NonSpanningObservableIsRankOne) {
  const auto m = cycle_model();
  Observable b(Observable::Table{{{1.0}, {-2.0}, {0.5}}, {{0.0}, {0.0}, {0.0}}});
  b = b.center(m.nu);
  const Matrix h = hessian_green_kubo(m, b, 0.5);
  // Blockwise oracle: the (0,0) entry equals the scalar Hessian of the first coordinate.
  Observable first(Observable::Table{{{1.0}, {-2.0}, {0.5}}});
  first = first.center(m.nu);
  EXPECT_NEAR(h(0, 0), hessian_green_kubo(m, first, 0.5)(0, 0), 1e-14);
  EXPECT_EQ(h(0, 1), 0.0);
  EXPECT_EQ(h(1, 1), 0.0);
  EXPECT_THROW(sigma_total(m, b), Error);
}

TEST(Variance, GradientVanishesAtZero) {
  const auto m = symmetric_model();
  for (double a : {0.0, 0.3, 1.0})
    for (double z : {0.0, 0.6, 1.0}) EXPECT_LE(lambda_gradient_check(m, sign_observable(), a, z).maxCoeff(), 1e-5);
  const auto mc = cycle_model();
  const auto b = cycle_observable(mc);
  const double g1 = lambda_gradient_check(mc, b, 0.1, 0.8, 1e-3).maxCoeff();
  const double g2 = lambda_gradient_check(mc, b, 0.1, 0.8, 5e-4).maxCoeff();
  EXPECT_LE(g1, 1e-5);
  EXPECT_LE(g2, 1e-5);
  EXPECT_THROW(lambda_gradient_check(mc, b, 0.1, 0.8, 0.1), Error);
}

TEST(Variance, CorrectorTwoStateClosedForm) {
  const auto m = symmetric_model();
  const auto c = corrector_solve(m, sign_observable(), 0.2);
  const double k = (1.0 - std::exp(-2.0)) / 2.0;
  EXPECT_NEAR(c.g(0, 0), k, 1e-14);
  EXPECT_NEAR(c.g(0, 1), -k, 1e-14);
  EXPECT_LT(max_abs(c.g - corrector_g_quadrature(m, sign_observable(), 0.2)), 1e-10);
  EXPECT_NEAR(c.u(0, 0), 0.5, 1e-13);
  EXPECT_NEAR(c.u(0, 1), -0.5, 1e-13);
}

TEST(Variance, CorrectorPoissonResidualOnCycle) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  const auto c = corrector_solve(m, b, 0.6);
  const Matrix p1 = transition_matrix(m, 1.0).p;
  EXPECT_LE(max_abs((Matrix::Identity(3, 3) - p1) * c.u.transpose() - c.g.transpose()), 1e-8);
  EXPECT_LE((c.u * m.nu).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(max_abs(c.g - corrector_g_quadrature(m, b, 0.6)), 1e-10);
}

TEST(Variance, SigmaTotalExamples) {
  const auto m = symmetric_model();
  const auto s = sigma_total(m, sign_observable());
  EXPECT_NEAR(s.cov(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.factor(0, 0), 1.0, 1e-12);
  Observable lin(Observable::Table{{{0.0, 1.0}, {0.0, -1.0}}});
  EXPECT_NEAR(sigma_total(m, lin).cov(0, 0), 1.0 / 3.0, 1e-8);
  // Constant integrand on half the interval.
  EXPECT_NEAR(sigma_total(m, sign_observable(), 17, 0.5, 1.0).cov(0, 0), 0.5, 1e-12);
}

TEST(Variance, SigmaQuadratureIsExactForDegreeSixteen) {
  const auto m = cycle_model();
  Observable::Poly p(17), q(17);
  for (int k = 0; k <= 16; ++k) {
    p[k] = std::cos(k + 1.0) / (k + 1);
    q[k] = std::sin(2.0 * k + 1.0) / (k + 2);
  }
  Observable b(Observable::Table{{p, q, {0.3}}, {{1.0}, p, {-0.4, 0.1}}});
  b = b.center(m.nu);
  const Matrix s17 = sigma_total(m, b, 17).cov, s33 = sigma_total(m, b, 33).cov;
  EXPECT_LE(max_abs(s17 - s33), 1e-10);
  const auto sig = sigma_total(m, b);
  EXPECT_LE(max_abs(sig.cov - sig.cov.transpose()), 1e-8);
  EXPECT_LE(max_abs(sig.factor * sig.factor.transpose() - sig.cov), 1e-12);
  // Scaling law.
  EXPECT_LE(max_abs(sigma_total(m, b.scaled(3.0)).cov - 9.0 * sig.cov), 1e-10);
}

TEST(Variance, RhoShiftedSigmaMatchesShiftedObservable) {
  const auto m = cycle_model();
  const auto b = cycle_observable(m);
  for (double rho : {0.25, 0.5}) {
    const Matrix direct = sigma_total(m, b, 17, rho, 1.0).cov;
    const Matrix shifted = (1.0 - rho) * sigma_total(m, reparametrize(b, rho, 1.0 - rho).center(m.nu)).cov;
    EXPECT_LE(max_abs(direct - shifted), 1e-12);
  }
}

TEST(Variance, MonteCarloHessian) {
  const auto m = symmetric_model();
  const auto mc = hessian_mc(m, sign_observable(), 0.5, 200.0, 100000, 31);
  EXPECT_LE(std::abs(mc.value(0, 0) + 1.0), 4.0 * mc.se(0, 0));
  const double fd = hessian_fd(m, sign_observable(), 0.5)(0, 0);
  EXPECT_LE(std::abs(mc.value(0, 0) - fd), 4.0 * mc.se(0, 0) + 1e-3);
  EXPECT_THROW(hessian_mc(m, sign_observable(), 0.5, 20.0, 100000, 31), Error);
}
