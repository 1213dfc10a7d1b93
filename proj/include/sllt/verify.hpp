#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/kernel.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"
#include "sllt/rng.hpp"
#include "sllt/simulate.hpp"
#include "sllt/spectral.hpp"
#include "sllt/variance.hpp"

namespace sllt {

/// Compactly supported product kernel on R^d with a closed-form integral.
struct Kernel {
  enum class Shape { Triangle, Bump };
  Shape shape = Shape::Triangle;
  double width = 1.0;

  std::string name() const {
    return std::string(shape == Shape::Triangle ? "triangle" : "bump") + "(" + std::to_string(width) + ")";
  }

  double operator()(const double* z, Index d) const {
    double val = 1.0;
    for (Index j = 0; j < d; ++j) {
      const double s = std::abs(z[j]) / width;
      if (s >= 1.0) return 0.0;
      if (shape == Shape::Triangle) {
        val *= 1.0 - s;
      } else {
        const double c = 1.0 - s * s;
        val *= c * c * c;
      }
    }
    return val;
  }

  /// Lebesgue integral: w^d for the triangle, (32 w / 35)^d for (1 - s^2)^3.
  double integral(Index d) const {
    const double one = shape == Shape::Triangle ? width : 32.0 * width / 35.0;
    return std::pow(one, static_cast<double>(d));
  }
};

struct TestBank {
  std::vector<Vector> f_bank;
  std::vector<std::string> f_names;
  std::vector<Kernel> g_bank;
  std::vector<Vector> mu_bank;
  std::vector<std::string> mu_names;
  /// Displacements are u = kappa sqrt(T) (1, ..., 1).
  std::vector<double> u_scales;

  /// f in {1, 1_{0}, -1_{0}}, g in {triangle(1), bump(1)}, mu in {delta_0, nu}.
  static TestBank standard(const GeneratorModel& model) {
    const Index n = model.size();
    TestBank bank;
    Vector ind = Vector::Zero(n);
    ind(0) = 1.0;
    bank.f_bank = {Vector::Ones(n), ind, -ind};
    bank.f_names = {"one", "ind0", "-ind0"};
    bank.g_bank = {Kernel{Kernel::Shape::Triangle, 1.0}, Kernel{Kernel::Shape::Bump, 1.0}};
    Vector delta = Vector::Zero(n);
    delta(0) = 1.0;
    bank.mu_bank = {delta, model.nu};
    bank.mu_names = {"delta0", "nu"};
    bank.u_scales = {0.0, 0.5, 1.0, 2.0, 5.0};
    return bank;
  }

  void validate(Index n) const {
    constexpr auto where = "TestBank";
    if (f_bank.empty() || g_bank.empty() || mu_bank.empty() || u_scales.empty()) {
      throw Error(ErrorKind::ConfigError, where, "every bank must be non-empty");
    }
    for (const auto& f : f_bank)
      if (f.size() != n) throw Error(ErrorKind::DimensionMismatch, where, "f has wrong length");
    for (const auto& mu : mu_bank) {
      if (mu.size() != n || (mu.array() < 0.0).any() || std::abs(mu.sum() - 1.0) > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, where, "mu must be a probability vector");
      }
    }
    for (const auto& g : g_bank)
      if (!(g.width > 0.0)) throw Error(ErrorKind::InvalidArgument, where, "kernel width must be > 0");
  }
};

/// Stream key of the replicas sampled for horizon T and initial law index.
inline std::uint64_t replica_key(std::uint64_t seed, double horizon, std::size_t mu_index) {
  return CounterRng::combine(CounterRng::combine(seed, std::bit_cast<std::uint64_t>(horizon)), mu_index);
}

// ---------------------------------------------------------------------------
// Nagaev identity: Monte Carlo vs the operator product.

struct NagaevRow {
  Vector t;
  double horizon = 0.0;
  std::size_t f_index = 0;
  std::size_t mu_index = 0;
  Complex exact;
  CharEstimate mc;
  double deviation = 0.0;
  double allowance = 0.0;  // 4 SE + 1e-3
  bool pass = false;
};

struct NagaevReport {
  std::vector<NagaevRow> rows;
  Index reps = 0;
  std::uint64_t seed = 0;
  double se_factor = 4.0;
  double abs_slack = 1e-3;
  double worst_ratio = 0.0;  // max deviation / allowance
  bool pass = false;
};

/// Full operator for (t, T); the default multiplies the factors in k order.
using OperatorBuilder = std::function<CMatrix(const Vector& t, double horizon)>;

inline NagaevReport nagaev_check(const GeneratorModel& model, const Observable& b, const std::vector<Vector>& t_grid,
                                 const std::vector<double>& horizons, const TestBank& bank, Index reps,
                                 std::uint64_t seed, const PropagatorConfig& cfg = {},
                                 OperatorBuilder builder = {}) {
  detail::require_centered(model, b, "nagaev_check");
  bank.validate(model.size());
  if (!builder) {
    builder = [&](const Vector& t, double horizon) { return nagaev_product(model, b, t, horizon, cfg).matrix(); };
  }
  NagaevReport report;
  report.reps = reps;
  report.seed = seed;
  for (double horizon : horizons) {
    std::vector<EndpointSamples> samples;
    for (std::size_t m = 0; m < bank.mu_bank.size(); ++m) {
      samples.push_back(sample_endpoints(model, b, horizon, bank.mu_bank[m], reps, replica_key(seed, horizon, m)));
    }
    for (const auto& t : t_grid) {
      const CMatrix op = builder(t, horizon);
      for (std::size_t fi = 0; fi < bank.f_bank.size(); ++fi) {
        const CVector f = bank.f_bank[fi].cast<Complex>();
        const CVector opf = op * f;
        for (std::size_t m = 0; m < bank.mu_bank.size(); ++m) {
          NagaevRow row;
          row.t = t;
          row.horizon = horizon;
          row.f_index = fi;
          row.mu_index = m;
          row.exact = (bank.mu_bank[m].cast<Complex>().transpose() * opf)(0, 0);
          row.mc = char_function_from(samples[m], t, f);
          row.deviation = std::abs(row.mc.mean - row.exact);
          row.allowance = report.se_factor * row.mc.se() + report.abs_slack;
          row.pass = row.deviation <= row.allowance;
          report.worst_ratio = std::max(report.worst_ratio, row.deviation / row.allowance);
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  report.pass = !report.rows.empty() &&
                std::all_of(report.rows.begin(), report.rows.end(), [](const NagaevRow& r) { return r.pass; });
  return report;
}

// ---------------------------------------------------------------------------
// Eigenvalue product vs the Gaussian characteristic function.

struct EigprodRow {
  Vector tau;
  double horizon = 0.0;
  Complex product;
  double gaussian = 0.0;
  double deviation = 0.0;
};

struct EigprodReport {
  std::vector<EigprodRow> rows;
  Matrix cov;
  double tolerance = 0.01;
  double slack = 1.2;         // allowed growth factor between successive T
  double floor = 1e-13;       // rounding allowance per block, times floor(T)
  bool pass = false;
};

inline EigprodReport eigprod_check(const GeneratorModel& model, const Observable& b, const std::vector<Vector>& taus,
                                   const std::vector<double>& horizons, const PropagatorConfig& cfg = {},
                                   double tolerance = 0.01) {
  detail::require_centered(model, b, "eigprod_check");
  if (horizons.empty() || taus.empty()) throw Error(ErrorKind::InvalidArgument, "eigprod_check", "empty grid");
  EigprodReport report;
  report.tolerance = tolerance;
  report.cov = sigma_total(model, b).cov;
  bool pass = true;
  for (const auto& tau : taus) {
    double previous = -1.0;
    for (double horizon : horizons) {
      EigprodRow row;
      row.tau = tau;
      row.horizon = horizon;
      row.product = eigenvalue_product(model, b, Vector(tau / std::sqrt(horizon)), horizon, cfg);
      row.gaussian = std::exp(-0.5 * tau.dot(report.cov * tau));
      row.deviation = std::abs(row.product - row.gaussian);
      if (previous >= 0.0 && row.deviation > report.slack * previous + report.floor * std::floor(horizon)) pass = false;
      previous = row.deviation;
      report.rows.push_back(row);
    }
    if (previous > tolerance) pass = false;
  }
  report.pass = pass;
  return report;
}

// ---------------------------------------------------------------------------
// Local limit theorem comparisons.

struct LltThresholds {
  double sup_tolerance = 0.05;
  Index min_reps = 1000000;   // reps required for a PASS verdict
  double monotone_se = 2.0;   // allowed increase of the sup, in SE units
};

struct LltRow {
  double horizon = 0.0;
  double rho = 0.0;
  std::size_t mu_index = 0;
  std::size_t f_index = 0;
  std::size_t g_index = 0;
  double kappa = 0.0;
  double lhs = 0.0;
  double se = 0.0;
  double rhs = 0.0;
  double deviation = 0.0;
};

struct LltSummary {
  double horizon = 0.0;
  double rho = 0.0;
  double sup_deviation = 0.0;
  double se_at_sup = 0.0;
};

struct LLTReport {
  std::vector<LltRow> rows;
  std::vector<LltSummary> summaries;  // one per (rho, T), T ascending
  std::vector<SigmaMatrix> sigmas;    // one per rho
  std::vector<double> rhos{0.0};
  Index reps = 0;
  std::uint64_t seed = 0;
  LltThresholds thresholds;
  ScanReport scan;
  bool scan_pass = true;
  bool not_applicable = false;
  bool sigma_continuous = true;
  double sigma_lipschitz = 0.0;
  double sigma_max_jump = 0.0;
  double max_duhamel_residual = 0.0;
  bool pass = false;
};

namespace detail {

/// Bank rows for one (T, rho, mu) cell from endpoint draws S_r and X_r.
template <typename Endpoint>
void llt_rows(LLTReport& report, const TestBank& bank, const SigmaMatrix& sigma, Index d, double horizon, double rho,
              std::size_t mu_index, Index reps, const Vector& nu, Endpoint&& endpoint) {
  const double det = sigma.factor.diagonal().prod();
  const double scale = det * std::pow(2.0 * std::numbers::pi * horizon, 0.5 * static_cast<double>(d));
  const Eigen::LLT<Matrix> cov_llt(sigma.cov);
  const std::size_t nk = bank.u_scales.size(), ng = bank.g_bank.size(), nf = bank.f_bank.size();
  std::vector<double> sum(nk * ng * nf, 0.0), sq(nk * ng * nf, 0.0);
  std::vector<double> shifted(static_cast<std::size_t>(d));
  for (Index r = 0; r < reps; ++r) {
    const auto [s, x] = endpoint(r);
    for (std::size_t k = 0; k < nk; ++k) {
      const double u = bank.u_scales[k] * std::sqrt(horizon);
      for (Index j = 0; j < d; ++j) shifted[j] = s[j] - u;
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const double gv = bank.g_bank[gi](shifted.data(), d);
        if (gv == 0.0) continue;
        for (std::size_t fi = 0; fi < nf; ++fi) {
          const double v = bank.f_bank[fi](x) * gv;
          const std::size_t cell = (k * ng + gi) * nf + fi;
          sum[cell] += v;
          sq[cell] += v * v;
        }
      }
    }
  }
  const double n = static_cast<double>(reps);
  LltSummary* summary = nullptr;
  for (auto& sm : report.summaries)
    if (sm.horizon == horizon && sm.rho == rho) summary = &sm;
  if (!summary) {
    report.summaries.push_back({horizon, rho, 0.0, 0.0});
    summary = &report.summaries.back();
  }
  for (std::size_t k = 0; k < nk; ++k) {
    const Vector u = Vector::Constant(d, bank.u_scales[k] * std::sqrt(horizon));
    const double gauss = std::exp(-u.dot(cov_llt.solve(u)) / (2.0 * horizon));
    for (std::size_t gi = 0; gi < ng; ++gi) {
      for (std::size_t fi = 0; fi < nf; ++fi) {
        const std::size_t cell = (k * ng + gi) * nf + fi;
        const double mean = sum[cell] / n;
        const double var = std::max(0.0, (sq[cell] - n * mean * mean) / (n - 1.0));
        LltRow row;
        row.horizon = horizon;
        row.rho = rho;
        row.mu_index = mu_index;
        row.f_index = fi;
        row.g_index = gi;
        row.kappa = bank.u_scales[k];
        row.lhs = scale * mean;
        row.se = scale * std::sqrt(var / n);
        row.rhs = gauss * nu.dot(bank.f_bank[fi]) * bank.g_bank[gi].integral(d);
        row.deviation = std::abs(row.lhs - row.rhs);
        if (row.deviation > summary->sup_deviation) {
          summary->sup_deviation = row.deviation;
          summary->se_at_sup = row.se;
        }
        report.rows.push_back(row);
      }
    }
  }
}

/// PASS rule shared by the LLT harnesses: for each rho, sup at the largest T
/// within tolerance, and no increase beyond the SE allowance as T grows.
inline bool llt_verdict(const LLTReport& report) {
  if (report.reps < report.thresholds.min_reps) return false;
  for (double rho : report.rhos) {
    std::vector<LltSummary> s;
    for (const auto& sm : report.summaries)
      if (sm.rho == rho) s.push_back(sm);
    if (s.empty()) return false;
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& z) { return a.horizon < z.horizon; });
    if (s.back().sup_deviation > report.thresholds.sup_tolerance) return false;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i].sup_deviation > s[i - 1].sup_deviation + report.thresholds.monotone_se * s[i].se_at_sup) return false;
    }
  }
  return true;
}

inline std::vector<Vector> default_scan_frequencies(Index d) {
  std::vector<Vector> ts;
  for (double s : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
    for (Index j = 0; j < d; ++j) {
      Vector t = Vector::Zero(d);
      t(j) = s;
      ts.push_back(t);
    }
    if (d > 1) ts.push_back(Vector::Constant(d, s));
  }
  return ts;
}

}  // namespace detail

/// Non-arithmetic scan used as the guard in front of every LLT harness.
inline ScanReport llt_guard_scan(const GeneratorModel& model, const Observable& b, const PropagatorConfig& cfg = {},
                                 double tol = 1e-4) {
  return nonarithmetic_scan(model, b, detail::default_scan_frequencies(b.dim()), {0.0, 0.5, 1.0}, cfg, tol);
}

/// LLT for S(rho, T) on each rho in the list; rho = {0} is the plain theorem.
/// Paths are drawn once per (T, mu) and every rho is read off the same path.
inline LLTReport llt_rho_check(const GeneratorModel& model, const Observable& b, const std::vector<double>& rhos,
                               const TestBank& bank, const std::vector<double>& horizons, Index reps,
                               std::uint64_t seed, const LltThresholds& thresholds = {},
                               const PropagatorConfig& cfg = {}) {
  constexpr auto where = "llt_check";
  detail::require_centered(model, b, where);
  bank.validate(model.size());
  if (rhos.empty() || horizons.empty()) throw Error(ErrorKind::InvalidArgument, where, "empty rho or T list");
  for (double rho : rhos)
    if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, where, "rho must lie in [0, 1)");
  LLTReport report;
  report.rhos = rhos;
  report.reps = reps;
  report.seed = seed;
  report.thresholds = thresholds;
  report.scan = llt_guard_scan(model, b, cfg);
  report.scan_pass = report.scan.pass;
  if (!report.scan_pass) return report;

  for (double rho : rhos) report.sigmas.push_back(sigma_total(model, b, 17, rho, 1.0));
  if (rhos.size() > 1) {
    for (double a : uniform_grid(0.0, 1.0, 65)) {
      report.sigma_lipschitz = std::max(report.sigma_lipschitz, max_abs(hessian_green_kubo(model, b, a)));
    }
    for (std::size_t i = 1; i < rhos.size(); ++i) {
      const double jump = max_abs(report.sigmas[i].cov - report.sigmas[i - 1].cov);
      report.sigma_max_jump = std::max(report.sigma_max_jump, jump);
      if (jump > 2.0 * report.sigma_lipschitz * std::abs(rhos[i] - rhos[i - 1])) report.sigma_continuous = false;
    }
  }

  const Index d = b.dim();
  for (double horizon : horizons) {
    for (std::size_t m = 0; m < bank.mu_bank.size(); ++m) {
      const EndpointSamples samples =
          sample_endpoints(model, b, horizon, bank.mu_bank[m], reps, replica_key(seed, horizon, m), rhos);
      for (std::size_t j = 0; j < rhos.size(); ++j) {
        detail::llt_rows(report, bank, report.sigmas[j], d, horizon, rhos[j], m, reps, model.nu,
                         [&](Index r) { return std::pair{samples.s(r, j), samples.x(r, j)}; });
      }
    }
  }
  report.pass = detail::llt_verdict(report) && report.sigma_continuous;
  return report;
}

inline LLTReport llt_check(const GeneratorModel& model, const Observable& b, const TestBank& bank,
                           const std::vector<double>& horizons, Index reps, std::uint64_t seed,
                           const LltThresholds& thresholds = {}, const PropagatorConfig& cfg = {}) {
  return llt_rho_check(model, b, {0.0}, bank, horizons, reps, seed, thresholds, cfg);
}

/// LLT for the rescaled error (Y^eps_t - y_t) / eps of a linear fast-slow
/// system, with T = t / eps and Sigma from the propagator-weighted observable.
inline LLTReport fastslow_llt_check(const GeneratorModel& model, const FastSlowSystem& system,
                                    const std::vector<double>& eps_list, const TestBank& bank, Index reps,
                                    std::uint64_t seed, const LltThresholds& thresholds = {},
                                    const FastSlowConfig& fs_cfg = {}, double duhamel_tolerance = 1e-6) {
  constexpr auto where = "fastslow_llt_check";
  bank.validate(model.size());
  if (eps_list.empty()) throw Error(ErrorKind::InvalidArgument, where, "empty eps list");
  LLTReport report;
  report.rhos = {0.0};
  report.reps = reps;
  report.seed = seed;
  report.thresholds = thresholds;
  const FastSlowPlan plan = prepare_fastslow(model, system, fs_cfg);
  if (plan.fluctuation.coefficient_scale() <= 1e-14) {
    report.not_applicable = true;
    return report;
  }
  report.scan = llt_guard_scan(model, plan.reduced);
  report.scan_pass = report.scan.pass;
  if (!report.scan_pass) return report;
  report.sigmas.push_back(sigma_total(model, plan.reduced));

  const JumpChain chain(model);
  const Index d = system.a.dim();
  std::vector<double> horizons;
  for (double eps : eps_list) {
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, where, "eps must be > 0");
    const double horizon = system.t_final / eps;
    horizons.push_back(horizon);
    for (std::size_t m = 0; m < bank.mu_bank.size(); ++m) {
      std::vector<double> errors(static_cast<std::size_t>(reps * d));
      std::vector<Index> terminal(static_cast<std::size_t>(reps));
      std::vector<double> residual(static_cast<std::size_t>(reps));
      const std::uint64_t key = replica_key(seed, horizon, m);
      const std::size_t chunks = static_cast<std::size_t>(std::max<Index>(1, std::min<Index>(reps, 64)));
      parallel_for(chunks, [&](std::size_t c) {
        const Index lo = static_cast<Index>(c) * reps / static_cast<Index>(chunks);
        const Index hi = static_cast<Index>(c + 1) * reps / static_cast<Index>(chunks);
        for (Index r = lo; r < hi; ++r) {
          CounterRng rng(key, static_cast<std::uint64_t>(r));
          const Index x0 = chain.draw_initial(bank.mu_bank[m], rng);
          const FastSlowRun run = fastslow_run(chain, plan, eps, x0, rng, fs_cfg);
          std::copy_n(run.rescaled_error.data(), d, errors.begin() + r * d);
          terminal[r] = run.terminal_state;
          residual[r] = run.duhamel_residual;
        }
      });
      for (double v : residual) report.max_duhamel_residual = std::max(report.max_duhamel_residual, v);
      detail::llt_rows(report, bank, report.sigmas.front(), d, horizon, 0.0, m, reps, model.nu,
                       [&](Index r) { return std::pair{errors.data() + r * d, terminal[r]}; });
    }
  }
  report.pass = detail::llt_verdict(report) && report.max_duhamel_residual <= duhamel_tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Geometric decay of the characteristic function away from the origin.

struct DecayFit {
  Vector t;
  std::vector<double> horizons;
  std::vector<double> magnitudes;
  double rate = 0.0;       // exp(slope of log|value| against T)
  double r_squared = 0.0;
  bool pass = false;
};

struct DecayReport {
  std::vector<DecayFit> fits;
  double max_rate = 0.95;
  double min_r_squared = 0.99;
  bool pass = false;
};

inline DecayReport decay_check(const GeneratorModel& model, const Observable& b, const std::vector<Vector>& t_list,
                               int first, int last, const PropagatorConfig& cfg = {}) {
  constexpr auto where = "decay_check";
  if (first < 1 || last <= first + 1) throw Error(ErrorKind::InvalidArgument, where, "need at least three horizons");
  DecayReport report;
  const CVector f = CVector::Ones(model.size());
  Vector mu = Vector::Zero(model.size());
  mu(0) = 1.0;
  for (const auto& t : t_list) {
    DecayFit fit;
    fit.t = t;
    for (int h = first; h <= last; ++h) {
      fit.horizons.push_back(h);
      fit.magnitudes.push_back(std::abs(nagaev_value(model, b, t, static_cast<double>(h), f, mu, cfg)));
    }
    const std::size_t n = fit.horizons.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(fit.magnitudes[i] > 0.0)) throw Error(ErrorKind::NonConvergence, where, "characteristic function vanished");
      ys[i] = std::log(fit.magnitudes[i]);
      mx += fit.horizons[i];
      my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += (fit.horizons[i] - mx) * (fit.horizons[i] - mx);
      sxy += (fit.horizons[i] - mx) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    fit.rate = std::exp(slope);
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.pass = fit.rate < report.max_rate && fit.r_squared >= report.min_r_squared;
    report.fits.push_back(std::move(fit));
  }
  report.pass = !report.fits.empty() &&
                std::all_of(report.fits.begin(), report.fits.end(), [](const DecayFit& f) { return f.pass; });
  return report;
}

}  // namespace sllt
