#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "sllt/config.hpp"
#include "sllt/error.hpp"
#include "sllt/model.hpp"
#include "sllt/report.hpp"
#include "sllt/spectral.hpp"
#include "sllt/variance.hpp"
#include "sllt/verify.hpp"

namespace sllt::cli {

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2, kNumeric = 3 };

inline const std::vector<std::string>& experiments() {
  static const std::vector<std::string> names{"check-model", "scan-spectrum", "sigma", "nagaev",
                                              "eigprod",     "llt",           "llt-rho", "fastslow"};
  return names;
}

/// Output directory after the SLLT_OUTPUT_DIR override.
inline std::filesystem::path output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("SLLT_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

namespace detail {

struct Context {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  std::ostream& log;
  std::string hash;
  json summary;

  Metadata meta(const Metadata& extra = {}) const {
    Metadata m{{"experiment", cfg.experiment}, {"config_hash", hash}, {"seed", std::to_string(cfg.seed)}};
    m.insert(m.end(), extra.begin(), extra.end());
    return m;
  }

  CsvWriter csv(const std::string& name, const Metadata& extra, const std::vector<std::string>& columns) const {
    return CsvWriter(dir / (cfg.experiment + name + ".csv"), meta(extra), columns);
  }

  int finish(bool pass, const std::string& verdict = "") {
    summary["verdict"] = verdict.empty() ? (pass ? "PASS" : "FAIL") : verdict;
    write_json(dir / (cfg.experiment + "_summary.json"), summary);
    log << cfg.experiment << ": " << summary["verdict"].get<std::string>() << '\n';
    return pass ? kPass : kFail;
  }
};

inline std::string bank_note() {
  return "uniformity over u and f is checked on a finite bank only";
}

inline std::string propagator_note(const PropagatorConfig& p) {
  return std::string(p.method == PropagatorConfig::Method::RungeKutta4 ? "rk4" : "magnus4") + "/" +
         std::to_string(p.steps);
}

inline int check_model(Context& cx) {
  const auto& cfg = cx.cfg;
  GeneratorModel model = make_model(cfg.generator, cfg.labels);
  const double cert = ergodicity_certificate(model, cfg.mixing_horizon);
  const double mix = dyadic_mixing_time(model);
  {
    auto csv = cx.csv("", {{"mixing_horizon", fmt(cfg.mixing_horizon)}}, {"state", "label", "nu"});
    for (Index x = 0; x < model.size(); ++x) csv.write({std::to_string(x), model.labels[x], fmt(model.nu(x))});
  }
  cx.log << "states = " << model.size() << ", irreducible\n";
  cx.log << "nu = (";
  for (Index x = 0; x < model.size(); ++x) cx.log << (x ? ", " : "") << fmt(model.nu(x));
  cx.log << ")\n";
  cx.log << "certificate(T=" << fmt(cfg.mixing_horizon) << ") = " << fmt(cert) << '\n';
  cx.log << "dyadic mixing time = " << fmt(mix) << ", relaxation time = " << fmt(relaxation_time(model)) << '\n';
  cx.summary["nu"] = std::vector<double>(model.nu.data(), model.nu.data() + model.size());
  cx.summary["certificate"] = cert;
  cx.summary["mixing_horizon"] = cfg.mixing_horizon;
  cx.summary["dyadic_mixing_time"] = mix;
  cx.summary["relaxation_time"] = relaxation_time(model);
  if (!cfg.coefficients.empty()) {
    const auto [m2, b] = build_problem(cfg);
    const auto span = span_check(b, uniform_grid(0.0, 1.0, 11));
    cx.summary["observable_centered"] = b.has_zero_mean(m2.nu);
    cx.summary["observable_spanning"] = span.spans;
  }
  return cx.finish(true);
}

inline int scan_spectrum(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto& th = cfg.thresholds;
  const auto [model, b] = build_problem(cfg);
  const ScanReport scan = nonarithmetic_scan(model, b, cfg.t_grid, cfg.alpha_grid, cfg.propagator, th.scan_tolerance);
  {
    auto csv = cx.csv("", {{"scan_tolerance", fmt(th.scan_tolerance)}, {"propagator", propagator_note(cfg.propagator)}},
                      {"t", "alpha", "spectral_radius", "sanity_row"});
    for (const auto& row : scan.rows) csv.write({fmt(row.t), fmt(row.alpha), fmt(row.radius), row.sanity ? "1" : "0"});
  }
  bool pass = scan.pass;
  cx.summary["scan"] = {{"pass", scan.pass}, {"max_radius", scan.max_radius}, {"zero_row_error", scan.zero_row_error}};

  if (!cfg.residual_horizons.empty()) {
    Vector ind = Vector::Zero(model.size());
    ind(0) = 1.0;
    const Vector t = Vector::Constant(b.dim(), cfg.residual_t);
    double pmin = 1e300, pmax = 0.0, qmin = 1e300, qmax = 0.0;
    auto csv = cx.csv("_residual", {{"residual_ratio", fmt(th.residual_ratio)}, {"f", "indicator of state 0"}},
                      {"t", "T", "p", "q", "p_times_T", "q_times_T"});
    for (double horizon : cfg.residual_horizons) {
      const auto r = product_residual(model, b, t, horizon, ind.cast<Complex>(), cfg.propagator);
      csv.write({fmt(t), fmt(horizon), fmt(r.p), fmt(r.q), fmt(r.p * horizon), fmt(r.q * horizon)});
      pmin = std::min(pmin, r.p * horizon);
      pmax = std::max(pmax, r.p * horizon);
      qmin = std::min(qmin, r.q * horizon);
      qmax = std::max(qmax, r.q * horizon);
    }
    // Ratios are only meaningful above rounding level; a vanishing residual is bounded trivially.
    const auto ratio = [](double lo, double hi) { return hi <= 1e-10 ? 1.0 : hi / std::max(lo, 1e-300); };
    const bool ok = ratio(pmin, pmax) <= th.residual_ratio && ratio(qmin, qmax) <= th.residual_ratio;
    cx.summary["residual"] = {{"pass", ok}, {"pT_ratio", ratio(pmin, pmax)}, {"qT_ratio", ratio(qmin, qmax)}};
    pass = pass && ok;
  }

  if (!cfg.decay_t.empty()) {
    DecayReport decay = decay_check(model, b, cfg.decay_t, cfg.decay_first, cfg.decay_last, cfg.propagator);
    decay.max_rate = th.decay_rate;
    decay.min_r_squared = th.decay_r_squared;
    decay.pass = true;
    auto csv = cx.csv("_decay", {{"decay_rate", fmt(th.decay_rate)}, {"decay_r_squared", fmt(th.decay_r_squared)}},
                      {"t", "T", "abs_char_function"});
    json fits = json::array();
    for (auto& fit : decay.fits) {
      fit.pass = fit.rate < th.decay_rate && fit.r_squared >= th.decay_r_squared;
      decay.pass = decay.pass && fit.pass;
      for (std::size_t i = 0; i < fit.horizons.size(); ++i)
        csv.write({fmt(fit.t), fmt(fit.horizons[i]), fmt(fit.magnitudes[i])});
      fits.push_back({{"t", fmt(fit.t)}, {"rate", fit.rate}, {"r_squared", fit.r_squared}, {"pass", fit.pass}});
    }
    cx.summary["decay"] = {{"pass", decay.pass}, {"fits", fits}};
    pass = pass && decay.pass;
  }
  cx.log << "max spectral radius away from 0 = " << fmt(scan.max_radius) << '\n';
  return cx.finish(pass);
}

inline int sigma(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto& th = cfg.thresholds;
  const auto [model, b] = build_problem(cfg);
  const SigmaMatrix sig = sigma_total(model, b, cfg.quadrature_points);
  const Index d = b.dim();
  bool route_ok = true, negdef_ok = true, corrector_ok = true;
  {
    auto csv = cx.csv("", {{"fd_h", fmt(cfg.h)}, {"fd_route_tolerance", fmt(th.fd_route_tolerance)},
                           {"max_hessian_eigenvalue", fmt(th.max_hessian_eigenvalue)}},
                      {"alpha", "weight", "entry", "green_kubo", "finite_difference", "fd_richardson_gap",
                       "max_eigenvalue", "corrector_residual", "u_mean"});
    for (std::size_t i = 0; i < sig.per_alpha.size(); ++i) {
      const auto& [alpha, gk] = sig.per_alpha[i];
      const HessianRichardson fd = hessian_fd_richardson(model, b, alpha, cfg.h, cfg.propagator);
      const double max_eig = Eigen::SelfAdjointEigenSolver<Matrix>(gk).eigenvalues().maxCoeff();
      const Corrector c = corrector_solve(model, b, alpha);
      const Matrix p1 = expm(model.generator);
      const double residual = max_abs((Matrix::Identity(model.size(), model.size()) - p1) * c.u.transpose() -
                                      c.g.transpose());
      const double u_mean = (c.u * model.nu).cwiseAbs().maxCoeff();
      route_ok = route_ok && max_abs(fd.coarse - gk) <= th.fd_route_tolerance;
      negdef_ok = negdef_ok && max_eig <= th.max_hessian_eigenvalue;
      corrector_ok = corrector_ok && residual <= 1e-8 && u_mean <= 1e-10;
      for (Index r = 0; r < d; ++r)
        for (Index s = 0; s < d; ++s)
          csv.write({fmt(alpha), fmt(sig.weights[i]), std::to_string(r) + ":" + std::to_string(s), fmt(gk(r, s)),
                     fmt(fd.coarse(r, s)), fmt(fd.discrepancy), fmt(max_eig), fmt(residual), fmt(u_mean)});
    }
  }
  {
    auto csv = cx.csv("_matrix", {{"route", sig.route}, {"quadrature_points", std::to_string(cfg.quadrature_points)}},
                      {"entry", "cov", "factor"});
    for (Index r = 0; r < d; ++r)
      for (Index s = 0; s < d; ++s)
        csv.write({std::to_string(r) + ":" + std::to_string(s), fmt(sig.cov(r, s)), fmt(sig.factor(r, s))});
  }
  double max_gradient = 0.0;
  {
    const auto grid = uniform_grid(0.0, 1.0, 5);
    auto csv = cx.csv("_gradient", {{"fd_h", fmt(cfg.h)}, {"gradient_tolerance", fmt(th.gradient_tolerance)}},
                      {"alpha", "beta", "max_abs_gradient"});
    for (double a : grid)
      for (double z : grid) {
        const double g = lambda_gradient_check(model, b, a, z, cfg.h, cfg.propagator).maxCoeff();
        max_gradient = std::max(max_gradient, g);
        csv.write({fmt(a), fmt(z), fmt(g)});
      }
  }
  bool mc_ok = true;
  if (cfg.mc_reps > 0) {
    const double alpha = 0.5;
    const MonteCarloHessian mc = hessian_mc(model, b, alpha, cfg.mc_horizon, cfg.mc_reps, cfg.seed);
    const Matrix gk = hessian_green_kubo(model, b, alpha);
    auto csv = cx.csv("_mc", {{"mc_se_factor", fmt(th.mc_se_factor)}, {"T", fmt(cfg.mc_horizon)},
                              {"reps", std::to_string(cfg.mc_reps)}},
                      {"alpha", "entry", "monte_carlo", "se", "green_kubo"});
    for (Index r = 0; r < d; ++r)
      for (Index s = 0; s < d; ++s) {
        mc_ok = mc_ok && std::abs(mc.value(r, s) - gk(r, s)) <= th.mc_se_factor * mc.se(r, s);
        csv.write({fmt(alpha), std::to_string(r) + ":" + std::to_string(s), fmt(mc.value(r, s)), fmt(mc.se(r, s)),
                   fmt(gk(r, s))});
      }
  }
  const bool gradient_ok = max_gradient <= th.gradient_tolerance;
  cx.summary["cov"] = json::array();
  for (Index r = 0; r < d; ++r) cx.summary["cov"].push_back(std::vector<double>(d));
  for (Index r = 0; r < d; ++r)
    for (Index s = 0; s < d; ++s) cx.summary["cov"][r][s] = sig.cov(r, s);
  cx.summary["checks"] = {{"route_agreement", route_ok},     {"negative_definite", negdef_ok},
                          {"corrector", corrector_ok},        {"gradient", gradient_ok},
                          {"max_abs_gradient", max_gradient}, {"monte_carlo", mc_ok}};
  cx.log << "Sigma Sigma^* =";
  for (Index r = 0; r < d; ++r)
    for (Index s = 0; s < d; ++s) cx.log << ' ' << fmt(sig.cov(r, s));
  cx.log << '\n';
  return cx.finish(route_ok && negdef_ok && corrector_ok && gradient_ok && mc_ok);
}

inline int nagaev(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto [model, b] = build_problem(cfg);
  const TestBank bank = TestBank::standard(model);
  NagaevReport rep = nagaev_check(model, b, cfg.t_grid, cfg.horizons, bank, cfg.reps, cfg.seed, cfg.propagator);
  // Re-apply configurable thresholds to the rows.
  rep.se_factor = cfg.thresholds.nagaev_se_factor;
  rep.abs_slack = cfg.thresholds.nagaev_abs_slack;
  rep.pass = true;
  rep.worst_ratio = 0.0;
  {
    auto csv = cx.csv("", {{"reps", std::to_string(cfg.reps)}, {"se_factor", fmt(rep.se_factor)},
                           {"abs_slack", fmt(rep.abs_slack)}, {"propagator", propagator_note(cfg.propagator)}},
                      {"t", "T", "f", "mu", "exact_re", "exact_im", "mc_re", "mc_im", "se", "deviation", "pass"});
    for (auto& row : rep.rows) {
      row.allowance = rep.se_factor * row.mc.se() + rep.abs_slack;
      row.pass = row.deviation <= row.allowance;
      rep.pass = rep.pass && row.pass;
      rep.worst_ratio = std::max(rep.worst_ratio, row.deviation / row.allowance);
      csv.write({fmt(row.t), fmt(row.horizon), bank.f_names[row.f_index], bank.mu_names[row.mu_index],
                 fmt(row.exact.real()), fmt(row.exact.imag()), fmt(row.mc.mean.real()), fmt(row.mc.mean.imag()),
                 fmt(row.mc.se()), fmt(row.deviation), row.pass ? "1" : "0"});
    }
  }
  cx.summary["rows"] = rep.rows.size();
  cx.summary["worst_deviation_over_allowance"] = rep.worst_ratio;
  return cx.finish(rep.pass);
}

inline int eigprod(Context& cx) {
  const auto& cfg = cx.cfg;
  const auto [model, b] = build_problem(cfg);
  const EigprodReport rep =
      eigprod_check(model, b, cfg.tau_grid, cfg.horizons, cfg.propagator, cfg.thresholds.eigprod_tolerance);
  {
    auto csv = cx.csv("", {{"tolerance", fmt(rep.tolerance)}, {"growth_slack", fmt(rep.slack)},
                           {"propagator", propagator_note(cfg.propagator)}},
                      {"tau", "T", "product_re", "product_im", "gaussian", "deviation"});
    for (const auto& row : rep.rows)
      csv.write({fmt(row.tau), fmt(row.horizon), fmt(row.product.real()), fmt(row.product.imag()), fmt(row.gaussian),
                 fmt(row.deviation)});
  }
  return cx.finish(rep.pass);
}

inline LltThresholds llt_thresholds(const Thresholds& th) {
  return {th.llt_sup, th.llt_min_reps, th.llt_monotone_se};
}

inline void write_llt(Context& cx, const LLTReport& rep, const TestBank& bank) {
  const auto& th = rep.thresholds;
  const Metadata meta{{"reps", std::to_string(rep.reps)},
                      {"llt_sup", fmt(th.sup_tolerance)},
                      {"llt_min_reps", std::to_string(th.min_reps)},
                      {"llt_monotone_se", fmt(th.monotone_se)},
                      {"u", "kappa * sqrt(T) in every coordinate"},
                      {"note", bank_note()}};
  {
    auto csv = cx.csv("", meta, {"T", "rho", "mu", "f", "g", "kappa", "lhs", "se", "rhs", "deviation"});
    for (const auto& r : rep.rows)
      csv.write({fmt(r.horizon), fmt(r.rho), bank.mu_names[r.mu_index], bank.f_names[r.f_index],
                 bank.g_bank[r.g_index].name(), fmt(r.kappa), fmt(r.lhs), fmt(r.se), fmt(r.rhs), fmt(r.deviation)});
  }
  json sums = json::array();
  for (const auto& s : rep.summaries)
    sums.push_back({{"T", s.horizon}, {"rho", s.rho}, {"sup_deviation", s.sup_deviation}, {"se_at_sup", s.se_at_sup}});
  cx.summary["summaries"] = sums;
  cx.summary["thresholds"] = {{"llt_sup", th.sup_tolerance}, {"llt_min_reps", th.min_reps},
                              {"llt_monotone_se", th.monotone_se}};
  cx.summary["note"] = bank_note();
  for (const auto& s : rep.summaries)
    cx.log << "T=" << fmt(s.horizon) << " rho=" << fmt(s.rho) << " sup deviation=" << fmt(s.sup_deviation)
           << " (se " << fmt(s.se_at_sup) << ")\n";
}

inline int scan_failed(Context& cx, const ScanReport& scan) {
  cx.summary["scan"] = {{"pass", false}, {"max_radius", scan.max_radius}, {"zero_row_error", scan.zero_row_error}};
  cx.log << "non-arithmetic scan failed (max radius " << fmt(scan.max_radius) << "); no Monte Carlo run\n";
  return cx.finish(false, "FAIL (non-arithmetic scan)");
}

inline TestBank bank_for(const ExperimentConfig& cfg, const GeneratorModel& model) {
  TestBank bank = TestBank::standard(model);
  bank.u_scales = cfg.u_scales;
  return bank;
}

inline int llt(Context& cx, bool with_rho) {
  const auto& cfg = cx.cfg;
  const auto [model, b] = build_problem(cfg);
  // Guard first: an arithmetic observable makes the Monte Carlo pointless.
  const ScanReport scan = llt_guard_scan(model, b, cfg.propagator, cfg.thresholds.scan_tolerance);
  if (!scan.pass) return scan_failed(cx, scan);
  const TestBank bank = bank_for(cfg, model);
  const std::vector<double> rhos = with_rho ? cfg.rho_list : std::vector<double>{0.0};
  const LLTReport rep = llt_rho_check(model, b, rhos, bank, cfg.horizons, cfg.reps, cfg.seed,
                                      llt_thresholds(cfg.thresholds), cfg.propagator);
  write_llt(cx, rep, bank);
  if (with_rho) {
    auto csv = cx.csv("_sigma", {{"lipschitz", fmt(rep.sigma_lipschitz)}}, {"rho", "entry", "cov"});
    for (std::size_t i = 0; i < rep.rhos.size(); ++i)
      for (Index r = 0; r < b.dim(); ++r)
        for (Index s = 0; s < b.dim(); ++s)
          csv.write({fmt(rep.rhos[i]), std::to_string(r) + ":" + std::to_string(s), fmt(rep.sigmas[i].cov(r, s))});
    cx.summary["sigma_continuous"] = rep.sigma_continuous;
    cx.summary["sigma_max_jump"] = rep.sigma_max_jump;
    cx.summary["sigma_lipschitz"] = rep.sigma_lipschitz;
  }
  return cx.finish(rep.pass);
}

inline int fastslow(Context& cx) {
  const auto& cfg = cx.cfg;
  GeneratorModel model = make_model(cfg.generator, cfg.labels);
  const FastSlowSystem sys = build_fastslow(cfg);
  const TestBank bank = bank_for(cfg, model);
  const LLTReport rep = fastslow_llt_check(model, sys, cfg.eps_list, bank, cfg.reps, cfg.seed,
                                           llt_thresholds(cfg.thresholds), {}, cfg.thresholds.duhamel_tolerance);
  if (rep.not_applicable) {
    cx.log << "forcing has no fluctuation; rescaled error is identically 0\n";
    return cx.finish(true, "NOT_APPLICABLE");
  }
  if (!rep.scan_pass) return scan_failed(cx, rep.scan);
  write_llt(cx, rep, bank);
  cx.summary["max_duhamel_residual"] = rep.max_duhamel_residual;
  cx.summary["duhamel_tolerance"] = cfg.thresholds.duhamel_tolerance;
  cx.log << "max Duhamel residual = " << fmt(rep.max_duhamel_residual) << '\n';
  return cx.finish(rep.pass);
}

}  // namespace detail

/// Runs one experiment and writes its artifacts. Returns the process exit code.
inline int run(const ExperimentConfig& cfg, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  try {
    if (cfg.threads > 0 && !std::getenv("SLLT_THREADS")) set_thread_count(cfg.threads);
    const auto dir = output_dir(cfg);
    std::filesystem::create_directories(dir);
    detail::Context cx{cfg, dir, log, config_hash(cfg), json::object()};
    cx.summary["experiment"] = cfg.experiment;
    cx.summary["config_hash"] = cx.hash;
    cx.summary["seed"] = cfg.seed;
    const std::string& e = cfg.experiment;
    if (e == "check-model") return detail::check_model(cx);
    if (e == "scan-spectrum") return detail::scan_spectrum(cx);
    if (e == "sigma") return detail::sigma(cx);
    if (e == "nagaev") return detail::nagaev(cx);
    if (e == "eigprod") return detail::eigprod(cx);
    if (e == "llt") return detail::llt(cx, false);
    if (e == "llt-rho") return detail::llt(cx, true);
    if (e == "fastslow") return detail::fastslow(cx);
    err << "config: ConfigError: no experiment selected\n";
    return kUsage;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return e.is_usage_error() ? kUsage : kNumeric;
  } catch (const nlohmann::json::exception& e) {
    err << "config: ConfigError: " << e.what() << '\n';
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "report: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "numeric: " << e.what() << '\n';
    return kNumeric;
  }
}

/// Dry run: the operations an experiment would perform, rough costs and the
/// effective configuration. Nothing is computed.
inline int describe(const ExperimentConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const std::string& e = cfg.experiment;
  if (e.empty()) {
    err << "config: ConfigError: describe needs an 'experiment' field\n";
    return kUsage;
  }
  const Index n = cfg.generator.rows();
  const Index d = cfg.dim();
  const std::size_t mus = 2;
  double whole_blocks = 0.0, path_time = 0.0;
  for (double h : cfg.horizons) {
    whole_blocks += std::floor(h);
    path_time += h;
  }
  out << "experiment: " << e << "\n";
  out << "state space: n = " << n << ", observable dimension d = " << d << "\n";
  out << "config hash: " << config_hash(cfg) << "\n";
  out << "plan:\n";
  out << "  validate_generator -> invariant_measure\n";
  if (e == "check-model") {
    out << "  ergodicity_certificate(T=" << fmt(cfg.mixing_horizon) << ") -> dyadic_mixing_time\n";
  } else if (e == "scan-spectrum") {
    out << "  nonarithmetic_scan: " << (cfg.t_grid.size() + 1) * cfg.alpha_grid.size() << " propagator solves\n";
    out << "  product_residual at t=" << fmt(cfg.residual_t) << ": T in " << json(cfg.residual_horizons).dump() << "\n";
    out << "  decay fits: " << cfg.decay_t.size() << " frequencies x T in [" << cfg.decay_first << ", "
        << cfg.decay_last << "]\n";
  } else if (e == "sigma") {
    out << "  sigma_total: " << cfg.quadrature_points << " Green-Kubo solves\n";
    out << "  hessian_fd (+ Richardson at h/2): " << cfg.quadrature_points << " nodes\n";
    out << "  lambda_gradient_check: 5 x 5 (alpha, beta) grid\n";
    if (cfg.mc_reps > 0)
      out << "  hessian_mc: " << cfg.mc_reps << " paths x T=" << fmt(cfg.mc_horizon) << " ("
          << fmt(static_cast<double>(cfg.mc_reps) * cfg.mc_horizon) << " path-time units)\n";
  } else if (e == "nagaev") {
    out << "  nagaev_value: " << cfg.t_grid.size() << " frequencies x " << whole_blocks + cfg.horizons.size()
        << " operator builds per frequency\n";
    out << "  char_function_mc: " << cfg.reps << " paths x " << mus << " initial laws x T list ("
        << fmt(static_cast<double>(cfg.reps) * mus * path_time) << " path-time units)\n";
  } else if (e == "eigprod") {
    out << "  sigma_total\n";
    out << "  dominant_decomposition: " << cfg.tau_grid.size() << " taus x " << whole_blocks
        << " blocks (floor(T) per (tau, T))\n";
  } else if (e == "llt" || e == "llt-rho" || e == "fastslow") {
    if (e == "fastslow") out << "  prepare_fastslow: averaged flow, U(t), propagator-weighted observable\n";
    out << "  nonarithmetic_scan (guard; FAIL stops before Monte Carlo)\n";
    out << "  sigma_total" << (e == "llt-rho" ? " per rho in " + json(cfg.rho_list).dump() : "") << "\n";
    double mc = 0.0;
    if (e == "fastslow") {
      for (double eps : cfg.eps_list) mc += cfg.fs_t_final / eps;
    } else {
      mc = path_time;
    }
    out << "  Monte Carlo: " << cfg.reps << " paths x " << mus << " initial laws ("
        << fmt(static_cast<double>(cfg.reps) * mus * mc) << " path-time units)\n";
    out << "  bank: 3 f x 2 g x " << cfg.u_scales.size() << " displacements\n";
  }
  out << "effective configuration:\n" << cfg.effective.dump(2) << "\n";
  return kPass;
}

}  // namespace sllt::cli
