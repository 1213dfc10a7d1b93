#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sllt/error.hpp"
#include "sllt/kernel.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/simulate.hpp"
#include "sllt/spectral.hpp"

namespace sllt {

using json = nlohmann::ordered_json;

struct Thresholds {
  double scan_tolerance = 1e-4;
  double nagaev_se_factor = 4.0;
  double nagaev_abs_slack = 1e-3;
  double eigprod_tolerance = 0.01;
  double fd_route_tolerance = 5e-4;
  double mc_se_factor = 4.0;
  double gradient_tolerance = 1e-5;
  double max_hessian_eigenvalue = -1e-6;
  double residual_ratio = 3.0;
  double llt_sup = 0.05;
  Index llt_min_reps = 1000000;
  double llt_monotone_se = 2.0;
  double duhamel_tolerance = 1e-6;
  double decay_rate = 0.95;
  double decay_r_squared = 0.99;
};

/// One experiment: the model, the observable, every numeric knob (all with
/// defaults) and the PASS thresholds.
struct ExperimentConfig {
  std::string experiment;  // optional; needed by `describe`
  std::uint64_t seed = 20240611;
  int threads = 0;
  std::string output_dir = "sllt_out";

  Matrix generator;
  std::vector<std::string> labels;
  Observable::Table coefficients;
  bool center = true;

  PropagatorConfig propagator;
  double mixing_horizon = 1.0;
  double h = 1e-3;
  int quadrature_points = 17;
  Index reps = 100000;
  std::vector<double> horizons;
  std::vector<Vector> t_grid;
  std::vector<double> alpha_grid;
  std::vector<Vector> tau_grid;
  std::vector<double> u_scales{0.0, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> rho_list{0.0, 0.25, 0.5};
  std::vector<double> eps_list{1.0 / 200.0};
  double mc_horizon = 200.0;
  Index mc_reps = 100000;
  double residual_t = 0.2;
  std::vector<double> residual_horizons{25, 50, 100};
  std::vector<Vector> decay_t;
  int decay_first = 10;
  int decay_last = 40;

  // Linear fast-slow system (fastslow only).
  bool has_fastslow = false;
  std::vector<std::vector<Observable::Poly>> fs_a;
  Observable::Table fs_v;
  double fs_t_final = 1.0;
  std::vector<double> fs_y0;

  Thresholds thresholds;
  json effective;  // config with every default filled in, used for the hash

  Index dim() const { return static_cast<Index>(coefficients.size()); }
};

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, "config", what); }

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
  if (!obj.is_object()) config_error("section '" + section + "' must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) config_error("unknown key '" + item.key() + "' in " + section);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(std::string("bad value for '") + key + "': " + e.what());
  }
}

/// A frequency grid entry is either a number (d = 1) or a list of d numbers.
inline std::vector<Vector> vector_list(const json& arr, Index d, const char* key) {
  if (!arr.is_array()) config_error(std::string(key) + " must be a list");
  std::vector<Vector> out;
  for (const auto& item : arr) {
    if (item.is_number()) {
      if (d != 1) config_error(std::string(key) + ": scalar entries need d = 1");
      out.push_back(Vector::Constant(1, item.get<double>()));
    } else if (item.is_array() && static_cast<Index>(item.size()) == d) {
      Vector v(d);
      for (Index j = 0; j < d; ++j) v(j) = item[static_cast<std::size_t>(j)].get<double>();
      out.push_back(v);
    } else {
      config_error(std::string(key) + ": entries must have length d");
    }
  }
  return out;
}

inline json vector_list_json(const std::vector<Vector>& vs) {
  json arr = json::array();
  for (const auto& v : vs) {
    if (v.size() == 1) {
      arr.push_back(v(0));
    } else {
      arr.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    }
  }
  return arr;
}

inline Observable::Table poly_table(const json& arr, const char* key) {
  if (!arr.is_array() || arr.empty()) config_error(std::string(key) + " must be a non-empty list");
  Observable::Table table;
  try {
    for (const auto& row : arr) {
      std::vector<Observable::Poly> polys;
      for (const auto& p : row) {
        if (p.is_number()) polys.push_back({p.get<double>()});
        else polys.push_back(p.get<std::vector<double>>());
      }
      table.push_back(std::move(polys));
    }
  } catch (const json::exception& e) {
    config_error(std::string(key) + ": " + e.what());
  }
  return table;
}

inline Index state_index(const json& v, const std::vector<std::string>& labels) {
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i < 0 || i >= static_cast<long long>(labels.size())) config_error("rate refers to an unknown state");
    return static_cast<Index>(i);
  }
  if (v.is_string()) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == v.get<std::string>()) return static_cast<Index>(i);
  }
  config_error("rate refers to an unknown state");
}

}  // namespace detail

/// `experiment` selects the experiment-specific defaults (T list, grids,
/// replica count); an empty name falls back to the config's own field.
inline ExperimentConfig parse_config(const json& root, std::string experiment = "") {
  using namespace detail;
  reject_unknown(root, {"experiment", "seed", "threads", "output_dir", "model", "observable", "propagator", "knobs",
                        "fastslow", "thresholds"},
                 "config");
  ExperimentConfig cfg;
  cfg.experiment = experiment.empty() ? get_or<std::string>(root, "experiment", "") : experiment;
  static const std::set<std::string> known{"", "check-model", "scan-spectrum", "sigma", "nagaev",
                                           "eigprod", "llt", "llt-rho", "fastslow"};
  if (!known.count(cfg.experiment)) config_error("unknown experiment '" + cfg.experiment + "'");
  cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
  cfg.threads = get_or<int>(root, "threads", cfg.threads);
  cfg.output_dir = get_or<std::string>(root, "output_dir", cfg.output_dir);

  if (!root.contains("model")) config_error("missing 'model' section");
  const json& model = root.at("model");
  reject_unknown(model, {"states", "rates", "generator"}, "model");
  if (model.contains("generator") == model.contains("rates")) config_error("model needs exactly one of 'rates' or 'generator'");
  if (model.contains("generator")) {
    const auto rows = get_or<std::vector<std::vector<double>>>(model, "generator", {});
    const Index n = static_cast<Index>(rows.size());
    cfg.generator = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      if (static_cast<Index>(rows[i].size()) != n) config_error("generator must be square");
      for (Index j = 0; j < n; ++j) cfg.generator(i, j) = rows[i][j];
    }
    for (Index i = 0; i < n; ++i) cfg.labels.push_back(std::to_string(i));
    if (model.contains("states")) config_error("'states' is implied by 'generator'");
  } else {
    if (!model.contains("states")) config_error("model needs 'states'");
    const json& states = model.at("states");
    if (states.is_number_integer()) {
      const auto n = states.get<long long>();
      if (n < 1) config_error("states must be >= 1");
      for (long long i = 0; i < n; ++i) cfg.labels.push_back(std::to_string(i));
    } else {
      cfg.labels = get_or<std::vector<std::string>>(model, "states", {});
    }
    const Index n = static_cast<Index>(cfg.labels.size());
    cfg.generator = Matrix::Zero(n, n);
    for (const auto& r : model.at("rates")) {
      if (!r.is_array() || r.size() != 3 || !r[2].is_number()) config_error("rates entries are [from, to, rate]");
      const Index from = state_index(r[0], cfg.labels), to = state_index(r[1], cfg.labels);
      if (from == to) config_error("rates must be off-diagonal");
      cfg.generator(from, to) += r[2].get<double>();
    }
    for (Index i = 0; i < n; ++i) cfg.generator(i, i) = -(cfg.generator.row(i).sum() - cfg.generator(i, i));
  }

  if (!root.contains("observable")) config_error("missing 'observable' section");
  const json& obs = root.at("observable");
  reject_unknown(obs, {"d", "coefficients", "center"}, "observable");
  cfg.coefficients = poly_table(obs.at("coefficients"), "coefficients");
  cfg.center = get_or<bool>(obs, "center", true);
  const Index d = static_cast<Index>(cfg.coefficients.size());
  if (obs.contains("d") && obs.at("d").get<Index>() != d) config_error("'d' disagrees with the coefficient table");

  if (root.contains("propagator")) {
    const json& p = root.at("propagator");
    reject_unknown(p, {"method", "steps", "refine_check"}, "propagator");
    const auto method = get_or<std::string>(p, "method", "magnus4");
    if (method == "magnus4") cfg.propagator.method = PropagatorConfig::Method::CommutatorFreeMagnus4;
    else if (method == "rk4") cfg.propagator.method = PropagatorConfig::Method::RungeKutta4;
    else config_error("propagator.method must be 'magnus4' or 'rk4'");
    cfg.propagator.steps = get_or<int>(p, "steps", cfg.propagator.steps);
    cfg.propagator.refine_check = get_or<bool>(p, "refine_check", cfg.propagator.refine_check);
  }

  // Defaults that depend on d or on the experiment.
  const std::string& kind = cfg.experiment;
  if (kind == "nagaev") {
    for (double s : uniform_grid(-3.0, 3.0, 13)) cfg.t_grid.push_back(Vector::Constant(d, s));
    cfg.horizons = {5.5, 10.25, 20.0};
  } else {
    for (double s : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) cfg.t_grid.push_back(Vector::Constant(d, s));
  }
  if (kind == "eigprod") cfg.horizons = {25.0, 100.0, 400.0};
  if (kind == "llt" || kind == "llt-rho") cfg.horizons = {50.0, 200.0};
  if (kind == "llt" || kind == "llt-rho" || kind == "fastslow") cfg.reps = 1000000;
  cfg.alpha_grid = {0.0, 0.5, 1.0};
  cfg.tau_grid = {Vector::Constant(d, 0.0), Vector::Constant(d, 1.0)};
  cfg.decay_t = {Vector::Constant(d, 1.0), Vector::Constant(d, 2.0)};
  const json knobs = root.contains("knobs") ? root.at("knobs") : json::object();
  reject_unknown(knobs, {"mixing_horizon", "h", "quadrature_points", "reps", "T_list", "t_grid", "alpha_grid",
                         "tau_grid", "u_scales", "rho_list", "eps_list", "mc_T", "mc_reps", "residual_t",
                         "residual_T", "decay_t", "decay_T"},
                 "knobs");
  cfg.mixing_horizon = get_or<double>(knobs, "mixing_horizon", cfg.mixing_horizon);
  cfg.h = get_or<double>(knobs, "h", cfg.h);
  cfg.quadrature_points = get_or<int>(knobs, "quadrature_points", cfg.quadrature_points);
  cfg.reps = get_or<Index>(knobs, "reps", cfg.reps);
  cfg.horizons = get_or<std::vector<double>>(knobs, "T_list", cfg.horizons);
  if (knobs.contains("t_grid")) cfg.t_grid = vector_list(knobs.at("t_grid"), d, "t_grid");
  cfg.alpha_grid = get_or<std::vector<double>>(knobs, "alpha_grid", cfg.alpha_grid);
  if (knobs.contains("tau_grid")) cfg.tau_grid = vector_list(knobs.at("tau_grid"), d, "tau_grid");
  cfg.u_scales = get_or<std::vector<double>>(knobs, "u_scales", cfg.u_scales);
  cfg.rho_list = get_or<std::vector<double>>(knobs, "rho_list", cfg.rho_list);
  cfg.eps_list = get_or<std::vector<double>>(knobs, "eps_list", cfg.eps_list);
  cfg.mc_horizon = get_or<double>(knobs, "mc_T", cfg.mc_horizon);
  cfg.mc_reps = get_or<Index>(knobs, "mc_reps", cfg.mc_reps);
  cfg.residual_t = get_or<double>(knobs, "residual_t", cfg.residual_t);
  cfg.residual_horizons = get_or<std::vector<double>>(knobs, "residual_T", cfg.residual_horizons);
  if (knobs.contains("decay_t")) cfg.decay_t = vector_list(knobs.at("decay_t"), d, "decay_t");
  if (knobs.contains("decay_T")) {
    const auto range = get_or<std::vector<int>>(knobs, "decay_T", {});
    if (range.size() != 2) config_error("decay_T is [first, last]");
    cfg.decay_first = range[0];
    cfg.decay_last = range[1];
  }

  if (root.contains("fastslow")) {
    const json& fs = root.at("fastslow");
    reject_unknown(fs, {"A", "v", "t_final", "y0"}, "fastslow");
    cfg.has_fastslow = true;
    if (!fs.contains("A") || !fs.contains("v")) config_error("fastslow needs 'A' and 'v'");
    cfg.fs_a = poly_table(fs.at("A"), "fastslow.A");
    cfg.fs_v = poly_table(fs.at("v"), "fastslow.v");
    cfg.fs_t_final = get_or<double>(fs, "t_final", 1.0);
    cfg.fs_y0 = get_or<std::vector<double>>(fs, "y0", std::vector<double>(cfg.fs_a.size(), 0.0));
  }

  if (root.contains("thresholds")) {
    const json& t = root.at("thresholds");
    reject_unknown(t, {"scan_tolerance", "nagaev_se_factor", "nagaev_abs_slack", "eigprod_tolerance",
                       "fd_route_tolerance", "mc_se_factor", "gradient_tolerance", "max_hessian_eigenvalue",
                       "residual_ratio", "llt_sup", "llt_min_reps", "llt_monotone_se", "duhamel_tolerance",
                       "decay_rate", "decay_r_squared"},
                   "thresholds");
    auto& th = cfg.thresholds;
    th.scan_tolerance = get_or<double>(t, "scan_tolerance", th.scan_tolerance);
    th.nagaev_se_factor = get_or<double>(t, "nagaev_se_factor", th.nagaev_se_factor);
    th.nagaev_abs_slack = get_or<double>(t, "nagaev_abs_slack", th.nagaev_abs_slack);
    th.eigprod_tolerance = get_or<double>(t, "eigprod_tolerance", th.eigprod_tolerance);
    th.fd_route_tolerance = get_or<double>(t, "fd_route_tolerance", th.fd_route_tolerance);
    th.mc_se_factor = get_or<double>(t, "mc_se_factor", th.mc_se_factor);
    th.gradient_tolerance = get_or<double>(t, "gradient_tolerance", th.gradient_tolerance);
    th.max_hessian_eigenvalue = get_or<double>(t, "max_hessian_eigenvalue", th.max_hessian_eigenvalue);
    th.residual_ratio = get_or<double>(t, "residual_ratio", th.residual_ratio);
    th.llt_sup = get_or<double>(t, "llt_sup", th.llt_sup);
    th.llt_min_reps = get_or<Index>(t, "llt_min_reps", th.llt_min_reps);
    th.llt_monotone_se = get_or<double>(t, "llt_monotone_se", th.llt_monotone_se);
    th.duhamel_tolerance = get_or<double>(t, "duhamel_tolerance", th.duhamel_tolerance);
    th.decay_rate = get_or<double>(t, "decay_rate", th.decay_rate);
    th.decay_r_squared = get_or<double>(t, "decay_r_squared", th.decay_r_squared);
  }

  // Effective configuration with defaults filled in. Thread count and output
  // directory do not affect results and are left out of the hash.
  json eff;
  eff["experiment"] = cfg.experiment;
  eff["seed"] = cfg.seed;
  json gen = json::array();
  for (Index i = 0; i < cfg.generator.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < cfg.generator.cols(); ++j) row.push_back(cfg.generator(i, j));
    gen.push_back(row);
  }
  eff["model"] = {{"states", cfg.labels}, {"generator", gen}};
  eff["observable"] = {{"d", d}, {"coefficients", cfg.coefficients}, {"center", cfg.center}};
  eff["propagator"] = {
      {"method", cfg.propagator.method == PropagatorConfig::Method::RungeKutta4 ? "rk4" : "magnus4"},
      {"steps", cfg.propagator.steps},
      {"refine_check", cfg.propagator.refine_check}};
  eff["knobs"] = {{"mixing_horizon", cfg.mixing_horizon},
                  {"h", cfg.h},
                  {"quadrature_points", cfg.quadrature_points},
                  {"reps", cfg.reps},
                  {"T_list", cfg.horizons},
                  {"t_grid", vector_list_json(cfg.t_grid)},
                  {"alpha_grid", cfg.alpha_grid},
                  {"tau_grid", vector_list_json(cfg.tau_grid)},
                  {"u_scales", cfg.u_scales},
                  {"rho_list", cfg.rho_list},
                  {"eps_list", cfg.eps_list},
                  {"mc_T", cfg.mc_horizon},
                  {"mc_reps", cfg.mc_reps},
                  {"residual_t", cfg.residual_t},
                  {"residual_T", cfg.residual_horizons},
                  {"decay_t", vector_list_json(cfg.decay_t)},
                  {"decay_T", {cfg.decay_first, cfg.decay_last}}};
  if (cfg.has_fastslow) {
    eff["fastslow"] = {{"A", cfg.fs_a}, {"v", cfg.fs_v}, {"t_final", cfg.fs_t_final}, {"y0", cfg.fs_y0}};
  }
  const auto& th = cfg.thresholds;
  eff["thresholds"] = {{"scan_tolerance", th.scan_tolerance},
                       {"nagaev_se_factor", th.nagaev_se_factor},
                       {"nagaev_abs_slack", th.nagaev_abs_slack},
                       {"eigprod_tolerance", th.eigprod_tolerance},
                       {"fd_route_tolerance", th.fd_route_tolerance},
                       {"mc_se_factor", th.mc_se_factor},
                       {"gradient_tolerance", th.gradient_tolerance},
                       {"max_hessian_eigenvalue", th.max_hessian_eigenvalue},
                       {"residual_ratio", th.residual_ratio},
                       {"llt_sup", th.llt_sup},
                       {"llt_min_reps", th.llt_min_reps},
                       {"llt_monotone_se", th.llt_monotone_se},
                       {"duhamel_tolerance", th.duhamel_tolerance},
                       {"decay_rate", th.decay_rate},
                       {"decay_r_squared", th.decay_r_squared}};
  cfg.effective = std::move(eff);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const std::string& experiment = "") {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "config", "cannot open " + path);
  json root;
  try {
    root = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, "config", std::string("parse error: ") + e.what());
  }
  return parse_config(root, experiment);
}

inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(cfg.effective.dump())); }

/// The validated model and (optionally centered) observable of a config.
inline std::pair<GeneratorModel, Observable> build_problem(const ExperimentConfig& cfg) {
  GeneratorModel model = make_model(cfg.generator, cfg.labels);
  Observable b(cfg.coefficients);
  if (b.states() != model.size()) {
    throw Error(ErrorKind::DimensionMismatch, "config", "observable has a different state count than the model");
  }
  if (cfg.center) b = b.center(model.nu);
  return {std::move(model), std::move(b)};
}

inline FastSlowSystem build_fastslow(const ExperimentConfig& cfg) {
  if (!cfg.has_fastslow) throw Error(ErrorKind::ConfigError, "config", "fastslow needs a 'fastslow' section");
  FastSlowSystem sys;
  sys.a.entries = cfg.fs_a;
  const Index d = sys.a.dim();
  for (const auto& row : sys.a.entries)
    if (static_cast<Index>(row.size()) != d) throw Error(ErrorKind::ConfigError, "config", "fastslow.A must be d x d");
  sys.v = Observable(cfg.fs_v);
  sys.t_final = cfg.fs_t_final;
  sys.y0 = Eigen::Map<const Vector>(cfg.fs_y0.data(), static_cast<Index>(cfg.fs_y0.size()));
  return sys;
}

}  // namespace sllt
