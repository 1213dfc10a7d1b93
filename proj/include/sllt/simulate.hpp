#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"
#include "sllt/rng.hpp"

namespace sllt {

/// Piecewise-constant path on [0, horizon]: states[k] holds on
/// [times[k-1], times[k]) with times[-1] = 0, and states.back() holds until
/// the horizon.
struct PathSample {
  std::vector<double> times;   // jump epochs, strictly increasing, < horizon
  std::vector<Index> states;   // states.size() == times.size() + 1
  Index x0 = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

/// Per-state holding rates and cumulative jump distributions.
class JumpChain {
 public:
  explicit JumpChain(const GeneratorModel& model) : n_(model.size()) {
    const Matrix& g = model.generator;
    rates_.resize(static_cast<std::size_t>(n_));
    targets_.resize(static_cast<std::size_t>(n_));
    cumulative_.resize(static_cast<std::size_t>(n_));
    for (Index x = 0; x < n_; ++x) {
      rates_[x] = -g(x, x);
      double acc = 0.0;
      for (Index y = 0; y < n_; ++y) {
        if (y == x || g(x, y) <= 0.0) continue;
        acc += g(x, y);
        targets_[x].push_back(y);
        cumulative_[x].push_back(acc);
      }
      for (double& c : cumulative_[x]) c /= acc;
    }
  }

  Index size() const noexcept { return n_; }

  Index draw_initial(const Vector& mu, CounterRng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (Index x = 0; x + 1 < mu.size(); ++x) {
      acc += mu(x);
      if (u < acc) return x;
    }
    return mu.size() - 1;
  }

  /// Calls visit(x, lo, hi) for each holding interval [lo, hi) of a path on
  /// [0, horizon]; the final interval is closed at the horizon.
  template <typename Visit>
  void walk(Index x0, double horizon, CounterRng& rng, Visit&& visit) const {
    Index x = x0;
    double now = 0.0;
    for (;;) {
      const double rate = rates_[x];
      if (rate <= 0.0) {
        if (n_ > 1) throw Error(ErrorKind::AbsorbingState, "sample_path", "reached a state with no exits");
        visit(x, now, horizon);
        return;
      }
      const double next = now + rng.exponential(rate);
      if (next >= horizon) {
        visit(x, now, horizon);
        return;
      }
      visit(x, now, next);
      x = jump(x, rng);
      now = next;
    }
  }

 private:
  Index jump(Index x, CounterRng& rng) const {
    const auto& cum = cumulative_[x];
    if (cum.size() == 1) return targets_[x][0];
    const double u = rng.uniform();
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const auto pos = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
    return targets_[x][pos];
  }

  Index n_;
  std::vector<double> rates_;
  std::vector<std::vector<Index>> targets_;
  std::vector<std::vector<double>> cumulative_;
};

inline PathSample sample_path(const GeneratorModel& model, double horizon, Index x0, std::uint64_t seed,
                              std::uint64_t stream = 0) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "sample_path", "horizon must be > 0");
  if (x0 < 0 || x0 >= model.size()) throw Error(ErrorKind::InvalidArgument, "sample_path", "invalid initial state");
  PathSample path;
  path.x0 = x0;
  path.horizon = horizon;
  path.seed = seed;
  CounterRng rng(seed, stream);
  JumpChain(model).walk(x0, horizon, rng, [&](Index x, double lo, double) {
    if (lo > 0.0) path.times.push_back(lo);
    path.states.push_back(x);
  });
  return path;
}

/// Compensated running sum of a d-vector.
class KahanVector {
 public:
  explicit KahanVector(Index d = 0) : sum_(static_cast<std::size_t>(d), 0.0), comp_(static_cast<std::size_t>(d), 0.0) {}
  void add(const double* v) {
    for (std::size_t j = 0; j < sum_.size(); ++j) {
      const double y = v[j] - comp_[j];
      const double t = sum_[j] + y;
      comp_[j] = (t - sum_[j]) - y;
      sum_[j] = t;
    }
  }
  Vector value() const { return Eigen::Map<const Vector>(sum_.data(), static_cast<Index>(sum_.size())); }
  const double* data() const { return sum_.data(); }

 private:
  std::vector<double> sum_, comp_;
};

/// Streaming accumulator of S(rho, T) = int_0^{(1 - rho) T} b(rho + s/T, X_s) ds
/// over holding intervals, in closed form.
class ShiftedFunctional {
 public:
  ShiftedFunctional(const Observable& b, double rho, double horizon)
      : b_(&b), rho_(rho), horizon_(horizon), limit_((1.0 - rho) * horizon), sum_(b.dim()),
        scratch_(static_cast<std::size_t>(b.dim())) {}

  void operator()(Index x, double lo, double hi) {
    if (lo > limit_) return;
    if (lo <= limit_) terminal_ = x;
    const double top = std::min(hi, limit_);
    if (top <= lo) return;
    b_->integral(x, rho_ + lo / horizon_, rho_ + top / horizon_, scratch_.data());
    for (double& v : scratch_) v *= horizon_;
    sum_.add(scratch_.data());
  }

  Vector value() const { return sum_.value(); }
  const double* data() const { return sum_.data(); }
  Index terminal_state() const noexcept { return terminal_; }
  double limit() const noexcept { return limit_; }

 private:
  const Observable* b_;
  double rho_, horizon_, limit_;
  KahanVector sum_;
  std::vector<double> scratch_;
  Index terminal_ = 0;
};

namespace detail {
template <typename Visit>
void replay(const PathSample& path, Visit&& visit) {
  double lo = 0.0;
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    const double hi = k < path.times.size() ? path.times[k] : path.horizon;
    visit(path.states[k], lo, hi);
    lo = hi;
  }
}
}  // namespace detail

inline Vector integrate_S_rho(const PathSample& path, const Observable& b, double rho, double horizon) {
  constexpr auto where = "integrate_S_rho";
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, where, "rho must lie in [0, 1)");
  if (path.horizon < (1.0 - rho) * horizon * (1.0 - 1e-12)) {
    throw Error(ErrorKind::HorizonMismatch, where, "path is shorter than (1 - rho) T");
  }
  ShiftedFunctional acc(b, rho, horizon);
  detail::replay(path, acc);
  return acc.value();
}

/// S_T = int_0^T b(s/T, X_s) ds along the path.
inline Vector integrate_S(const PathSample& path, const Observable& b, double horizon) {
  if (path.horizon != horizon) throw Error(ErrorKind::HorizonMismatch, "integrate_S", "path horizon differs from T");
  return integrate_S_rho(path, b, 0.0, horizon);
}

/// Endpoint samples of many replicas: S(rho_j, T) and X_{(1 - rho_j) T} for each
/// rho in the list, all read off the same path.
struct EndpointSamples {
  Index reps = 0;
  Index dim = 0;
  std::vector<double> rhos;
  std::vector<double> values;     // [rep][rho][coord]
  std::vector<Index> terminal;    // [rep][rho]

  const double* s(Index rep, std::size_t rho_idx = 0) const {
    return values.data() + (static_cast<std::size_t>(rep) * rhos.size() + rho_idx) * static_cast<std::size_t>(dim);
  }
  Index x(Index rep, std::size_t rho_idx = 0) const {
    return terminal[static_cast<std::size_t>(rep) * rhos.size() + rho_idx];
  }
};

/// Replica r draws X_0 ~ mu and its path from CounterRng(key, r).
inline EndpointSamples sample_endpoints(const GeneratorModel& model, const Observable& b, double horizon,
                                        const Vector& mu, Index reps, std::uint64_t key,
                                        std::vector<double> rhos = {0.0}) {
  if (b.states() != model.size() || mu.size() != model.size()) {
    throw Error(ErrorKind::DimensionMismatch, "sample_endpoints", "model, observable and mu disagree");
  }
  EndpointSamples out;
  out.reps = reps;
  out.dim = b.dim();
  out.rhos = std::move(rhos);
  const std::size_t nr = out.rhos.size();
  out.values.assign(static_cast<std::size_t>(reps) * nr * static_cast<std::size_t>(b.dim()), 0.0);
  out.terminal.assign(static_cast<std::size_t>(reps) * nr, 0);
  const JumpChain chain(model);
  const std::size_t chunks = static_cast<std::size_t>(std::max<Index>(1, std::min<Index>(reps, 64)));
  parallel_for(chunks, [&](std::size_t c) {
    const Index lo = static_cast<Index>(c) * reps / static_cast<Index>(chunks);
    const Index hi = static_cast<Index>(c + 1) * reps / static_cast<Index>(chunks);
    std::vector<ShiftedFunctional> accs;
    for (Index r = lo; r < hi; ++r) {
      CounterRng rng(key, static_cast<std::uint64_t>(r));
      const Index x0 = chain.draw_initial(mu, rng);
      accs.clear();
      for (double rho : out.rhos) accs.emplace_back(b, rho, horizon);
      chain.walk(x0, horizon, rng, [&](Index x, double a, double z) {
        for (auto& acc : accs) acc(x, a, z);
      });
      for (std::size_t j = 0; j < nr; ++j) {
        std::copy_n(accs[j].data(), b.dim(), out.values.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(r) * nr + j) * static_cast<std::size_t>(b.dim())));
        out.terminal[static_cast<std::size_t>(r) * nr + j] = accs[j].terminal_state();
      }
    }
  });
  return out;
}

struct CharEstimate {
  Complex mean;
  double se_re = 0.0;
  double se_im = 0.0;
  double se() const { return std::hypot(se_re, se_im); }
};

/// Sample mean of exp(i t . S_T) f(X_T) over endpoint samples, reduced in
/// replica order.
inline CharEstimate char_function_from(const EndpointSamples& samples, const Vector& t, const CVector& f,
                                       std::size_t rho_idx = 0) {
  double sum_re = 0.0, sum_im = 0.0, sq_re = 0.0, sq_im = 0.0;
  for (Index r = 0; r < samples.reps; ++r) {
    const double* s = samples.s(r, rho_idx);
    double phase = 0.0;
    for (Index j = 0; j < samples.dim; ++j) phase += t(j) * s[j];
    const Complex val = Complex(std::cos(phase), std::sin(phase)) * f(samples.x(r, rho_idx));
    sum_re += val.real();
    sum_im += val.imag();
    sq_re += val.real() * val.real();
    sq_im += val.imag() * val.imag();
  }
  const double n = static_cast<double>(samples.reps);
  CharEstimate est;
  est.mean = Complex(sum_re / n, sum_im / n);
  if (samples.reps > 1) {
    const double var_re = std::max(0.0, (sq_re - n * est.mean.real() * est.mean.real()) / (n - 1.0));
    const double var_im = std::max(0.0, (sq_im - n * est.mean.imag() * est.mean.imag()) / (n - 1.0));
    est.se_re = std::sqrt(var_re / n);
    est.se_im = std::sqrt(var_im / n);
  }
  return est;
}

inline CharEstimate char_function_mc(const GeneratorModel& model, const Observable& b, const Vector& t,
                                     double horizon, const CVector& f, const Vector& mu, Index reps,
                                     std::uint64_t seed) {
  if (reps < 100) throw Error(ErrorKind::InvalidArgument, "char_function_mc", "need at least 100 replicas");
  if (t.size() != b.dim()) throw Error(ErrorKind::DimensionMismatch, "char_function_mc", "frequency dimension");
  return char_function_from(sample_endpoints(model, b, horizon, mu, reps, seed), t, f);
}

// ---------------------------------------------------------------------------
// Linear fast-slow system  dY = [A(s/t) Y + v(s/t, X_{s/eps})] ds.

/// d x d matrix whose entries are polynomials in rescaled time alpha = s / t.
struct PolyMatrix {
  std::vector<std::vector<Observable::Poly>> entries;

  static PolyMatrix constant(const Matrix& m) {
    PolyMatrix out;
    out.entries.resize(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) out.entries[i].push_back({m(i, j)});
    return out;
  }

  Index dim() const noexcept { return static_cast<Index>(entries.size()); }

  void evaluate(double alpha, Matrix& out) const {
    const Index d = dim();
    out.resize(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) out(i, j) = Observable::horner(entries[i][j], alpha);
  }

  Matrix evaluate(double alpha) const {
    Matrix m;
    evaluate(alpha, m);
    return m;
  }
};

struct FastSlowSystem {
  PolyMatrix a;
  Observable v;   // forcing, in rescaled time alpha = s / t_final
  double t_final = 1.0;
  Vector y0;
};

struct FastSlowConfig {
  int substeps_per_interval = 1;    // RK4 substeps per holding interval (at most)
  double min_step_fraction = 1e-4;  // substeps never shorter than this * t_final
  double max_step_fraction = 1.0 / 128.0;
  int deterministic_steps = 1 << 14;
};

/// Deterministic ingredients shared by every replica: averaged endpoint y_t,
/// fundamental matrix U(t), and the reduced observable
/// b(alpha, x) = U(t) U(alpha t)^{-1} (v(alpha, x) - vbar(alpha)).
struct FastSlowPlan {
  FastSlowSystem system;
  Observable fluctuation;   // v - vbar
  Observable vbar;          // nu-average of v (same value at every state)
  Vector y_bar;
  Matrix u_final;
  Observable reduced;
  double fit_error = 0.0;
};

namespace detail {

/// RK4 on y' = A(alpha) y + forcing(alpha), alpha = s / t_final, from s0 to s1.
template <typename Forcing>
void rk4_affine(const PolyMatrix& a, Forcing&& forcing, double t_final, double s0, double s1, int steps,
                Vector& y, Matrix& scratch_a, Vector& k1, Vector& k2, Vector& k3, Vector& k4, Vector& tmp,
                Vector& force) {
  const double h = (s1 - s0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double s = s0 + i * h;
    auto rhs = [&](double at, const Vector& state, Vector& out) {
      const double alpha = at / t_final;
      a.evaluate(alpha, scratch_a);
      forcing(alpha, force);
      out.noalias() = scratch_a * state;
      out += force;
    };
    rhs(s, y, k1);
    tmp = y + (0.5 * h) * k1;
    rhs(s + 0.5 * h, tmp, k2);
    tmp = y + (0.5 * h) * k2;
    rhs(s + 0.5 * h, tmp, k3);
    tmp = y + h * k3;
    rhs(s + h, tmp, k4);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

/// RK4 on K' = -K A(s / t) (right_multiply, solved for K(s) = U(t) U(s)^{-1})
/// or on U' = A(s / t) U.
inline void rk4_matrix(const PolyMatrix& a, double t_final, double s0, double s1, int steps, Matrix& k,
                       bool right_multiply) {
  const double h = (s1 - s0) / steps;
  auto rhs = [&](double at, const Matrix& m) -> Matrix {
    const Matrix am = a.evaluate(std::clamp(at / t_final, 0.0, 1.0));
    return right_multiply ? Matrix(-(m * am)) : Matrix(am * m);
  };
  for (int i = 0; i < steps; ++i) {
    const double s = s0 + i * h;
    const Matrix c1 = rhs(s, k);
    const Matrix c2 = rhs(s + 0.5 * h, k + 0.5 * h * c1);
    const Matrix c3 = rhs(s + 0.5 * h, k + 0.5 * h * c2);
    const Matrix c4 = rhs(s + h, k + h * c3);
    k += (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
  }
}

/// K(alpha) = U(t) U(alpha t)^{-1}, from dK/ds = -K A(s), K(t) = I.
inline Matrix propagator_to_end(const PolyMatrix& a, double t_final, double alpha, int steps) {
  Matrix k = Matrix::Identity(a.dim(), a.dim());
  const int n = std::max(8, static_cast<int>(std::ceil(steps * (1.0 - alpha))));
  if (alpha < 1.0) rk4_matrix(a, t_final, t_final, alpha * t_final, n, k, true);
  return k;
}

}  // namespace detail

inline FastSlowPlan prepare_fastslow(const GeneratorModel& model, const FastSlowSystem& system,
                                     const FastSlowConfig& cfg = {}) {
  constexpr auto where = "fastslow_run";
  const Index d = system.a.dim();
  if (system.v.dim() != d || system.y0.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, where, "A, v and y0 must share the dimension");
  }
  if (system.v.states() != model.size()) throw Error(ErrorKind::DimensionMismatch, where, "v has wrong state count");
  if (!(system.t_final > 0.0)) throw Error(ErrorKind::InvalidArgument, where, "t_final must be > 0");
  FastSlowPlan plan;
  plan.system = system;
  plan.fluctuation = system.v.center(model.nu);
  {
    const auto mean = system.v.mean_coefficients(model.nu);
    Observable::Table t(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) t[j].assign(static_cast<std::size_t>(model.size()), mean[j]);
    plan.vbar = Observable(std::move(t));
  }

  // Averaged flow and fundamental matrix.
  Matrix scratch;
  Vector k1(d), k2(d), k3(d), k4(d), tmp(d), force(d);
  plan.y_bar = system.y0;
  detail::rk4_affine(system.a, [&](double alpha, Vector& out) { out = plan.vbar.evaluate(alpha, 0); },
                     system.t_final, 0.0, system.t_final, cfg.deterministic_steps, plan.y_bar, scratch, k1, k2,
                     k3, k4, tmp, force);
  plan.u_final = Matrix::Identity(d, d);
  detail::rk4_matrix(system.a, system.t_final, 0.0, system.t_final, cfg.deterministic_steps, plan.u_final, false);

  const auto reduced_at = [&](double alpha, Index x) -> Vector {
    return detail::propagator_to_end(system.a, system.t_final, alpha, cfg.deterministic_steps) *
           plan.fluctuation.evaluate(alpha, x);
  };
  plan.reduced = fit_observable(d, model.size(), reduced_at);
  for (double alpha : {0.0, 0.173, 0.5, 0.711, 0.95, 1.0}) {
    for (Index x = 0; x < model.size(); ++x) {
      plan.fit_error = std::max(plan.fit_error, (plan.reduced.evaluate(alpha, x) - reduced_at(alpha, x)).cwiseAbs().maxCoeff());
    }
  }
  plan.reduced = plan.reduced.center(model.nu);
  return plan;
}

struct FastSlowRun {
  double eps = 0.0;
  double t_final = 0.0;
  Vector y_eps;
  Vector y_bar;
  Vector rescaled_error;   // (Y_t^eps - y_t) / eps
  Matrix u;                // U(t_final)
  Vector duhamel;          // int_0^{t/eps} b(s eps / t, X_s) ds with the reduced b
  double duhamel_residual = 0.0;
  Index terminal_state = 0;
};

/// Integrates one replica. Jump epochs are step boundaries, so the forcing is
/// smooth on every step.
inline FastSlowRun fastslow_run(const JumpChain& chain, const FastSlowPlan& plan, double eps, Index x0,
                                CounterRng& rng, const FastSlowConfig& cfg = {}) {
  constexpr auto where = "fastslow_run";
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, where, "eps must be > 0");
  const auto& sys = plan.system;
  const Index d = sys.a.dim();
  const double t_final = sys.t_final;
  const double fast_horizon = t_final / eps;
  FastSlowRun run;
  run.eps = eps;
  run.t_final = t_final;
  run.y_bar = plan.y_bar;
  run.u = plan.u_final;

  Vector y = sys.y0;
  Matrix scratch;
  Vector k1(d), k2(d), k3(d), k4(d), tmp(d), force(d);
  ShiftedFunctional duhamel(plan.reduced, 0.0, fast_horizon);
  const double min_step = cfg.min_step_fraction * t_final;
  const double max_step = cfg.max_step_fraction * t_final;
  chain.walk(x0, fast_horizon, rng, [&](Index x, double lo, double hi) {
    duhamel(x, lo, hi);
    const double s0 = eps * lo, s1 = std::min(t_final, eps * hi);
    const double len = s1 - s0;
    if (len <= 0.0) return;
    const double h = std::max(len / cfg.substeps_per_interval, min_step);
    const int steps = std::max({1, static_cast<int>(std::ceil(len / h - 1e-12)),
                                static_cast<int>(std::ceil(len / max_step - 1e-12))});
    detail::rk4_affine(
        sys.a,
        [&](double alpha, Vector& out) {
          for (Index j = 0; j < d; ++j) out(j) = Observable::horner(sys.v.poly(j, x), alpha);
        },
        t_final, s0, s1, steps, y, scratch, k1, k2, k3, k4, tmp, force);
  });
  run.y_eps = y;
  run.rescaled_error = (y - plan.y_bar) / eps;
  run.duhamel = duhamel.value();
  run.duhamel_residual = (run.rescaled_error - run.duhamel).cwiseAbs().maxCoeff();
  run.terminal_state = duhamel.terminal_state();
  return run;
}

inline FastSlowRun fastslow_run(const GeneratorModel& model, const FastSlowPlan& plan, double eps, Index x0,
                                std::uint64_t seed, const FastSlowConfig& cfg = {}) {
  CounterRng rng(seed, 0);
  return fastslow_run(JumpChain(model), plan, eps, x0, rng, cfg);
}

}  // namespace sllt
