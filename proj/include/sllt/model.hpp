#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/linalg.hpp"

namespace sllt {

/// Finite-state continuous-time Markov chain given by its rate matrix.
///
/// Built in two steps: validate_generator() checks the rates and returns a
/// skeleton without `nu`; make_model() also fills in the invariant law and the
/// dyadic mixing time. All members are plain values, safe to share.
struct GeneratorModel {
  std::vector<std::string> labels;
  Matrix generator;
  Vector nu;                  // empty until computed
  double mixing_time = 0.0;   // smallest 2^k with 2 * certificate <= 0.5

  Index size() const noexcept { return generator.rows(); }
  bool has_invariant_measure() const noexcept { return nu.size() == generator.rows(); }
};

struct TransitionMatrix {
  double s = 0.0;
  Matrix p;
};

namespace detail {

inline std::vector<bool> reachable(const Matrix& g, Index from, bool reverse) {
  const Index n = g.rows();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<Index> stack{from};
  seen[static_cast<std::size_t>(from)] = true;
  while (!stack.empty()) {
    const Index x = stack.back();
    stack.pop_back();
    for (Index y = 0; y < n; ++y) {
      if (y == x || seen[static_cast<std::size_t>(y)]) continue;
      const double rate = reverse ? g(y, x) : g(x, y);
      if (rate > 0.0) {
        seen[static_cast<std::size_t>(y)] = true;
        stack.push_back(y);
      }
    }
  }
  return seen;
}

}  // namespace detail

/// True iff the positive-rate graph is strongly connected.
inline bool is_irreducible(const Matrix& g) {
  if (g.rows() <= 1) return true;
  const auto fwd = detail::reachable(g, 0, false);
  const auto bwd = detail::reachable(g, 0, true);
  return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

inline GeneratorModel validate_generator(const Matrix& g, std::vector<std::string> labels = {}) {
  constexpr auto where = "validate_generator";
  if (g.rows() != g.cols() || g.rows() == 0) {
    throw Error(ErrorKind::NotSquare, where, "generator must be a non-empty square matrix");
  }
  if (!g.allFinite()) throw Error(ErrorKind::InvalidArgument, where, "generator has non-finite entries");
  const Index n = g.rows();
  if (labels.empty()) {
    for (Index i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  }
  if (static_cast<Index>(labels.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, where, "label count differs from state count");
  }
  const double scale = std::max(1.0, max_abs(g));
  for (Index x = 0; x < n; ++x) {
    for (Index y = 0; y < n; ++y) {
      if (x != y && g(x, y) < 0.0) {
        throw Error(ErrorKind::NegativeRate, where,
                    "rate " + labels[x] + " -> " + labels[y] + " is negative");
      }
    }
    if (std::abs(g.row(x).sum()) > 1e-12 * scale) {
      throw Error(ErrorKind::NonConservative, where, "row " + labels[x] + " does not sum to zero");
    }
  }
  if (!is_irreducible(g)) {
    throw Error(ErrorKind::Reducible, where, "positive-rate graph is not strongly connected");
  }
  GeneratorModel model;
  model.labels = std::move(labels);
  model.generator = g;
  return model;
}

/// Solves nu G = 0, sum(nu) = 1 directly from the null space of G^T.
inline Vector invariant_measure(const GeneratorModel& model) {
  constexpr auto where = "invariant_measure";
  const Matrix& g = model.generator;
  const Index n = g.rows();
  if (n == 1) return Vector::Ones(1);
  Eigen::FullPivLU<Matrix> kernel_lu(g.transpose());
  kernel_lu.setThreshold(1e-12);
  if (kernel_lu.dimensionOfKernel() > 1) {
    throw Error(ErrorKind::Reducible, where, "invariant measure is not unique");
  }
  Matrix a = g.transpose();
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw Error(ErrorKind::Reducible, where, "stationarity system is singular");
  Vector nu = lu.solve(rhs);
  // one step of iterative refinement
  nu += lu.solve(rhs - a * nu);
  if ((nu.array() <= 0.0).any()) {
    throw Error(ErrorKind::Reducible, where, "invariant measure has non-positive entries");
  }
  return nu / nu.sum();
}

/// P(s) = exp(sG).
inline TransitionMatrix transition_matrix(const GeneratorModel& model, double s) {
  if (!(s >= 0.0)) throw Error(ErrorKind::InvalidArgument, "transition_matrix", "time must be >= 0");
  if (s == 0.0) return {0.0, Matrix::Identity(model.size(), model.size())};
  Matrix scaled = s * model.generator;
  return {s, expm(scaled)};
}

/// sup_x TV(P(horizon, x, .), nu). The chain mixes in the Doeblin sense at
/// `horizon` iff the value is < 1.
inline double ergodicity_certificate(const GeneratorModel& model, double horizon) {
  if (!model.has_invariant_measure()) {
    throw Error(ErrorKind::InvalidArgument, "ergodicity_certificate", "model has no invariant measure");
  }
  const Matrix p = transition_matrix(model, horizon).p;
  double worst = 0.0;
  for (Index x = 0; x < p.rows(); ++x) {
    worst = std::max(worst, 0.5 * (p.row(x).transpose() - model.nu).cwiseAbs().sum());
  }
  return worst;
}

/// Smallest dyadic time 2^k (k >= -20) at which P - Pi contracts bounded
/// functions by `threshold` in sup norm, i.e. 2 * certificate <= threshold.
inline double dyadic_mixing_time(const GeneratorModel& model, double threshold = 0.5) {
  double horizon = std::ldexp(1.0, -20);
  for (int k = -20; k < 200; ++k, horizon *= 2.0) {
    if (2.0 * ergodicity_certificate(model, horizon) <= threshold) return horizon;
  }
  throw Error(ErrorKind::NonConvergence, "dyadic_mixing_time", "chain did not mix below threshold");
}

/// validate_generator + invariant_measure + dyadic mixing time.
inline GeneratorModel make_model(const Matrix& g, std::vector<std::string> labels = {}) {
  GeneratorModel model = validate_generator(g, std::move(labels));
  model.nu = invariant_measure(model);
  model.mixing_time = dyadic_mixing_time(model);
  return model;
}

/// Slowest relaxation time 1/|Re mu_2| of G (infinity for a single state).
inline double relaxation_time(const GeneratorModel& model) {
  if (model.size() <= 1) return 0.0;
  Eigen::EigenSolver<Matrix> es(model.generator, false);
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double re = -es.eigenvalues()(i).real();
    if (re > 1e-10) gap = std::min(gap, re);
  }
  return 1.0 / gap;
}

}  // namespace sllt
