#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "sllt/error.hpp"
#include "sllt/linalg.hpp"

namespace sllt {

/// Vector observable b(alpha, x) in R^d on n states. Each coordinate at each
/// state is a polynomial in alpha in [0, 1], stored as ascending coefficients.
class Observable {
 public:
  using Poly = std::vector<double>;
  /// coeffs[j][x] is the polynomial for output coordinate j at state x.
  using Table = std::vector<std::vector<Poly>>;

  static constexpr int default_max_degree = 16;

  Observable() = default;

  Observable(Table coeffs, int max_degree = default_max_degree) : coeffs_(std::move(coeffs)) {
    constexpr auto where = "Observable";
    if (coeffs_.empty() || coeffs_.front().empty()) {
      throw Error(ErrorKind::DimensionMismatch, where, "observable needs d >= 1 and n >= 1");
    }
    const std::size_t n = coeffs_.front().size();
    for (auto& row : coeffs_) {
      if (row.size() != n) throw Error(ErrorKind::DimensionMismatch, where, "ragged coefficient table");
      for (auto& p : row) {
        if (p.empty()) p.push_back(0.0);
        if (static_cast<int>(p.size()) - 1 > max_degree) {
          throw Error(ErrorKind::InvalidArgument, where, "polynomial degree exceeds the cap");
        }
        for (double c : p) {
          if (!std::isfinite(c)) throw Error(ErrorKind::InvalidArgument, where, "non-finite coefficient");
        }
      }
    }
  }

  static Observable zero(Index d, Index n) {
    return Observable(Table(static_cast<std::size_t>(d), std::vector<Poly>(static_cast<std::size_t>(n), Poly{0.0})));
  }

  /// b(alpha, x) = values(j, x), independent of alpha.
  static Observable constant_in_alpha(const Matrix& values) {
    Table t(static_cast<std::size_t>(values.rows()));
    for (Index j = 0; j < values.rows(); ++j) {
      for (Index x = 0; x < values.cols(); ++x) t[j].push_back(Poly{values(j, x)});
    }
    return Observable(std::move(t));
  }

  Index dim() const noexcept { return static_cast<Index>(coeffs_.size()); }
  Index states() const noexcept { return coeffs_.empty() ? 0 : static_cast<Index>(coeffs_.front().size()); }
  bool centered() const noexcept { return centered_; }
  const Table& coefficients() const noexcept { return coeffs_; }
  const Poly& poly(Index j, Index x) const { return coeffs_[j][x]; }

  int degree() const noexcept {
    std::size_t deg = 0;
    for (const auto& row : coeffs_)
      for (const auto& p : row) deg = std::max(deg, p.size() - 1);
    return static_cast<int>(deg);
  }

  Vector evaluate(double alpha, Index x) const {
    check(alpha, x, "evaluate");
    Vector out(dim());
    for (Index j = 0; j < dim(); ++j) out(j) = horner(coeffs_[j][x], alpha);
    return out;
  }

  /// d x n matrix of b(alpha, .).
  Matrix values(double alpha) const {
    check(alpha, 0, "evaluate");
    Matrix out(dim(), states());
    for (Index j = 0; j < dim(); ++j)
      for (Index x = 0; x < states(); ++x) out(j, x) = horner(coeffs_[j][x], alpha);
    return out;
  }

  Vector derivative(double alpha, Index x, int order) const {
    if (order != 1 && order != 2) throw Error(ErrorKind::InvalidArgument, "derivative_alpha", "order must be 1 or 2");
    check(alpha, x, "derivative_alpha");
    Vector out(dim());
    for (Index j = 0; j < dim(); ++j) {
      const Poly& p = coeffs_[j][x];
      double acc = 0.0;
      for (std::size_t k = p.size(); k-- > static_cast<std::size_t>(order);) {
        const double falling = order == 1 ? static_cast<double>(k) : static_cast<double>(k * (k - 1));
        acc = acc * alpha + falling * p[k];
      }
      out(j) = acc;
    }
    return out;
  }

  /// Integral of b(., x) over [lo, hi] in closed form. Uses
  /// hi^{k+1} - lo^{k+1} = (hi - lo) sum_i lo^i hi^{k-i} so that short
  /// intervals do not cancel catastrophically.
  void integral(Index x, double lo, double hi, double* out) const {
    const double width = hi - lo;
    for (Index j = 0; j < dim(); ++j) {
      const Poly& p = coeffs_[j][x];
      double acc = 0.0;
      double hpow = 1.0;  // hi^k
      double sym = 0.0;   // sum_{i=0}^{k} lo^i hi^{k-i}
      for (std::size_t k = 0; k < p.size(); ++k) {
        sym = (k == 0) ? 1.0 : sym * lo + hpow * hi;
        if (k > 0) hpow *= hi;
        acc += p[k] * sym / static_cast<double>(k + 1);
      }
      out[j] = width * acc;
    }
  }

  Vector integral(Index x, double lo, double hi) const {
    Vector out(dim());
    integral(x, lo, hi, out.data());
    return out;
  }

  /// Polynomial coefficients of sum_x nu(x) b(alpha, x), per coordinate.
  std::vector<Poly> mean_coefficients(const Vector& nu) const {
    if (nu.size() != states()) throw Error(ErrorKind::DimensionMismatch, "center", "nu has wrong length");
    std::vector<Poly> mean(static_cast<std::size_t>(dim()));
    for (Index j = 0; j < dim(); ++j) {
      for (Index x = 0; x < states(); ++x) {
        const Poly& p = coeffs_[j][x];
        if (mean[j].size() < p.size()) mean[j].resize(p.size(), 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) mean[j][k] += nu(x) * p[k];
      }
    }
    return mean;
  }

  /// Whether every coefficient of the nu-mean is below 1e-12 (relative to the
  /// coefficient scale).
  bool has_zero_mean(const Vector& nu) const {
    const double tol = 1e-12 * std::max(1.0, coefficient_scale());
    for (const auto& p : mean_coefficients(nu))
      for (double c : p)
        if (std::abs(c) > tol) return false;
    return true;
  }

  /// b - <nu, b>, coefficient-wise. Already-centered input comes back with
  /// identical coefficients.
  Observable center(const Vector& nu) const {
    Observable out = *this;
    if (!has_zero_mean(nu)) {
      const auto mean = mean_coefficients(nu);
      for (Index j = 0; j < dim(); ++j) {
        for (Index x = 0; x < states(); ++x) {
          Poly& p = out.coeffs_[j][x];
          if (p.size() < mean[j].size()) p.resize(mean[j].size(), 0.0);
          for (std::size_t k = 0; k < mean[j].size(); ++k) p[k] -= mean[j][k];
        }
      }
    }
    out.centered_ = true;
    return out;
  }

  Observable scaled(double c) const {
    Observable out = *this;
    for (auto& row : out.coeffs_)
      for (auto& p : row)
        for (double& v : p) v *= c;
    return out;
  }

  /// Upper bound on sup |b_j(alpha, x)| over [0,1] x states.
  double sup_bound() const {
    double bound = 0.0;
    for (const auto& row : coeffs_)
      for (const auto& p : row) {
        double s = 0.0;
        for (double c : p) s += std::abs(c);
        bound = std::max(bound, s);
      }
    return bound;
  }

  double coefficient_scale() const {
    double s = 0.0;
    for (const auto& row : coeffs_)
      for (const auto& p : row)
        for (double c : p) s = std::max(s, std::abs(c));
    return s;
  }

  static double horner(const Poly& p, double alpha) {
    double acc = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) acc = acc * alpha + p[k];
    return acc;
  }

 private:
  void check(double& alpha, Index x, const char* where) const {
    // Tolerate rounding at the interval ends (e.g. alpha + r (beta - alpha)).
    if (!(alpha >= -1e-12 && alpha <= 1.0 + 1e-12)) {
      throw Error(ErrorKind::AlphaOutOfRange, where, "alpha = " + std::to_string(alpha) + " outside [0, 1]");
    }
    alpha = std::clamp(alpha, 0.0, 1.0);
    if (x < 0 || x >= states()) throw Error(ErrorKind::InvalidArgument, where, "state index out of range");
  }

  Table coeffs_;
  bool centered_ = false;
};

inline Vector evaluate(const Observable& b, double alpha, Index x) { return b.evaluate(alpha, x); }

inline Observable center(const Observable& b, const Vector& nu) { return b.center(nu); }

inline Vector derivative_alpha(const Observable& b, double alpha, Index x, int order) {
  return b.derivative(alpha, x, order);
}

/// alpha -> b(a0 + slope * alpha, x), expanded binomially. Used for the
/// rho-shifted observable b(rho + (1 - rho) alpha, x).
inline Observable reparametrize(const Observable& b, double a0, double slope) {
  Observable::Table table = b.coefficients();
  for (auto& row : table) {
    for (auto& p : row) {
      Observable::Poly out(p.size(), 0.0);
      // Horner in the composed variable: acc <- acc * (a0 + slope alpha) + c_k.
      for (std::size_t k = p.size(); k-- > 0;) {
        for (std::size_t i = out.size(); i-- > 0;) {
          out[i] = out[i] * a0 + (i > 0 ? out[i - 1] * slope : 0.0);
        }
        out[0] += p[k];
      }
      p = std::move(out);
    }
  }
  return Observable(std::move(table));
}

struct SpanRow {
  double alpha = 0.0;
  Index rank = 0;
  double smallest_singular_value = 0.0;
};

struct SpanReport {
  std::vector<SpanRow> rows;
  bool spans = true;  // rank == d at every alpha
};

/// Rank of the d x n matrix [b(alpha, x)]_x on an alpha grid.
inline SpanReport span_check(const Observable& b, const std::vector<double>& alpha_grid) {
  SpanReport report;
  for (double alpha : alpha_grid) {
    const Matrix m = b.values(alpha);
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
      if (sv(i) > tol) ++rank;
    const double smallest = b.dim() <= sv.size() ? sv(b.dim() - 1) : 0.0;
    report.rows.push_back({alpha, rank, smallest});
    if (rank < b.dim()) report.spans = false;
  }
  return report;
}

/// Degree-`degree` interpolant of fn(alpha, x) at Chebyshev points of [0,1],
/// returned in the monomial basis. Used to represent smooth but
/// non-polynomial observables (e.g. propagator-weighted forcing).
inline Observable fit_observable(Index d, Index n, const std::function<Vector(double, Index)>& fn,
                                 int degree = Observable::default_max_degree) {
  const int m = degree + 1;
  Matrix vandermonde(m, m);
  std::vector<double> nodes(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    nodes[i] = 0.5 - 0.5 * std::cos(std::numbers::pi * (2.0 * i + 1.0) / (2.0 * m));
    double pw = 1.0;
    for (int k = 0; k < m; ++k, pw *= nodes[i]) vandermonde(i, k) = pw;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(vandermonde);
  Observable::Table table(static_cast<std::size_t>(d), std::vector<Observable::Poly>(static_cast<std::size_t>(n)));
  for (Index x = 0; x < n; ++x) {
    Matrix samples(m, d);
    for (int i = 0; i < m; ++i) samples.row(i) = fn(nodes[i], x).transpose();
    const Matrix c = qr.solve(samples);
    for (Index j = 0; j < d; ++j) {
      table[j][x].assign(c.col(j).data(), c.col(j).data() + m);
    }
  }
  return Observable(std::move(table), degree);
}

}  // namespace sllt
