#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pzero {

// Closed-form detectability limits for source recovery on connected random
// graphs, plus the logistic-growth model that ties them to time.

namespace detail {
inline void require_epidemic(double r0, const char* fn) {
  if (!(r0 > 1.0)) throw std::domain_error(std::string(fn) + ": no epidemic regime (r0 <= 1)");
}
}  // namespace detail

/// Time horizon ln(n) / (gamma (r0 - 1)) past which the source is not
/// recoverable.
template <typename Scalar>
Scalar t_max(Scalar n, Scalar gamma, Scalar r0) {
  detail::require_epidemic(static_cast<double>(r0), "t_max");
  if (!(n >= Scalar(2))) throw std::invalid_argument("t_max: n must be >= 2");
  if (!(gamma > Scalar(0))) throw std::invalid_argument("t_max: gamma must be positive");
  return std::log(n) / (gamma * (r0 - Scalar(1)));
}

/// Triangle-ambiguity upper bound on top-1 accuracy:
/// 1/3 + 2/3 (1 - p)^C(k, 2) with k = gi_size * p, C(k, 2) = max(0, k(k-1)/2).
template <typename Scalar>
Scalar p_max(Scalar gi_size, Scalar p) {
  if (!(p >= Scalar(0) && p <= Scalar(1))) throw std::invalid_argument("p_max: p must lie in [0, 1]");
  if (!(gi_size >= Scalar(0))) throw std::invalid_argument("p_max: gi_size must be >= 0");
  const Scalar k = gi_size * p;
  const Scalar pairs = std::max(Scalar(0), k * (k - Scalar(1)) / Scalar(2));
  if (pairs == Scalar(0)) return Scalar(1);
  return Scalar(1) / Scalar(3) + Scalar(2) / Scalar(3) * std::pow(Scalar(1) - p, pairs);
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

/// Modelled size of the infected subgraph at time t:
/// n (1 - logistic(gamma (r0 - 1) (t_max - t))).
template <typename Scalar>
Scalar expected_gi_size(Scalar n, Scalar gamma, Scalar r0, Scalar t) {
  const Scalar horizon = t_max(n, gamma, r0);
  return n * (Scalar(1) - logistic(gamma * (r0 - Scalar(1)) * (horizon - t)));
}

struct BoundPoint {
  double t;
  double expected_gi;
  double p_max;
};

struct BoundCurve {
  double n, p, gamma, r0;
  double t_max;
  std::vector<BoundPoint> points;

  /// CSV rows "r0,t,expected_gi,p_max" (no header).
  std::string csv_rows() const;
};

BoundCurve bound_curve(double n, double p, double gamma, double r0, std::span<const double> t_grid);

/// Result of fitting s(t) = lo + (hi - lo) * logistic(rate (midpoint - t)).
struct LogisticFit {
  double rate;
  double midpoint;
  double r_squared;
  double lo;
  double hi;
};

/// Least-squares logistic fit (Levenberg-Marquardt from a grid of 20 starts).
/// A constant series or fewer than 5 points throws.
LogisticFit fit_logistic(std::span<const double> times, std::span<const double> values);

/// Same, with times 0, 1, 2, ...
LogisticFit fit_logistic(std::span<const double> values);

}  // namespace pzero
