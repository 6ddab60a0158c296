#pragma once

// The analytic kernel phi(u) = u / (exp(u) - 1), phi(0) = 1, and its derivatives.
//
// phi is the exponential generating function of the Bernoulli numbers, so near
// the removable singularity every derivative has the convergent series
//   phi^(k)(u) = sum_{m >= k} B_m / (m - k)! * u^(m - k)      (|u| < 2 pi).
// Away from zero we use phi = u * g with g = 1 / (exp(u) - 1), whose derivatives
// are polynomials in g because g' = -g (1 + g).  Negative arguments are mapped
// to positive ones through phi(u) = phi(-u) - u.

#include <array>
#include <cmath>
#include <mutex>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/zeta.hpp>

namespace periodic_harris {

namespace detail {

inline constexpr int kMaxSeriesTerms = 96;

// B_m / m! for m = 0 .. kMaxSeriesTerms + 64.
inline const std::vector<double>& scaled_bernoulli() {
  static const std::vector<double> table = [] {
    std::vector<double> b(kMaxSeriesTerms + 64, 0.0);
    b[0] = 1.0;
    b[1] = -0.5;
    for (std::size_t m = 2; m < b.size(); m += 2) {
      const double sign = ((m / 2) % 2 == 1) ? 1.0 : -1.0;
      b[m] = sign * 2.0 * boost::math::zeta(static_cast<double>(m)) /
             std::pow(2.0 * std::numbers::pi, static_cast<double>(m));
    }
    return b;
  }();
  return table;
}

// Coefficients of P_j with g^(j) = P_j(g); index i is the coefficient of g^i.
inline const std::vector<double>& g_derivative_poly(int order) {
  static std::mutex mutex;
  static std::vector<std::vector<double>> polys{{0.0, 1.0}};
  std::lock_guard lock(mutex);
  while (static_cast<int>(polys.size()) <= order) {
    const auto& p = polys.back();
    // P_{j+1}(g) = P_j'(g) * (-g - g^2)
    std::vector<double> next(p.size() + 1, 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) {
      const double d = static_cast<double>(i) * p[i];
      next[i] -= d;
      next[i + 1] -= d;
    }
    polys.push_back(std::move(next));
  }
  return polys[static_cast<std::size_t>(order)];
}

inline double polyval(const std::vector<double>& coeffs, double x) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

inline double phi_series(int order, double u) {
  const auto& b = scaled_bernoulli();
  double sum = 0.0;
  double power = 1.0;  // u^(m - order)
  for (int m = order; m < order + kMaxSeriesTerms && m < static_cast<int>(b.size()); ++m) {
    const double bm = b[static_cast<std::size_t>(m)];
    if (bm != 0.0) {
      // B_m / (m - order)! = (B_m / m!) * m! / (m - order)!
      double falling = 1.0;
      for (int j = 0; j < order; ++j) falling *= static_cast<double>(m - j);
      const double term = bm * falling * power;
      sum += term;
      if (m > order + 8 && std::abs(term) < 1e-19 * std::abs(sum)) break;
    }
    power *= u;
  }
  return sum;
}

inline double phi_positive(int order, double u) {
  const double g = 1.0 / std::expm1(u);
  const double gk = polyval(g_derivative_poly(order), g);
  if (order == 0) return u * gk;
  const double gk1 = polyval(g_derivative_poly(order - 1), g);
  return u * gk + static_cast<double>(order) * gk1;
}

}  // namespace detail

/// k-th derivative of phi(u) = u / (exp(u) - 1) with the removable singularity filled in.
inline double phi_derivative(int order, double u) {
  if (std::abs(u) < 2.0) return detail::phi_series(order, u);
  if (u > 0.0) return detail::phi_positive(order, u);
  const double mirrored = detail::phi_positive(order, -u);
  const double sign = (order % 2 == 0) ? 1.0 : -1.0;
  double linear = 0.0;
  if (order == 0) linear = -u;
  if (order == 1) linear = -1.0;
  return linear + sign * mirrored;
}

inline double phi(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u / 2.0 + u * u / 12.0;
  return u / std::expm1(u);
}

}  // namespace periodic_harris
