#pragma once

// Concrete systems: the two-dimensional toy diffusion, the deterministic
// Hodgkin-Huxley neuron, and the five-dimensional stochastic Hodgkin-Huxley
// models driven by a CIR or OU input process with a periodic signal S(t).
//
// Units: time in ms, membrane potential v in mV (shifted so that rest is near 0).
// State ordering for the 5d models: (v, n, m, h, xi).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/expr.hpp"
#include "periodic_harris/kernel.hpp"
#include "periodic_harris/vector_field.hpp"

namespace periodic_harris {

/// Fixed-capacity state vector; models use the first `dim()` entries.
using Point = std::array<double, 5>;

struct State5 {
  double v = 0.0;
  double n = 0.0;
  double m = 0.0;
  double h = 0.0;
  double xi = 0.0;

  Point point() const { return {v, n, m, h, xi}; }
  static State5 from(const Point& p) { return {p[0], p[1], p[2], p[3], p[4]}; }
};

// ---------------------------------------------------------------------------
// Periodic signal

/// S(t) = mean + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T), required
/// to be nonnegative.
class Signal {
 public:
  Signal(double period, double mean, std::vector<double> cos_coeffs = {},
         std::vector<double> sin_coeffs = {})
      : period_(period), mean_(mean), cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)) {
    if (!(period_ > 0.0)) throw ConfigError("signal period T must be positive");
    if (mean_ < 0.0) throw ConfigError("signal mean level s0 must be nonnegative");
    min_ = locate_minimum();
    if (min_ < -1e-12) throw ConfigError("signal S(t) must be nonnegative (min " +
                                         std::to_string(min_) + ")");
  }

  /// s0 + s1 * sin^2(pi t / T).
  static Signal sin_squared(double s0, double s1, double period) {
    return Signal(period, s0 + 0.5 * s1, {-0.5 * s1}, {});
  }

  static Signal constant(double level, double period) { return Signal(period, level); }

  double operator()(double t) const {
    double s = mean_;
    const double w = 2.0 * std::numbers::pi * t / period_;
    for (std::size_t k = 0; k < cos_.size(); ++k) s += cos_[k] * std::cos(w * double(k + 1));
    for (std::size_t k = 0; k < sin_.size(); ++k) s += sin_[k] * std::sin(w * double(k + 1));
    return s;
  }

  double period() const { return period_; }
  double mean() const { return mean_; }
  double min_value() const { return min_; }
  const std::vector<double>& cos_coeffs() const { return cos_; }
  const std::vector<double>& sin_coeffs() const { return sin_; }

  /// Time average of S(t)^2 over one period.
  double mean_square() const {
    double s = mean_ * mean_;
    for (double a : cos_) s += 0.5 * a * a;
    for (double b : sin_) s += 0.5 * b * b;
    return s;
  }

  Expr symbolic() const {
    Expr s = Expr::constant(mean_);
    const Expr w = (2.0 * Expr::constant(std::numbers::pi)) * Expr::time() / period_;
    for (std::size_t k = 0; k < cos_.size(); ++k)
      if (cos_[k] != 0.0) s = s + cos_[k] * cos(double(k + 1) * w);
    for (std::size_t k = 0; k < sin_.size(); ++k)
      if (sin_[k] != 0.0) s = s + sin_[k] * sin(double(k + 1) * w);
    return s;
  }

 private:
  // Dense grid scan followed by golden-section refinement around the grid minimum.
  double locate_minimum() const {
    constexpr int grid = 4096;
    double best_t = 0.0;
    double best = (*this)(0.0);
    for (int i = 1; i < grid; ++i) {
      const double t = period_ * i / grid;
      const double s = (*this)(t);
      if (s < best) {
        best = s;
        best_t = t;
      }
    }
    double lo = best_t - period_ / grid;
    double hi = best_t + period_ / grid;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
      const double a = hi - g * (hi - lo);
      const double b = lo + g * (hi - lo);
      if ((*this)(a) < (*this)(b)) hi = b;
      else lo = a;
    }
    return std::min(best, (*this)(0.5 * (lo + hi)));
  }

  double period_;
  double mean_;
  std::vector<double> cos_;
  std::vector<double> sin_;
  double min_ = 0.0;
};

// ---------------------------------------------------------------------------
// Hodgkin-Huxley rate functions and ionic current

enum class Gate { n, m, h };

inline double alpha(Gate j, double v) {
  switch (j) {
    case Gate::n: return 0.1 * phi((10.0 - v) / 10.0);
    case Gate::m: return phi((25.0 - v) / 10.0);
    case Gate::h: return 0.07 * std::exp(-v / 20.0);
  }
  return 0.0;
}

inline double beta(Gate j, double v) {
  switch (j) {
    case Gate::n: return 0.125 * std::exp(-v / 80.0);
    case Gate::m: return 4.0 * std::exp(-v / 18.0);
    case Gate::h: return 1.0 / (std::exp((30.0 - v) / 10.0) + 1.0);
  }
  return 0.0;
}

/// Right-hand side alpha_j(v)(1 - j) - beta_j(v) j of a gating equation.
inline double gate_rate(Gate j, double v, double value) {
  return alpha(j, v) * (1.0 - value) - beta(j, v) * value;
}

/// j_inf(v) = alpha_j / (alpha_j + beta_j).
inline double gate_equilibrium(Gate j, double v) {
  const double a = alpha(j, v);
  return a / (a + beta(j, v));
}

/// The six rate functions as expressions in a voltage expression.
struct HHRateSet {
  Expr alpha_n, beta_n, alpha_m, beta_m, alpha_h, beta_h;

  static HHRateSet in(const Expr& v) {
    return {0.1 * phi((10.0 - v) / 10.0),
            0.125 * exp(-v / 80.0),
            phi((25.0 - v) / 10.0),
            4.0 * exp(-v / 18.0),
            0.07 * exp(-v / 20.0),
            1.0 / (exp((30.0 - v) / 10.0) + 1.0)};
  }
};

/// Ionic current 36 n^4 (v + 12) + 120 m^3 h (v - 120) + 0.3 (v - 10.6).
inline double current_F(double v, double n, double m, double h) {
  return 36.0 * n * n * n * n * (v + 12.0) + 120.0 * m * m * m * h * (v - 120.0) +
         0.3 * (v - 10.6);
}

inline Expr current_F(const Expr& v, const Expr& n, const Expr& m, const Expr& h) {
  return 36.0 * pow(n, 4) * (v + 12.0) + 120.0 * pow(m, 3) * h * (v - 120.0) + 0.3 * (v - 10.6);
}

/// F evaluated with the gates at their voltage-clamped equilibria.
inline double F_infinity(double v) {
  return current_F(v, gate_equilibrium(Gate::n, v), gate_equilibrium(Gate::m, v),
                   gate_equilibrium(Gate::h, v));
}

/// The voltage v^c with F_infinity(v^c) = c (bisection, then Newton polish).
inline double rest_potential(double c) {
  double lo = -1.0;
  double hi = 1.0;
  for (int i = 0; F_infinity(lo) > c; ++i) {
    if (i > 200) throw DomainError("rest_potential: cannot bracket from below");
    lo = 2.0 * lo - 1.0;
  }
  for (int i = 0; F_infinity(hi) < c; ++i) {
    if (i > 200) throw DomainError("rest_potential: cannot bracket from above");
    hi = 2.0 * hi + 1.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (F_infinity(mid) < c) lo = mid;
    else hi = mid;
  }
  double v = 0.5 * (lo + hi);
  for (int i = 0; i < 3; ++i) {
    const double step = 1e-6 * (1.0 + std::abs(v));
    const double slope = (F_infinity(v + step) - F_infinity(v - step)) / (2.0 * step);
    if (!(slope > 0.0)) break;
    const double next = v - (F_infinity(v) - c) / slope;
    if (!(next >= lo && next <= hi)) break;
    if (std::abs(F_infinity(next) - c) >= std::abs(F_infinity(v) - c)) break;
    v = next;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Model specifications

struct ToyModel {
  double c = 1.0;
  double period = 1.0;  // sin^2(2 pi t) is 1/2-periodic, hence also 1-periodic
};

struct DeterministicHH {
  std::function<double(double)> input;  // input current c(t)
};

struct CirModel {
  double a = 1.0;
  Signal signal = Signal::sin_squared(0.5, 1.0, 10.0);
};

struct OuModel {
  Signal signal = Signal::sin_squared(0.5, 1.0, 10.0);
};

class ModelSpec {
 public:
  using Kind = std::variant<ToyModel, DeterministicHH, CirModel, OuModel>;

  static ModelSpec toy(double c = 1.0, double period = 1.0) {
    if (!(c > 0.0)) throw ConfigError("toy model requires c > 0");
    return ModelSpec(ToyModel{c, period});
  }
  static ModelSpec deterministic_hh(double constant_input) {
    return ModelSpec(DeterministicHH{[constant_input](double) { return constant_input; }});
  }
  static ModelSpec deterministic_hh(std::function<double(double)> input) {
    return ModelSpec(DeterministicHH{std::move(input)});
  }
  static ModelSpec cir(double a, Signal signal) {
    if (!(2.0 * a > 1.0)) throw ConfigError("CIR input requires 2a > 1 (got a = " + std::to_string(a) + ")");
    return ModelSpec(CirModel{a, std::move(signal)});
  }
  static ModelSpec cir() { return cir(1.0, Signal::sin_squared(0.5, 1.0, 10.0)); }
  static ModelSpec ou(Signal signal) { return ModelSpec(OuModel{std::move(signal)}); }
  static ModelSpec ou() { return ou(Signal::sin_squared(0.5, 1.0, 10.0)); }

  const Kind& kind() const { return kind_; }
  template <class T> bool is() const { return std::holds_alternative<T>(kind_); }
  template <class T> const T& as() const { return std::get<T>(kind_); }

  int dim() const {
    if (is<ToyModel>()) return 2;
    if (is<DeterministicHH>()) return 4;
    return 5;
  }

  bool stochastic() const { return !is<DeterministicHH>(); }

  std::string name() const {
    if (is<ToyModel>()) return "toy";
    if (is<DeterministicHH>()) return "hh";
    if (is<CirModel>()) return "cir";
    return "ou";
  }

  /// Period of the time dependence (1 for the toy model, T of the signal otherwise).
  double period() const {
    if (is<ToyModel>()) return as<ToyModel>().period;
    if (is<CirModel>()) return as<CirModel>().signal.period();
    if (is<OuModel>()) return as<OuModel>().signal.period();
    return 1.0;
  }

  const Signal* signal() const {
    if (is<CirModel>()) return &as<CirModel>().signal;
    if (is<OuModel>()) return &as<OuModel>().signal;
    return nullptr;
  }

 private:
  explicit ModelSpec(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

inline double toy_rate(double c, double t) {
  const double s = std::sin(2.0 * std::numbers::pi * t);
  return c * s * s;
}

/// Membership of the state space E (gates in [0,1], CIR input strictly positive,
/// toy second component nonnegative).
inline bool in_state_space(const ModelSpec& spec, const Point& x) {
  for (int i = 0; i < spec.dim(); ++i)
    if (!std::isfinite(x[static_cast<std::size_t>(i)])) return false;
  if (spec.is<ToyModel>()) return x[1] >= 0.0;
  for (int i = 1; i <= 3; ++i)
    if (x[static_cast<std::size_t>(i)] < 0.0 || x[static_cast<std::size_t>(i)] > 1.0) return false;
  if (spec.is<CirModel>()) return x[4] > 0.0;
  return true;
}

namespace detail {

inline void hh_core(double input, const Point& x, Point& out) {
  out[0] = input - current_F(x[0], x[1], x[2], x[3]);
  out[1] = gate_rate(Gate::n, x[0], x[1]);
  out[2] = gate_rate(Gate::m, x[0], x[2]);
  out[3] = gate_rate(Gate::h, x[0], x[3]);
}

}  // namespace detail

/// Ito drift with the CIR square root evaluated at max(xi, 0); used by the
/// full-truncation scheme and by `drift` after domain checks.
inline Point drift_unchecked(const ModelSpec& spec, double t, const Point& x) {
  Point out{};
  if (spec.is<ToyModel>()) {
    out[0] = -toy_rate(spec.as<ToyModel>().c, t) * x[0];
    out[1] = 1.0 - x[1];
  } else if (spec.is<DeterministicHH>()) {
    detail::hh_core(spec.as<DeterministicHH>().input(t), x, out);
  } else if (spec.is<CirModel>()) {
    const auto& cir = spec.as<CirModel>();
    const double xi_rate = cir.a + cir.signal(t) - std::max(x[4], 0.0);
    detail::hh_core(xi_rate, x, out);
    out[4] = xi_rate;
  } else {
    const auto& ou = spec.as<OuModel>();
    const double xi_rate = ou.signal(t) - x[4];
    detail::hh_core(xi_rate, x, out);
    out[4] = xi_rate;
  }
  return out;
}

inline Point diffusion_unchecked(const ModelSpec& spec, const Point& x) {
  Point out{};
  if (spec.is<ToyModel>()) {
    out[0] = 1.0;
    out[1] = x[1];
  } else if (spec.is<CirModel>()) {
    const double s = std::sqrt(std::max(x[4], 0.0));
    out[0] = s;
    out[4] = s;
  } else if (spec.is<OuModel>()) {
    out[0] = 1.0;
    out[4] = 1.0;
  }
  return out;
}

inline void check_domain(const ModelSpec& spec, const Point& x) {
  if (spec.is<CirModel>() && !(x[4] > 0.0))
    throw DomainError("CIR input xi must be strictly positive (xi = " + std::to_string(x[4]) + ")");
}

/// Ito drift b(t, x).
inline Point drift(const ModelSpec& spec, double t, const Point& x) {
  check_domain(spec, x);
  return drift_unchecked(spec, t, x);
}

/// Diffusion column sigma(x) (one driving Brownian motion).
inline Point diffusion(const ModelSpec& spec, const Point& x) {
  check_domain(spec, x);
  return diffusion_unchecked(spec, x);
}

/// Stratonovich drift b~^i = b^i - 1/2 sum_j sigma^j d sigma^i / dx_j.
inline Point stratonovich_drift(const ModelSpec& spec, double t, const Point& x) {
  Point out = drift(spec, t, x);
  if (spec.is<ToyModel>()) {
    out[1] -= 0.5 * x[1];  // sigma = (1, psi): only d(psi)/d(psi) = 1 contributes
  } else if (spec.is<CirModel>()) {
    // sigma^1 = sigma^5 = sqrt(xi): 1/2 * sqrt(xi) * 1/(2 sqrt(xi)) = 1/4
    out[0] -= 0.25;
    out[4] -= 0.25;
  }
  return out;
}

/// The augmented fields V0 = (1, b~) and V1 = (0, sigma) as expressions.
inline std::pair<SymVectorField, SymVectorField> symbolic_fields(const ModelSpec& spec) {
  const Expr one = Expr::constant(1.0);
  const Expr zero = Expr::constant(0.0);
  const Expr t = Expr::time();
  if (spec.is<ToyModel>()) {
    const double c = spec.as<ToyModel>().c;
    const Expr x1 = Expr::state(1);
    const Expr x2 = Expr::state(2);
    const Expr s = pow(sin(2.0 * Expr::constant(std::numbers::pi) * t), 2);
    SymVectorField v0({one, -(c * s * x1), 1.0 - 1.5 * x2}, "V0");
    SymVectorField v1({zero, one, x2}, "V1");
    return {std::move(v0), std::move(v1)};
  }
  if (spec.is<DeterministicHH>())
    throw DomainError("symbolic fields are defined for the toy, CIR and OU models only");

  const Expr v = Expr::state(1);
  const Expr n = Expr::state(2);
  const Expr m = Expr::state(3);
  const Expr h = Expr::state(4);
  const Expr xi = Expr::state(5);
  const HHRateSet r = HHRateSet::in(v);
  const Expr gate_n = r.alpha_n * (1.0 - n) - r.beta_n * n;
  const Expr gate_m = r.alpha_m * (1.0 - m) - r.beta_m * m;
  const Expr gate_h = r.alpha_h * (1.0 - h) - r.beta_h * h;
  const Expr F = current_F(v, n, m, h);

  Expr xi_drift;
  Expr sigma;
  if (spec.is<CirModel>()) {
    const auto& cir = spec.as<CirModel>();
    xi_drift = (cir.a - 0.25) + cir.signal.symbolic() - xi;
    sigma = sqrt(xi);
  } else {
    xi_drift = spec.as<OuModel>().signal.symbolic() - xi;
    sigma = one;
  }
  SymVectorField v0({one, xi_drift - F, gate_n, gate_m, gate_h, xi_drift}, "V0");
  SymVectorField v1({zero, sigma, zero, zero, zero, sigma}, "V1");
  return {std::move(v0), std::move(v1)};
}

/// The attainable point x*: (0, 2/3) for the toy model, and
/// (v0, n_inf(v0), m_inf(v0), h_inf(v0), xi*) with xi* = 1 (CIR) or 0 (OU).
inline Point attainable_point(const ModelSpec& spec) {
  if (spec.is<ToyModel>()) return {0.0, 2.0 / 3.0, 0.0, 0.0, 0.0};
  const double v0 = rest_potential(0.0);
  Point x{v0, gate_equilibrium(Gate::n, v0), gate_equilibrium(Gate::m, v0),
          gate_equilibrium(Gate::h, v0), 0.0};
  if (spec.is<CirModel>()) x[4] = 1.0;
  return x;
}

inline double distance(const Point& a, const Point& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace periodic_harris
