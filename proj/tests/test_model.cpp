#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "periodic_harris/model.hpp"

namespace ph = periodic_harris;
using ph::Gate;
using ph::Point;

namespace {

// Classical RK4 on the deterministic HH system; returns the v and gate history.
std::vector<Point> rk4_hh(const ph::ModelSpec& spec, Point x, double dt, std::size_t steps) {
  std::vector<Point> out{x};
  auto add = [](const Point& a, const Point& b, double s) {
    Point r{};
    for (std::size_t i = 0; i < 4; ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Point k1 = ph::drift(spec, t, x);
    const Point k2 = ph::drift(spec, t + dt / 2, add(x, k1, dt / 2));
    const Point k3 = ph::drift(spec, t + dt / 2, add(x, k2, dt / 2));
    const Point k4 = ph::drift(spec, t + dt, add(x, k3, dt));
    for (std::size_t i = 0; i < 4; ++i) x[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    out.push_back(x);
  }
  return out;
}

Point equilibrium4(double v) {
  return {v, ph::gate_equilibrium(Gate::n, v), ph::gate_equilibrium(Gate::m, v),
          ph::gate_equilibrium(Gate::h, v), 0.0};
}

}  // namespace

TEST(CurrentF, Examples) {
  EXPECT_EQ(ph::current_F(10.6, 0, 0, 0), 0.0);
  EXPECT_NEAR(ph::current_F(-12, 1, 0, 0), -6.78, 1e-12);
  EXPECT_NEAR(ph::current_F(0, 0.3, 0.05, 0.6), -0.7608, 1e-12);
  EXPECT_NEAR(ph::current_F(-12, 0, 0, 0), -6.78, 1e-12);
  EXPECT_NEAR(ph::current_F(120, 0, 0, 0), 32.82, 1e-12);
}

TEST(CurrentF, TrapEdgeExtremaOverGateBox) {
  double min120 = 1e300;
  double max12 = -1e300;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j)
      for (int k = 0; k <= 10; ++k) {
        const double n = i / 10.0, m = j / 10.0, h = k / 10.0;
        min120 = std::min(min120, ph::current_F(120, n, m, h));
        max12 = std::max(max12, ph::current_F(-12, n, m, h));
      }
  EXPECT_NEAR(min120, 32.82, 1e-12);
  EXPECT_NEAR(max12, -6.78, 1e-12);
}

TEST(CurrentF, SymbolicMatchesNumeric) {
  using ph::Expr;
  const Expr f = ph::current_F(Expr::state(1), Expr::state(2), Expr::state(3), Expr::state(4));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(-50, 150), g(0, 1);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> p{0.0, v(rng), g(rng), g(rng), g(rng)};
    EXPECT_NEAR(ph::evaluate(f, p), ph::current_F(p[1], p[2], p[3], p[4]),
                1e-12 * (1 + std::abs(ph::current_F(p[1], p[2], p[3], p[4]))));
  }
}

TEST(Rates, PositiveOnGridAndFiniteAtRemovableSingularities) {
  for (double v = -100.0; v <= 200.0; v += 0.25)
    for (Gate j : {Gate::n, Gate::m, Gate::h}) {
      EXPECT_GT(ph::alpha(j, v), 0.0) << v;
      EXPECT_GT(ph::beta(j, v), 0.0) << v;
    }
  EXPECT_DOUBLE_EQ(ph::alpha(Gate::n, 10.0), 0.1);
  EXPECT_DOUBLE_EQ(ph::alpha(Gate::m, 25.0), 1.0);
  EXPECT_NEAR(ph::gate_equilibrium(Gate::n, 10.0), 0.475483787679529625, 1e-14);
  EXPECT_NEAR(ph::gate_equilibrium(Gate::m, 25.0), 0.500648631578390301, 1e-14);
}

TEST(Rates, SymbolicRatesMatchNumeric) {
  const auto r = ph::HHRateSet::in(ph::Expr::state(1));
  for (double v = -80.0; v <= 150.0; v += 0.7) {
    const std::vector<double> p{0.0, v};
    EXPECT_NEAR(ph::evaluate(r.alpha_n, p), ph::alpha(Gate::n, v), 1e-14);
    EXPECT_NEAR(ph::evaluate(r.beta_n, p), ph::beta(Gate::n, v), 1e-14);
    EXPECT_NEAR(ph::evaluate(r.alpha_m, p), ph::alpha(Gate::m, v), 1e-14);
    EXPECT_NEAR(ph::evaluate(r.beta_m, p), ph::beta(Gate::m, v), 1e-12 * (1 + ph::beta(Gate::m, v)));
    EXPECT_NEAR(ph::evaluate(r.alpha_h, p), ph::alpha(Gate::h, v), 1e-14);
    EXPECT_NEAR(ph::evaluate(r.beta_h, p), ph::beta(Gate::h, v), 1e-14);
  }
}

TEST(GateEquilibrium, InUnitIntervalAndComplementary) {
  for (double v = -100.0; v <= 200.0; v += 0.5)
    for (Gate j : {Gate::n, Gate::m, Gate::h}) {
      const double x = ph::gate_equilibrium(j, v);
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
      EXPECT_NEAR(x + (1.0 - x), 1.0, 1e-15);
      EXPECT_NEAR(ph::gate_rate(j, v, x), 0.0, 1e-14);
    }
}

TEST(RestPotential, MatchesReferenceValue) {
  const double v0 = ph::rest_potential(0.0);
  EXPECT_NEAR(v0, 0.0462, 5e-3);
  EXPECT_NEAR(v0, 0.0462148579384415544, 1e-10);
  const Point x = equilibrium4(v0);
  EXPECT_NEAR(ph::current_F(x[0], x[1], x[2], x[3]), 0.0, 1e-10);
  EXPECT_NEAR(x[1], 0.318385362336349205, 1e-10);
  EXPECT_NEAR(x[2], 0.0532216293734335833, 1e-10);
  EXPECT_NEAR(x[3], 0.594503593017056730, 1e-10);
}

TEST(RestPotential, InverseOfFInfinity) {
  const double expected[] = {-6.96574668892603280, 0.0462148579384415544, 3.33536813122846635,
                             8.51827475432512823};
  const double cs[] = {-5.0, 0.0, 5.0, 20.0};
  for (int i = 0; i < 4; ++i) {
    const double v = ph::rest_potential(cs[i]);
    EXPECT_NEAR(ph::F_infinity(v), cs[i], 1e-8);
    EXPECT_NEAR(v, expected[i], 1e-9);
  }
}

TEST(RestPotential, MonotoneInInput) {
  double prev = -1e300;
  for (double c = -50.0; c <= 100.0; c += 2.5) {
    const double v = ph::rest_potential(c);
    EXPECT_GT(v, prev);
    prev = v;
  }
  double f_prev = -1e300;
  for (double v = -100.0; v <= 200.0; v += 0.5) {
    EXPECT_GT(ph::F_infinity(v), f_prev);
    f_prev = ph::F_infinity(v);
  }
}

TEST(Signal, DefaultIsNonnegativeAndPeriodic) {
  const auto s = ph::Signal::sin_squared(0.5, 1.0, 10.0);
  EXPECT_NEAR(s(0.0), 0.5, 1e-15);
  EXPECT_NEAR(s(5.0), 1.5, 1e-15);
  EXPECT_NEAR(s(3.3), s(13.3), 1e-12);
  EXPECT_NEAR(s.min_value(), 0.5, 1e-12);
  const auto sym = s.symbolic();
  for (double t = 0.0; t < 20.0; t += 0.37) EXPECT_NEAR(ph::evaluate(sym, {t}), s(t), 1e-13);
  EXPECT_NEAR(s.mean_square(), 1.125, 1e-15);
}

TEST(Signal, RejectsNegativeSignals) {
  EXPECT_THROW(ph::Signal(10.0, 0.5, {1.0}), ph::ConfigError);
  EXPECT_THROW(ph::Signal(0.0, 0.5), ph::ConfigError);
  EXPECT_THROW(ph::Signal(10.0, -0.1), ph::ConfigError);
  EXPECT_NO_THROW(ph::Signal(10.0, 1.0, {0.6}, {0.8}));
}

TEST(ModelSpec, Validation) {
  EXPECT_THROW(ph::ModelSpec::cir(0.5, ph::Signal::constant(0.0, 1.0)), ph::ConfigError);
  try {
    ph::ModelSpec::cir(0.4, ph::Signal::constant(0.0, 1.0));
  } catch (const ph::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2a > 1"), std::string::npos);
  }
  EXPECT_THROW(ph::ModelSpec::toy(0.0), ph::ConfigError);
  EXPECT_EQ(ph::ModelSpec::toy().dim(), 2);
  EXPECT_EQ(ph::ModelSpec::deterministic_hh(0.0).dim(), 4);
  EXPECT_EQ(ph::ModelSpec::cir().dim(), 5);
}

TEST(Drift, OuEquilibriumIsStationary) {
  const auto spec = ph::ModelSpec::ou(ph::Signal::constant(0.0, 10.0));
  const Point x = ph::attainable_point(spec);
  const Point b = ph::drift(spec, 1.234, x);
  for (double c : b) EXPECT_NEAR(c, 0.0, 1e-10);
}

TEST(Drift, ToyAtTimeZero) {
  const auto spec = ph::ModelSpec::toy(1.0);
  const Point b = ph::drift(spec, 0.0, {3.0, 0.25});
  EXPECT_EQ(b[0], 0.0);
  EXPECT_DOUBLE_EQ(b[1], 0.75);
  const Point s = ph::diffusion(spec, {3.0, 0.25});
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.25);
}

TEST(Diffusion, CirColumn) {
  const auto spec = ph::ModelSpec::cir();
  const Point s = ph::diffusion(spec, {0.0, 0.3, 0.1, 0.6, 4.0});
  const Point expected{2.0, 0.0, 0.0, 0.0, 2.0};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(s[i], expected[i]);
  EXPECT_THROW(ph::diffusion(spec, {0.0, 0.3, 0.1, 0.6, 0.0}), ph::DomainError);
  EXPECT_THROW(ph::drift(spec, 0.0, {0.0, 0.3, 0.1, 0.6, -1.0}), ph::DomainError);
}

TEST(Drift, CirVoltageSubstitutesInputIncrement) {
  const auto spec = ph::ModelSpec::cir(1.3, ph::Signal::sin_squared(0.5, 1.0, 10.0));
  const Point x{20.0, 0.4, 0.2, 0.5, 2.5};
  const double t = 3.0;
  const Point b = ph::drift(spec, t, x);
  const double xi_rate = 1.3 + spec.signal()->operator()(t) - 2.5;
  EXPECT_NEAR(b[0], xi_rate - ph::current_F(20.0, 0.4, 0.2, 0.5), 1e-12);
  EXPECT_NEAR(b[4], xi_rate, 1e-15);
}

TEST(Stratonovich, Corrections) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> v(-50, 120), g(0.01, 0.99), xi(0.1, 10), t(0, 20);
  const auto cir = ph::ModelSpec::cir();
  const auto ou = ph::ModelSpec::ou();
  const auto toy = ph::ModelSpec::toy(1.0);
  for (int i = 0; i < 100; ++i) {
    const Point x{v(rng), g(rng), g(rng), g(rng), xi(rng)};
    const double s = t(rng);
    const Point d = ph::drift(cir, s, x);
    const Point st = ph::stratonovich_drift(cir, s, x);
    const double expected[] = {-0.25, 0, 0, 0, -0.25};
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(st[k] - d[k], expected[k], 1e-12);
    const Point d2 = ph::drift(ou, s, x);
    const Point st2 = ph::stratonovich_drift(ou, s, x);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(st2[k], d2[k]);
    const Point y{x[0] / 50.0, x[4]};
    const Point d3 = ph::drift(toy, s, y);
    const Point st3 = ph::stratonovich_drift(toy, s, y);
    EXPECT_EQ(st3[0], d3[0]);
    EXPECT_NEAR(st3[1] - d3[1], -0.5 * y[1], 1e-15);
  }
}

TEST(SymbolicFields, ToyFieldsExact) {
  const auto [v0, v1] = ph::symbolic_fields(ph::ModelSpec::toy(1.0));
  EXPECT_TRUE(v1.components[0].is_zero());
  EXPECT_TRUE(v1.components[1].is_constant(1.0));
  EXPECT_EQ(ph::to_string(v1.components[2]), "x2");
  EXPECT_TRUE(v0.drives_time());
}

TEST(SymbolicFields, CirDiffusionField) {
  const auto [v0, v1] = ph::symbolic_fields(ph::ModelSpec::cir());
  EXPECT_EQ(v1.dim, 5);
  EXPECT_EQ(ph::to_string(v1.components[1]), "sqrt(x5)");
  EXPECT_EQ(ph::to_string(v1.components[5]), "sqrt(x5)");
  for (int i : {0, 2, 3, 4}) EXPECT_TRUE(v1.components[static_cast<std::size_t>(i)].is_zero());
}

TEST(SymbolicFields, AgreeWithNumericCoefficients) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> v(-50, 120), g(0.01, 0.99), xi(0.1, 10), t(0, 20);
  for (const auto& spec : {ph::ModelSpec::cir(), ph::ModelSpec::ou(), ph::ModelSpec::toy(1.7)}) {
    const auto [f0, f1] = ph::symbolic_fields(spec);
    const int d = spec.dim();
    for (int i = 0; i < 100; ++i) {
      Point x{v(rng), g(rng), g(rng), g(rng), xi(rng)};
      if (d == 2) x = {x[0] / 50.0, x[4] / 5.0, 0, 0, 0};
      const double s = t(rng);
      const auto a = f0.evaluate_state(s, std::span<const double>(x.data(), static_cast<std::size_t>(d)));
      const auto b = f1.evaluate_state(s, std::span<const double>(x.data(), static_cast<std::size_t>(d)));
      const Point st = ph::stratonovich_drift(spec, s, x);
      const Point sg = ph::diffusion(spec, x);
      for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k) {
        EXPECT_NEAR(a[k], st[k], 1e-12 * (1 + std::abs(st[k]))) << spec.name() << " component " << k;
        EXPECT_NEAR(b[k], sg[k], 1e-12 * (1 + std::abs(sg[k])));
      }
    }
  }
}

TEST(AttainablePoint, Coordinates) {
  const Point cir = ph::attainable_point(ph::ModelSpec::cir());
  EXPECT_NEAR(cir[0], 0.0462148579384415544, 1e-10);
  EXPECT_EQ(cir[4], 1.0);
  EXPECT_EQ(ph::attainable_point(ph::ModelSpec::ou())[4], 0.0);
  const Point toy = ph::attainable_point(ph::ModelSpec::toy());
  EXPECT_EQ(toy[0], 0.0);
  EXPECT_DOUBLE_EQ(toy[1], 2.0 / 3.0);
}

// Gating flow invariance: the gate history of an RK4 run matches the explicit
// representation j0 e^{-int (a+b)} + int a e^{-int (a+b)} evaluated along the same v-path.
TEST(GatingFlow, MatchesExplicitRepresentation) {
  const auto spec = ph::ModelSpec::deterministic_hh([](double t) { return 15.0 * std::sin(t / 3.0) + 5.0; });
  const double dt = 0.005;
  const auto path = rk4_hh(spec, {-5.0, 0.2, 0.7, 0.3, 0.0}, dt, 2000);  // 10 ms
  for (std::size_t gi = 1; gi <= 3; ++gi) {
    const Gate j = gi == 1 ? Gate::n : gi == 2 ? Gate::m : Gate::h;
    auto sum_rate = [&](std::size_t k) { return ph::alpha(j, path[k][0]) + ph::beta(j, path[k][0]); };
    auto a = [&](std::size_t k) { return ph::alpha(j, path[k][0]); };
    // Simpson's rule over pairs of steps; the midpoint of the exponent uses the
    // matching third-order partial formula.
    double rate_int = 0.0;  // int_0^t (a+b)
    double forced = 0.0;    // int_0^t a(s) e^{int_0^s (a+b)} ds
    double max_err = 0.0;
    for (std::size_t k = 2; k < path.size(); k += 2) {
      const double f0 = sum_rate(k - 2), f1 = sum_rate(k - 1), f2 = sum_rate(k);
      const double mid_int = rate_int + dt / 12.0 * (5 * f0 + 8 * f1 - f2);
      const double end_int = rate_int + dt / 3.0 * (f0 + 4 * f1 + f2);
      forced += dt / 3.0 *
                (a(k - 2) * std::exp(rate_int) + 4 * a(k - 1) * std::exp(mid_int) + a(k) * std::exp(end_int));
      rate_int = end_int;
      const double explicit_value = (path[0][gi] + forced) * std::exp(-rate_int);
      max_err = std::max(max_err, std::abs(explicit_value - path[k][gi]));
      EXPECT_GE(path[k][gi], 0.0);
      EXPECT_LE(path[k][gi], 1.0);
    }
    EXPECT_LT(max_err, 1e-4) << "gate " << gi;
  }
}

// Voltage trap: inputs in (-6.78, 32.82) keep v inside (-12, 120).
TEST(VoltageTrap, PiecewiseInputsKeepVoltageInside) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> level(-6.7, 32.7), v0(-11.5, 119.5), g(0, 1);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<double> levels(20);
    for (auto& l : levels) l = level(rng);
    const auto spec = ph::ModelSpec::deterministic_hh([levels](double t) {
      const auto idx = std::min<std::size_t>(levels.size() - 1, static_cast<std::size_t>(t / 10.0));
      return levels[idx];
    });
    const auto path = rk4_hh(spec, {v0(rng), g(rng), g(rng), g(rng), 0.0}, 0.01, 20000);
    for (const auto& x : path) {
      ASSERT_GT(x[0], -12.0);
      ASSERT_LT(x[0], 120.0);
    }
  }
}
