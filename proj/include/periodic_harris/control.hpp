#pragma once

// Deterministic control systems dphi = b~(t, phi) dt + sigma(phi) hdot dt and
// the multi-phase programs that steer the HH models to their attainable point.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/sde.hpp"

namespace periodic_harris {

// ---------------------------------------------------------------------------
// Smooth ramps

struct RampSpec {
  double start = 0.0;
  double end = 0.0;
  double slope_bound = 1.0;
  int smoothness = 5;  // the derivative is C^k
};

/// Monotone ramp from `start` to `end` whose derivative rises through a C^k
/// smoothstep over half a time unit, cruises, and falls back symmetrically.
/// Reaches `end` at |end - start| / slope_bound + 1.
class SmoothRamp {
 public:
  explicit SmoothRamp(const RampSpec& rs) : spec_(rs) {
    if (!(rs.slope_bound > 0.0)) throw DomainError("ramp slope bound must be positive");
    if (rs.smoothness < 0 || rs.smoothness > 20) throw DomainError("ramp smoothness must lie in [0, 20]");
    const double delta = rs.end - rs.start;
    sign_ = delta < 0.0 ? -1.0 : 1.0;
    distance_ = std::abs(delta);
    duration_ = distance_ / rs.slope_bound + 1.0;
    cruise_ = distance_ / (duration_ - edge_);
    // smoothstep S_k(u) = u^{k+1} sum_j binom(k+j, j) binom(2k+1, k-j) (-u)^j
    const int k = rs.smoothness;
    for (int j = 0; j <= k; ++j) coeff_.push_back(binom(k + j, j) * binom(2 * k + 1, k - j) * (j % 2 ? -1.0 : 1.0));
  }

  double duration() const { return duration_; }
  double distance() const { return distance_; }
  double start() const { return spec_.start; }
  double end() const { return spec_.end; }

  double operator()(double t) const {
    if (distance_ == 0.0 || t <= 0.0) return t <= 0.0 ? spec_.start : spec_.end;
    if (t >= duration_) return spec_.end;
    double travelled;
    if (t <= edge_) {
      travelled = cruise_ * edge_ * step_integral(t / edge_);
    } else if (t >= duration_ - edge_) {
      travelled = distance_ - cruise_ * edge_ * step_integral((duration_ - t) / edge_);
    } else {
      travelled = cruise_ * (0.5 * edge_ + (t - edge_));
    }
    return spec_.start + sign_ * travelled;
  }

  double derivative(double t) const {
    if (distance_ == 0.0 || t <= 0.0 || t >= duration_) return 0.0;
    double q = 1.0;
    if (t < edge_) q = step(t / edge_);
    else if (t > duration_ - edge_) q = step((duration_ - t) / edge_);
    return sign_ * cruise_ * q;
  }

 private:
  static double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }
  double step(double u) const {
    const int k = spec_.smoothness;
    double s = 0.0;
    for (int j = static_cast<int>(coeff_.size()) - 1; j >= 0; --j) s = s * u + coeff_[static_cast<std::size_t>(j)];
    return s * std::pow(u, k + 1);
  }
  // integral of the smoothstep from 0 to u; the full integral is 1/2
  double step_integral(double u) const {
    const int k = spec_.smoothness;
    double s = 0.0;
    for (std::size_t j = 0; j < coeff_.size(); ++j)
      s += coeff_[j] * std::pow(u, k + 2 + static_cast<int>(j)) / (k + 2 + static_cast<double>(j));
    return s;
  }

  RampSpec spec_;
  double sign_ = 1.0;
  double distance_ = 0.0;
  double duration_ = 1.0;
  double edge_ = 0.5;
  double cruise_ = 0.0;
  std::vector<double> coeff_;
};

inline SmoothRamp smooth_ramp(const RampSpec& rs) { return SmoothRamp(rs); }

// ---------------------------------------------------------------------------
// Programs

using RateLaw = std::function<double(double t, const Point& x)>;
using StopRule = std::function<bool(double t, const Point& x)>;

/// What a phase does once it starts at (t, x).
struct PhasePlan {
  RateLaw rate;
  std::optional<double> duration;  // fixed duration, or
  StopRule done;                   // state predicate
  double cap = std::numeric_limits<double>::infinity();  // hard cap on the phase length
  bool report_cap = false;         // hitting the cap ends the run without an error
  // Stationary fast-forward: when every coordinate except `ff_component` is at
  // rest and that one moves at a constant rate, jump towards `ff_target`.
  std::optional<double> ff_target;
  int ff_component = 4;
  double ramp_distance = 0.0;
};

struct Phase {
  std::string name;
  std::function<PhasePlan(double t, const Point& x)> plan;
};

struct ControlProgram {
  std::vector<Phase> phases;
  std::string description;
};

struct PhaseLog {
  std::string name;
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t steps = 0;
  double skipped = 0.0;  // time covered by fast-forward jumps
  double hdot_sq = 0.0;  // integral of hdot^2 over the phase
  bool capped = false;
};

struct ControlRun {
  int dim = 0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Point> states;
  std::vector<double> hdot;  // control rate at the recorded states
  std::vector<PhaseLog> phases;
  double hdot_sq = 0.0;
  double ramp_distance = 0.0;
  bool converged = true;  // false if a report-only cap was hit
  Point target{};
  double terminal_distance = 0.0;

  const Point& terminal() const { return states.back(); }
  const PhaseLog* phase(const std::string& name) const {
    for (const auto& p : phases)
      if (p.name == name) return &p;
    return nullptr;
  }
};

struct IntegrateOptions {
  double dt = 0.01;
  std::size_t record_every = 10;
  bool fast_forward = true;
};

namespace detail {

inline bool control_state_ok(const ModelSpec& spec, const Point& x) {
  for (int i = 0; i < spec.dim(); ++i)
    if (!std::isfinite(x[static_cast<std::size_t>(i)])) return false;
  if (spec.is<CirModel>()) return x[4] > 0.0;
  if (spec.is<ToyModel>()) return x[1] >= 0.0;
  return true;
}

/// Closed-loop vector field; `rate` receives hdot(t, x).
inline Point controlled_field(const ModelSpec& spec, const RateLaw& law, double t, const Point& x, double& rate) {
  if (!control_state_ok(spec, x))
    throw ControlError("control trajectory left the state space at t = " + std::to_string(t));
  rate = law ? law(t, x) : 0.0;
  if (!std::isfinite(rate)) throw ControlError("non-finite control rate at t = " + std::to_string(t));
  Point f = stratonovich_drift(spec, t, x);
  const Point s = diffusion(spec, x);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += s[i] * rate;
  return f;
}

/// One classical RK4 step of the state together with q' = hdot^2.
inline void rk4_step(const ModelSpec& spec, const RateLaw& law, double t, double h, Point& x, double& q) {
  const int d = spec.dim();
  double r1, r2, r3, r4;
  auto axpy = [&](const Point& a, const Point& k, double c) {
    Point y = a;
    for (int i = 0; i < d; ++i) y[static_cast<std::size_t>(i)] += c * k[static_cast<std::size_t>(i)];
    return y;
  };
  const Point k1 = controlled_field(spec, law, t, x, r1);
  const Point k2 = controlled_field(spec, law, t + 0.5 * h, axpy(x, k1, 0.5 * h), r2);
  const Point k3 = controlled_field(spec, law, t + 0.5 * h, axpy(x, k2, 0.5 * h), r3);
  const Point k4 = controlled_field(spec, law, t + h, axpy(x, k3, h), r4);
  for (int i = 0; i < d; ++i) {
    const auto j = static_cast<std::size_t>(i);
    x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  }
  q += h / 6.0 * (r1 * r1 + 2.0 * r2 * r2 + 2.0 * r3 * r3 + r4 * r4);
  if (!control_state_ok(spec, x))
    throw ControlError("control trajectory left the state space at t = " + std::to_string(t + h));
}

/// RK4 over [t, t + h], subdivided so that h times the local stiffness of the
/// HH part (gate relaxation and dF/dv) stays below one half.
inline void stable_step(const ModelSpec& spec, const RateLaw& law, double t, double h, Point& x, double& q) {
  std::size_t parts = 1;
  if (spec.dim() == 5) {
    const double v = x[0];
    double stiff = 36.0 * std::pow(x[1], 4) + 120.0 * std::pow(x[2], 3) * x[3] + 0.3;
    for (Gate g : {Gate::n, Gate::m, Gate::h}) stiff = std::max(stiff, alpha(g, v) + beta(g, v));
    if (std::isfinite(stiff)) parts = static_cast<std::size_t>(std::max(1.0, std::ceil(h * stiff / 0.5)));
  }
  const double sub = h / static_cast<double>(parts);
  for (std::size_t i = 0; i < parts; ++i) rk4_step(spec, law, t + static_cast<double>(i) * sub, sub, x, q);
}

struct Jump {
  double span = 0.0;
  double rate = 0.0;
};

/// Decides whether the trajectory is stationary apart from a constant drift of
/// the fast-forward component, and how far it may jump.
inline std::optional<Jump> plan_jump(const ModelSpec& spec, const PhasePlan& plan, double t, const Point& x,
                                     double dt) {
  const double period = spec.period();
  const auto c = static_cast<std::size_t>(plan.ff_component);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int j = 0; j < 4; ++j) {
    double r;
    const Point f = controlled_field(spec, plan.rate, t + period * j / 4.0, x, r);
    for (int i = 0; i < spec.dim(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (k == c) continue;
      if (std::abs(f[k]) > 1e-12 * (1.0 + std::abs(x[k]))) return std::nullopt;
    }
    lo = std::min(lo, f[c]);
    hi = std::max(hi, f[c]);
  }
  const double rate = 0.5 * (lo + hi);
  if (hi - lo > 1e-10 * (1.0 + std::abs(rate)) || rate == 0.0) return std::nullopt;
  const double remaining = (*plan.ff_target - x[c]) / rate;  // time to reach the target
  if (remaining < 4.0 * period) return std::nullopt;
  const double span = std::floor((remaining - 2.0 * period) / period) * period;
  if (span < std::max(period, dt)) return std::nullopt;
  return Jump{span, rate};
}

/// Integral of hdot^2 over a jump in which the fast component moves linearly:
/// the rate law is averaged over one period at each value of that component.
inline double jump_energy(const ModelSpec& spec, const PhasePlan& plan, double t, const Point& x, const Jump& j) {
  const double period = spec.period();
  const auto c = static_cast<std::size_t>(plan.ff_component);
  constexpr int kSamples = 64;
  auto averaged = [&](double value) {
    Point y = x;
    y[c] = value;
    double s = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const double r = plan.rate(t + period * i / kSamples, y);
      s += r * r;
    }
    return s / kSamples;
  };
  const double a = x[c];
  const double b = x[c] + j.rate * j.span;
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(averaged, std::min(a, b), std::max(a, b), 12, 1e-11);
  return integral / std::abs(j.rate);
}

}  // namespace detail

/// Classical RK4 integration of the control system along `program`, with
/// substeps where the HH part is stiff.
inline ControlRun integrate_control(const ModelSpec& spec, const Point& x0, double t0, const ControlProgram& program,
                                   const IntegrateOptions& opt = {}) {
  if (!(opt.dt > 0.0)) throw ConfigError("control dt must be positive");
  if (opt.record_every == 0) throw ConfigError("record_every must be positive");
  if (spec.is<DeterministicHH>()) throw DomainError("control systems need a stochastic model");
  if (!detail::control_state_ok(spec, x0)) throw DomainError("control start point lies outside the state space");
  ControlRun run;
  run.dim = spec.dim();
  run.dt = opt.dt;
  run.target = attainable_point(spec);
  double t = t0;
  Point x = x0;
  RateLaw current;
  auto record = [&](double time, const Point& state) {
    run.times.push_back(time);
    run.states.push_back(state);
    run.hdot.push_back(current ? current(time, state) : 0.0);
  };
  record(t, x);
  const std::size_t period_steps = std::max<std::size_t>(1, steps_per_period(spec, opt.dt));

  for (const auto& phase : program.phases) {
    PhasePlan plan = phase.plan(t, x);
    current = plan.rate;
    if (run.phases.empty() && current) run.hdot.back() = current(t, x);
    PhaseLog log;
    log.name = phase.name;
    log.t_start = t;
    run.ramp_distance += plan.ramp_distance;
    const double t_begin = t;

    if (plan.duration) {
      const double span = *plan.duration;
      const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / opt.dt - 1e-9)));
      const double h = span / static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) {
        detail::stable_step(spec, plan.rate, t, h, x, log.hdot_sq);
        t = t_begin + static_cast<double>(k + 1) * h;
        ++log.steps;
        if ((k + 1) % opt.record_every == 0 || k + 1 == n) record(t, x);
      }
    } else {
      while (!plan.done(t, x)) {
        if (t - t_begin >= plan.cap) {
          if (!plan.report_cap)
            throw ControlError("phase '" + phase.name + "' exceeded its cap of " + std::to_string(plan.cap) +
                               " ms before its stop rule held");
          log.capped = true;
          run.converged = false;
          break;
        }
        if (opt.fast_forward && plan.ff_target && log.steps % period_steps == 0 && log.steps > 0) {
          if (auto jump = detail::plan_jump(spec, plan, t, x, opt.dt)) {
            log.hdot_sq += detail::jump_energy(spec, plan, t, x, *jump);
            x[static_cast<std::size_t>(plan.ff_component)] += jump->rate * jump->span;
            t += jump->span;
            log.skipped += jump->span;
            record(t, x);
            continue;
          }
        }
        detail::stable_step(spec, plan.rate, t, opt.dt, x, log.hdot_sq);
        t += opt.dt;
        ++log.steps;
        if (log.steps % opt.record_every == 0) record(t, x);
      }
      if (run.times.back() != t) record(t, x);
    }
    log.t_end = t;
    run.hdot_sq += log.hdot_sq;
    run.phases.push_back(std::move(log));
  }
  run.terminal_distance = distance(x, run.target, spec.dim());
  return run;
}

// ---------------------------------------------------------------------------
// Constants of the construction

struct ControlConstants {
  double f = 0.0;       // bound on |F| over the voltage trap box (with safety factor)
  double C = 0.0;       // bound in the exponential gate/current convergence
  double lambda = 0.0;  // slowest gate relaxation rate on the trap
  double K = 0.0;       // threshold multiplier for the fifth component
};

/// Grid estimates over (-12, 120) x [0, 1]^3. F is monotone in each gate, so
/// gate corners carry the extremes of |F| and of its gate Lipschitz constant.
inline ControlConstants estimate_control_constants(int v_grid = 13201, double safety = 1.05, double margin = 2.0) {
  if (v_grid < 2) throw DomainError("control constant grid needs at least two voltages");
  constexpr double lo = -12.0;
  constexpr double hi = 120.0;
  double fmax = 0.0;
  double lip = 0.0;
  double lambda = std::numeric_limits<double>::infinity();
  for (int i = 0; i < v_grid; ++i) {
    const double v = lo + (hi - lo) * i / (v_grid - 1);
    for (int c = 0; c < 8; ++c) {
      const double n = c & 1, m = (c >> 1) & 1, h = (c >> 2) & 1;
      fmax = std::max(fmax, std::abs(current_F(v, n, m, h)));
    }
    // sup over gates of sum_j |dF/dj| is attained at n = m = h = 1
    lip = std::max(lip, 144.0 * std::abs(v + 12.0) + 360.0 * std::abs(v - 120.0) + 120.0 * std::abs(v - 120.0));
    if (i > 0 && i < v_grid - 1) {
      for (Gate g : {Gate::n, Gate::m, Gate::h}) lambda = std::min(lambda, alpha(g, v) + beta(g, v));
    }
  }
  ControlConstants k;
  k.f = safety * fmax;
  // gate deviations are bounded by |j0 - j_inf| e^{-(alpha + beta) s} <= e^{-lambda s}
  k.C = std::max(1.0, lip);
  k.lambda = lambda;
  // smallest integer K with (K - 121)(1 + f) - C / lambda > 1, plus the margin
  const double bound = 121.0 + (1.0 + k.C / k.lambda) / (1.0 + k.f);
  k.K = std::floor(bound) + 1.0 + margin;
  return k;
}

struct ControlParams {
  double epsilon = 1e-3;     // gate balls ending the coast of phase IV
  int k = 3;                 // voltage offset 10^{-k} in phase V
  double tol = 1e-2;         // phase VI stop distance
  double final_cap = 500.0;  // ms
  double cap_factor = 10.0;
  int smoothness = 5;
};

namespace detail {

struct FifthEquation {
  // b~_5(t, x) and sigma_5(x): hdot = (desired rate - drift) / sigma
  std::function<double(double, const Point&)> drift;
  std::function<double(const Point&)> sigma;
};

inline FifthEquation fifth_equation(const ModelSpec& spec) {
  if (spec.is<CirModel>()) {
    const auto cir = spec.as<CirModel>();
    return {[cir](double t, const Point& x) { return cir.a - 0.25 + cir.signal(t) - x[4]; },
            [](const Point& x) { return std::sqrt(x[4]); }};
  }
  const auto ou = spec.as<OuModel>();
  return {[ou](double t, const Point& x) { return ou.signal(t) - x[4]; }, [](const Point&) { return 1.0; }};
}

inline double gate_gap(const Point& x, const Point& target) {
  return std::max({std::abs(x[1] - target[1]), std::abs(x[2] - target[2]), std::abs(x[3] - target[3])});
}

}  // namespace detail

/// Six-phase program for the CIR and OU models (the OU version skips the
/// positivity phase III and aims at xi = 0).
inline ControlProgram synthesize_hh_control(const ModelSpec& spec, const Point& x0, const ControlConstants& k,
                                            const ControlParams& p = {}) {
  if (!spec.is<CirModel>() && !spec.is<OuModel>()) throw DomainError("HH control needs the CIR or OU model");
  if (!in_state_space(spec, x0)) throw DomainError("control start point lies outside the state space");
  if (!(p.epsilon > 0.0) || !(p.tol > 0.0) || p.k < 0) throw ConfigError("invalid control parameters");
  const bool cir = spec.is<CirModel>();
  const Point target = attainable_point(spec);
  const double vstar = target[0];
  const auto eq = detail::fifth_equation(spec);
  const double cf = p.cap_factor;
  const int order = p.smoothness;
  ControlProgram prog;
  prog.description = cir ? "CIR-HH six-phase control" : "OU-HH control";

  auto hold = [eq](double t, const Point& x) { return -eq.drift(t, x) / eq.sigma(x); };
  auto coast = [eq](double t, const Point& x) {
    return (current_F(x[0], x[1], x[2], x[3]) - eq.drift(t, x)) / eq.sigma(x);
  };

  if (distance(x0, target, 5) <= 1e-9) {
    prog.description += " (start at target)";
  } else {
    prog.phases.push_back({"I-II hold", [=](double, const Point& x) {
                             PhasePlan pl;
                             pl.rate = hold;
                             pl.done = [](double, const Point& y) { return y[0] > -12.0 && y[0] < 120.0; };
                             // outside the trap |v'| >= 0.3 |v - 10.6| (above) or >= 6.78 (below)
                             double est = 1.0;
                             if (x[0] >= 120.0) est += std::log((x[0] - 10.6) / (120.0 - 10.6)) / 0.3;
                             if (x[0] <= -12.0) est += (-12.0 - x[0]) / 6.78;
                             pl.cap = cf * est;
                             return pl;
                           }});
    if (cir) {
      const double level = k.K * (k.f + 1.0);
      prog.phases.push_back({"III raise", [=](double, const Point& x) {
                               PhasePlan pl;
                               pl.rate = [eq](double t, const Point& y) { return (1.0 - eq.drift(t, y)) / eq.sigma(y); };
                               pl.done = [level](double, const Point& y) { return y[4] >= level; };
                               pl.cap = cf * (std::max(0.0, level - x[4]) + 1.0 / k.lambda + 1.0);
                               pl.ff_target = level;
                               return pl;
                             }});
    }
    prog.phases.push_back({"IV ramp", [=](double t2, const Point& x) {
                             const SmoothRamp ramp({x[0], vstar, 1.0, order});
                             PhasePlan pl;
                             pl.rate = [eq, ramp, t2](double t, const Point& y) {
                               return (ramp.derivative(t - t2) + current_F(y[0], y[1], y[2], y[3]) - eq.drift(t, y)) /
                                      eq.sigma(y);
                             };
                             pl.duration = ramp.duration();
                             pl.ramp_distance = ramp.distance();
                             return pl;
                           }});
    prog.phases.push_back({"IV coast", [=](double, const Point&) {
                             PhasePlan pl;
                             pl.rate = coast;
                             const double eps = p.epsilon;
                             pl.done = [target, eps](double, const Point& y) { return detail::gate_gap(y, target) < eps; };
                             pl.cap = cf * (std::log(1.0 / eps) / k.lambda + 1.0);
                             return pl;
                           }});
    const double xi_goal = target[4];
    prog.phases.push_back({"V ramp", [=](double t3, const Point& x) {
                             const double offset = std::pow(10.0, -p.k);
                             // F_inf is increasing with F_inf(v*) = 0: lowering v makes xi fall
                             const double dir = x[4] > xi_goal ? -1.0 : 1.0;
                             const SmoothRamp ramp({x[0], x[0] + dir * offset, offset, order});
                             PhasePlan pl;
                             pl.rate = [eq, ramp, t3](double t, const Point& y) {
                               return (ramp.derivative(t - t3) + current_F(y[0], y[1], y[2], y[3]) - eq.drift(t, y)) /
                                      eq.sigma(y);
                             };
                             pl.duration = ramp.duration();
                             pl.ramp_distance = ramp.distance();
                             return pl;
                           }});
    prog.phases.push_back({"V coast", [=](double, const Point& x) {
                             PhasePlan pl;
                             pl.rate = coast;
                             const bool above = x[4] > xi_goal;
                             pl.done = [above, xi_goal](double, const Point& y) {
                               return above ? y[4] <= xi_goal : y[4] >= xi_goal;
                             };
                             const double drift = std::abs(F_infinity(x[0]));
                             pl.cap = cf * (std::abs(x[4] - xi_goal) / std::max(drift, 1e-300) + 10.0 / k.lambda);
                             pl.ff_target = xi_goal;
                             return pl;
                           }});
  }
  prog.phases.push_back({"VI hold", [=](double, const Point&) {
                           PhasePlan pl;
                           pl.rate = hold;
                           const double tol = p.tol;
                           pl.done = [target, tol](double, const Point& y) { return distance(y, target, 5) < tol; };
                           pl.cap = p.final_cap;
                           pl.report_cap = true;
                           return pl;
                         }});
  return prog;
}

inline ControlProgram synthesize_cir_control(const ModelSpec& spec, const Point& x0, const ControlConstants& k,
                                             const ControlParams& p = {}) {
  if (!spec.is<CirModel>()) throw DomainError("synthesize_cir_control needs the CIR model");
  return synthesize_hh_control(spec, x0, k, p);
}

inline ControlProgram synthesize_ou_control(const ModelSpec& spec, const Point& x0, const ControlConstants& k,
                                            const ControlParams& p = {}) {
  if (!spec.is<OuModel>()) throw DomainError("synthesize_ou_control needs the OU model");
  return synthesize_hh_control(spec, x0, k, p);
}

/// Toy program: hdot ramps smoothly from 1 to 0 over `ramp_time`, then vanishes.
inline ControlProgram synthesize_toy_control(double horizon = 30.0, double ramp_time = 2.0, int smoothness = 5) {
  if (!(ramp_time > 1.0)) throw ConfigError("toy ramp time must exceed 1");
  if (!(horizon >= ramp_time)) throw ConfigError("toy control horizon must cover the ramp");
  ControlProgram prog;
  prog.description = "toy ramp control";
  const SmoothRamp ramp({1.0, 0.0, 1.0 / (ramp_time - 1.0), smoothness});
  prog.phases.push_back({"ramp", [=](double t0, const Point&) {
                           PhasePlan pl;
                           pl.rate = [ramp, t0](double t, const Point&) { return ramp(t - t0); };
                           pl.duration = horizon;
                           return pl;
                         }});
  return prog;
}

/// Decay rate of |dxi/ds| = |F| during a coast phase, fitted by least squares on
/// log|F| over the second half of the recorded samples.
inline std::optional<double> coast_decay_rate(const ControlRun& run, const std::string& phase) {
  const PhaseLog* log = run.phase(phase);
  if (!log) return std::nullopt;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    if (run.times[i] < log->t_start || run.times[i] > log->t_end) continue;
    const Point& x = run.states[i];
    const double F = std::abs(current_F(x[0], x[1], x[2], x[3]));
    if (F > 1e-13) pts.emplace_back(run.times[i], std::log(F));
  }
  if (pts.size() < 8) return std::nullopt;
  pts.erase(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(pts.size() / 2));
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(pts.size());
  for (auto [t, y] : pts) {
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double den = n * stt - st * st;
  if (den <= 0.0) return std::nullopt;
  return -(n * sty - st * sy) / den;
}

inline void write_control_csv(std::ostream& out, const ModelSpec& spec, const ControlRun& run) {
  out << "t";
  for (const auto& n : coordinate_names(spec)) out << ',' << n;
  out << ",hdot\n" << std::setprecision(17);
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    out << run.times[i];
    for (int j = 0; j < run.dim; ++j) out << ',' << run.states[i][static_cast<std::size_t>(j)];
    out << ',' << run.hdot[i] << '\n';
  }
}

}  // namespace periodic_harris
