#pragma once

// Lyapunov functions, Monte Carlo drift estimates P_{0,T}V, the fitted drift
// inequality P_{0,T}V <= lambda V + delta, and long-run ergodic averages.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/parallel.hpp"
#include "periodic_harris/sde.hpp"

namespace periodic_harris {

/// Even C^2 bump: psi(y) = |y| for |y| > 1, 3/8 + 3/4 y^2 - 1/8 y^4 inside.
inline double lyapunov_bump(double y) {
  const double a = std::abs(y);
  if (a > 1.0) return a;
  const double y2 = y * y;
  return 0.375 + 0.75 * y2 - 0.125 * y2 * y2;
}

/// V = 1 + log^2 xi + xi^2 + psi(v) (CIR) or 1 + xi^2 + psi(v) (OU).
inline double eval_V(const ModelSpec& spec, const Point& x) {
  if (spec.is<CirModel>()) {
    if (!(x[4] > 0.0)) throw DomainError("the CIR Lyapunov function needs xi > 0");
    const double l = std::log(x[4]);
    return 1.0 + l * l + x[4] * x[4] + lyapunov_bump(x[0]);
  }
  if (spec.is<OuModel>()) return 1.0 + x[4] * x[4] + lyapunov_bump(x[0]);
  throw DomainError("Lyapunov functions are defined for the CIR and OU models");
}

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Mean of V(X_T) over independent replicas started at (0, x).
inline Estimate mc_drift_estimate(const ModelSpec& spec, const Point& x, double T, std::size_t replicas,
                                  const SimConfig& config) {
  if (T == 0.0) return {eval_V(spec, x), 0.0};
  if (!(T > 0.0)) throw ConfigError("lyapunov.T must be nonnegative");
  if (replicas < 2) throw ConfigError("lyapunov.replicas must be at least 2");
  SimConfig c = config;
  c.horizon = T;
  const std::vector<Point> ends = terminal_states(spec, x, 0.0, c, replicas);
  std::vector<double> vals(replicas);
  for (std::size_t i = 0; i < replicas; ++i) {
    Point y = ends[i];
    if (spec.is<CirModel>()) y[4] = std::max(y[4], std::numeric_limits<double>::min());
    vals[i] = eval_V(spec, y);
  }
  const double n = static_cast<double>(replicas);
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

struct DriftPoint {
  Point x{};
  std::string group;
  double V = 0.0;
  Estimate estimate;
};

struct DriftFit {
  double lambda = 0.0;
  double delta = 0.0;     // lifted so that lambda V + delta covers every point estimate
  double delta_ls = 0.0;  // least-squares intercept
  double lambda_stderr = 0.0;
  std::size_t used = 0;
  std::vector<std::size_t> violations;  // indices with estimate - 3 stderr > lambda V + delta
};

struct DriftReport {
  double T = 0.0;
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
  std::vector<DriftPoint> points;
  DriftFit fit;
};

/// Twenty test points: five each near equilibrium, at large |v|, at large xi,
/// and at xi near 0 (CIR) or large negative xi (OU).
inline std::vector<DriftPoint> drift_design(const ModelSpec& spec) {
  if (!spec.is<CirModel>() && !spec.is<OuModel>()) throw DomainError("drift design needs the CIR or OU model");
  const bool cir = spec.is<CirModel>();
  const Point star = attainable_point(spec);
  auto at = [](double v, double xi) {
    return Point{v, gate_equilibrium(Gate::n, v), gate_equilibrium(Gate::m, v), gate_equilibrium(Gate::h, v), xi};
  };
  std::vector<DriftPoint> pts;
  const double xi0 = star[4];
  const double near_v[] = {0.0, -2.0, 2.0, 1.0, -1.0};
  const double near_xi[] = {0.0, 0.2, -0.2, 0.5, 0.4};
  for (int i = 0; i < 5; ++i) pts.push_back({at(star[0] + near_v[i], xi0 + near_xi[i]), "equilibrium", 0.0, {}});
  for (double v : {-60.0, -30.0, 60.0, 100.0, 150.0}) pts.push_back({at(v, cir ? 1.0 : 0.0), "large_v", 0.0, {}});
  for (double xi : {10.0, 20.0, 50.0, 100.0, 200.0}) pts.push_back({at(star[0], xi), "large_xi", 0.0, {}});
  if (cir) {
    for (double xi : {1e-3, 1e-2, 5e-2, 0.1, 0.2}) pts.push_back({at(star[0], xi), "small_xi", 0.0, {}});
  } else {
    for (double xi : {-10.0, -20.0, -50.0, -100.0, -200.0}) pts.push_back({at(star[0], xi), "negative_xi", 0.0, {}});
  }
  for (auto& p : pts) p.V = eval_V(spec, p.x);
  return pts;
}

/// Indices with estimate - 3 stderr > lambda V + delta.
inline std::vector<std::size_t> drift_violations(std::span<const DriftPoint> pts, double lambda, double delta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (pts[i].estimate.value - 3.0 * pts[i].estimate.stderr_ > lambda * pts[i].V + delta + 1e-12 * pts[i].V)
      out.push_back(i);
  return out;
}

/// Least squares of estimate against V subject to lambda, delta >= 0, using
/// points with V >= v_floor. The reported delta is then raised to the smallest
/// value for which the fitted line bounds every point estimate from above.
inline DriftFit fit_drift_inequality(std::span<const DriftPoint> pts, double v_floor = 0.0) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (pts[i].V >= v_floor) idx.push_back(i);
  if (idx.size() < 2) throw DomainError("drift fit needs at least two points above the floor");
  const double n = static_cast<double>(idx.size());
  double sv = 0, se = 0;
  for (auto i : idx) {
    sv += pts[i].V;
    se += pts[i].estimate.value;
  }
  const double mv = sv / n, me = se / n;
  double sxx = 0, sxy = 0;
  for (auto i : idx) {
    sxx += (pts[i].V - mv) * (pts[i].V - mv);
    sxy += (pts[i].V - mv) * (pts[i].estimate.value - me);
  }
  if (!(sxx > 1e-12 * (1.0 + mv * mv) * n)) throw DomainError("degenerate drift design: all V values coincide");
  DriftFit fit;
  fit.used = idx.size();
  fit.lambda = sxy / sxx;
  fit.delta = me - fit.lambda * mv;
  if (fit.lambda < 0.0) {
    fit.lambda = 0.0;
    fit.delta = std::max(0.0, me);
  } else if (fit.delta < 0.0) {
    double vv = 0, ve = 0;
    for (auto i : idx) {
      vv += pts[i].V * pts[i].V;
      ve += pts[i].V * pts[i].estimate.value;
    }
    fit.delta = 0.0;
    fit.lambda = std::max(0.0, ve / vv);
  }
  double rss = 0.0;
  for (auto i : idx) {
    const double r = pts[i].estimate.value - fit.lambda * pts[i].V - fit.delta;
    rss += r * r;
  }
  fit.lambda_stderr = idx.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  fit.delta_ls = fit.delta;
  for (auto i : idx) fit.delta = std::max(fit.delta, pts[i].estimate.value - fit.lambda * pts[i].V);
  fit.violations = drift_violations(pts, fit.lambda, fit.delta);
  return fit;
}

/// Estimates P_{0,T}V on the default design and fits the drift inequality.
inline DriftReport drift_report(const ModelSpec& spec, double T, std::size_t replicas, const SimConfig& config,
                                double v_floor = 0.0) {
  if (replicas < 100) throw ConfigError("lyapunov.replicas must be at least 100");
  DriftReport rep;
  rep.T = T;
  rep.replicas = replicas;
  rep.seed = config.seed;
  rep.points = drift_design(spec);
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    SimConfig c = config;
    c.stream = config.stream + i * replicas;  // disjoint replica streams per point
    rep.points[i].estimate = mc_drift_estimate(spec, rep.points[i].x, T, replicas, c);
  }
  rep.fit = fit_drift_inequality(rep.points, v_floor);
  return rep;
}

inline void write_drift_csv(std::ostream& out, const DriftReport& rep) {
  out << "V,estimate,stderr\n" << std::setprecision(17);
  for (const auto& p : rep.points) out << p.V << ',' << p.estimate.value << ',' << p.estimate.stderr_ << '\n';
}

/// Mean and variance of the OU input xi_T from xi0:
/// mean xi0 e^{-T} + int_0^T e^{-(T-r)} S(r) dr, variance (1 - e^{-2T}) / 2.
inline Moments ou_input_moments(const Signal& s, double xi0, double T) {
  if (!(T >= 0.0)) throw DomainError("ou_input_moments requires T >= 0");
  const double forced = T == 0.0 ? 0.0
                                 : boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                                       [&](double r) { return std::exp(-(T - r)) * s(r); }, 0.0, T, 15, 1e-13);
  return {xi0 * std::exp(-T) + forced, 0.5 * (1.0 - std::exp(-2.0 * T))};
}

// ---------------------------------------------------------------------------
// Ergodic averages

struct ErgodicAverage {
  std::vector<double> checkpoints;  // skeleton index or time
  std::vector<double> running;      // average at each checkpoint
  double mean = 0.0;
  double naive_stderr = 0.0;  // sample sd / sqrt(n), ignoring correlation
  double batch_stderr = 0.0;  // batch means over 20 batches
};

namespace detail {

inline void finish_average(ErgodicAverage& out, const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  if (samples.size() < 2) return;
  const double m = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - m) * (v - m);
  out.naive_stderr = std::sqrt(ss / (n - 1.0) / n);
  constexpr std::size_t kBatches = 20;
  const std::size_t len = samples.size() / kBatches;
  if (len == 0) {
    out.batch_stderr = out.naive_stderr;
    return;
  }
  std::vector<double> means;
  for (std::size_t b = 0; b < kBatches; ++b) {
    const auto first = samples.begin() + static_cast<std::ptrdiff_t>(b * len);
    means.push_back(std::accumulate(first, first + static_cast<std::ptrdiff_t>(len), 0.0) / static_cast<double>(len));
  }
  const double bm = std::accumulate(means.begin(), means.end(), 0.0) / kBatches;
  double bs = 0.0;
  for (double v : means) bs += (v - bm) * (v - bm);
  out.batch_stderr = std::sqrt(bs / (kBatches - 1.0) / kBatches);
}

}  // namespace detail

/// Partial averages (1/j) sum_{k <= j} G(X_kT), reported for every j.
inline ErgodicAverage ergodic_average_skeleton(const ModelSpec& spec, const Point& x0,
                                               const std::function<double(const Point&)>& G, std::size_t n,
                                               const SimConfig& config) {
  const auto chain = simulate_skeleton(spec, x0, n, config);
  ErgodicAverage out;
  std::vector<double> samples;
  samples.reserve(n);
  double sum = 0.0;
  for (std::size_t j = 0; j < chain.size(); ++j) {
    samples.push_back(G(chain[j]));
    sum += samples.back();
    out.checkpoints.push_back(static_cast<double>(j + 1));
    out.running.push_back(sum / static_cast<double>(j + 1));
  }
  out.mean = out.running.empty() ? 0.0 : out.running.back();
  detail::finish_average(out, samples);
  return out;
}

/// Trapezoidal time average (1/t) int_0^t F(s mod T, X_s) ds along one path,
/// recorded at checkpoints base * 2^k and at the horizon.
inline ErgodicAverage ergodic_average_continuous(const ModelSpec& spec, const Point& x0,
                                                 const std::function<double(double, const Point&)>& F,
                                                 double horizon, const SimConfig& config, double base = 100.0) {
  config.validate(spec);
  if (!(horizon > 0.0)) throw ConfigError("averaging horizon must be positive");
  Stepper st(spec, x0, 0.0, config.dt, config.scheme);
  Rng rng(config.seed, config.stream);
  const double period = spec.period();
  const auto steps = static_cast<std::size_t>(std::llround(horizon / config.dt));
  const bool noisy = spec.stochastic();
  ErgodicAverage out;
  double integral = 0.0;
  double prev = F(0.0, st.state());
  double next_checkpoint = base;
  // per-period integrals feed the batch error estimate
  std::vector<double> per_period;
  double period_acc = 0.0;
  const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(period / config.dt)));
  for (std::size_t k = 0; k < steps; ++k) {
    st.step(noisy ? st.sqrt_dt() * rng.gaussian() : 0.0);
    const double t = st.time();
    const double cur = F(std::fmod(t, period), st.state());
    const double piece = 0.5 * (prev + cur) * config.dt;
    integral += piece;
    period_acc += piece;
    prev = cur;
    if ((k + 1) % per == 0) {
      per_period.push_back(period_acc / period);
      period_acc = 0.0;
    }
    if (t >= next_checkpoint - 1e-9 || k + 1 == steps) {
      out.checkpoints.push_back(t);
      out.running.push_back(integral / t);
      while (next_checkpoint <= t + 1e-9) next_checkpoint *= 2.0;
    }
  }
  out.mean = out.running.back();
  detail::finish_average(out, per_period);
  return out;
}

}  // namespace periodic_harris
