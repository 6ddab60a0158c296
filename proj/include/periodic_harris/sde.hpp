#pragma once

// Euler-Maruyama integration of the Ito SDEs, with full truncation of the CIR
// square root, T-skeleton and geometric-resolvent sampling, closed-form toy
// moments, and path export.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/parallel.hpp"
#include "periodic_harris/random.hpp"

namespace periodic_harris {

enum class Scheme { EulerMaruyama, CirFullTruncation };

inline const char* scheme_name(Scheme s) {
  return s == Scheme::EulerMaruyama ? "euler_maruyama" : "cir_full_truncation";
}

inline Scheme default_scheme(const ModelSpec& spec) {
  return spec.is<CirModel>() ? Scheme::CirFullTruncation : Scheme::EulerMaruyama;
}

struct SimConfig {
  double dt = 0.01;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  Scheme scheme = Scheme::EulerMaruyama;
  std::size_t record_every = 1;  // keep every k-th state
  unsigned threads = 0;

  void validate(const ModelSpec& spec) const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ConfigError("sim.horizon must be nonnegative");
    if (record_every == 0) throw ConfigError("sim.record_every must be positive");
    if (spec.is<CirModel>() && scheme != Scheme::CirFullTruncation)
      throw ConfigError("CIR input requires the full-truncation scheme");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }
};

inline SimConfig default_sim_config(const ModelSpec& spec) {
  SimConfig c;
  c.scheme = default_scheme(spec);
  return c;
}

struct StepCounters {
  std::size_t steps = 0;
  std::size_t truncations = 0;  // steps whose raw CIR iterate was <= 0
  std::size_t clamps = 0;       // gate values pulled back into [0, 1]

  StepCounters& operator+=(const StepCounters& o) {
    steps += o.steps;
    truncations += o.truncations;
    clamps += o.clamps;
    return *this;
  }
};

/// One-step Euler-Maruyama integrator holding the raw iterate.
class Stepper {
 public:
  Stepper(const ModelSpec& spec, const Point& x0, double t0, double dt, Scheme scheme)
      : spec_(&spec), x_(x0), t0_(t0), dt_(dt), sqrt_dt_(std::sqrt(dt)), scheme_(scheme) {
    if (!in_state_space(spec, x0))
      throw DomainError("initial state outside the state space of the " + spec.name() + " model");
    if (spec.is<CirModel>() && scheme != Scheme::CirFullTruncation)
      throw ConfigError("CIR input requires the full-truncation scheme");
  }

  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }
  double time() const { return t0_ + static_cast<double>(k_) * dt_; }
  std::size_t step_index() const { return k_; }
  const Point& raw() const { return x_; }
  const StepCounters& counters() const { return counters_; }

  /// State as reported: the CIR coordinate is max(xi, 0).
  Point state() const {
    Point p = x_;
    if (spec_->is<CirModel>()) p[4] = std::max(p[4], 0.0);
    return p;
  }

  /// Advances by one step with Brownian increment dW (ignored for deterministic models).
  void step(double dW) {
    const double t = time();
    const Point b = drift_unchecked(*spec_, t, x_);
    const Point s = diffusion_unchecked(*spec_, x_);
    const int d = spec_->dim();
    for (int i = 0; i < d; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      x_[iu] += b[iu] * dt_ + s[iu] * dW;
    }
    if (d >= 4) {
      for (std::size_t j = 1; j <= 3; ++j) {
        if (x_[j] < 0.0) {
          x_[j] = 0.0;
          ++counters_.clamps;
        } else if (x_[j] > 1.0) {
          x_[j] = 1.0;
          ++counters_.clamps;
        }
      }
    }
    if (spec_->is<CirModel>() && x_[4] <= 0.0) ++counters_.truncations;
    for (int i = 0; i < d; ++i)
      if (!std::isfinite(x_[static_cast<std::size_t>(i)]))
        throw SimulationError("non-finite state in coordinate " + std::to_string(i + 1), k_ + 1);
    ++k_;
    ++counters_.steps;
  }

 private:
  const ModelSpec* spec_;
  Point x_;
  double t0_;
  double dt_;
  double sqrt_dt_;
  Scheme scheme_;
  std::size_t k_ = 0;
  StepCounters counters_;
};

/// A discretized trajectory. `states[i]` is the state at `time(i)`;
/// `noise[i]` is the Brownian increment between states i and i+1.
struct PathRecord {
  int dim = 0;
  double t0 = 0.0;
  double dt = 0.0;  // spacing of recorded states
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<Point> states;
  std::vector<double> noise;
  StepCounters counters;

  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  std::size_t size() const { return states.size(); }
};

namespace detail {

inline PathRecord run_path(const ModelSpec& spec, const Point& x0, double t0, const SimConfig& config,
                           std::size_t steps, auto&& next_increment) {
  config.validate(spec);
  Stepper stepper(spec, x0, t0, config.dt, config.scheme);
  PathRecord rec;
  rec.dim = spec.dim();
  rec.t0 = t0;
  rec.dt = config.dt * static_cast<double>(config.record_every);
  rec.seed = config.seed;
  rec.stream = config.stream;
  rec.states.reserve(steps / config.record_every + 1);
  rec.noise.reserve(steps / config.record_every);
  rec.states.push_back(stepper.state());
  double accumulated = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double dW = next_increment(k);
    stepper.step(dW);
    accumulated += dW;
    if ((k + 1) % config.record_every == 0) {
      rec.states.push_back(stepper.state());
      rec.noise.push_back(accumulated);
      accumulated = 0.0;
    }
  }
  rec.counters = stepper.counters();
  return rec;
}

}  // namespace detail

/// Simulates one path on [t0, t0 + horizon] with noise from (seed, stream).
inline PathRecord simulate_path(const ModelSpec& spec, const Point& x0, double t0, const SimConfig& config) {
  Rng rng(config.seed, config.stream);
  const double sq = std::sqrt(config.dt);
  const bool noisy = spec.stochastic();
  return detail::run_path(spec, x0, t0, config, config.steps(),
                          [&](std::size_t) { return noisy ? sq * rng.gaussian() : 0.0; });
}

/// Simulates one path driven by prescribed Brownian increments (one per step).
inline PathRecord simulate_path(const ModelSpec& spec, const Point& x0, double t0, const SimConfig& config,
                                std::span<const double> increments) {
  return detail::run_path(spec, x0, t0, config, increments.size(),
                          [&](std::size_t k) { return increments[k]; });
}

/// Number of integration steps per drift period; the period must be a multiple of dt.
inline std::size_t steps_per_period(const ModelSpec& spec, double dt) {
  const double ratio = spec.period() / dt;
  const auto n = static_cast<std::size_t>(std::llround(ratio));
  if (n == 0 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio)
    throw ConfigError("sim.dt must divide the signal period T");
  return n;
}

/// X_T, X_2T, ..., X_kT along one path started at time 0.
inline std::vector<Point> simulate_skeleton(const ModelSpec& spec, const Point& x0, std::size_t k,
                                            const SimConfig& config) {
  config.validate(spec);
  std::vector<Point> out;
  if (k == 0) return out;
  const std::size_t per = steps_per_period(spec, config.dt);
  Stepper stepper(spec, x0, 0.0, config.dt, config.scheme);
  Rng rng(config.seed, config.stream);
  const double sq = std::sqrt(config.dt);
  const bool noisy = spec.stochastic();
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t s = 0; s < per; ++s) stepper.step(noisy ? sq * rng.gaussian() : 0.0);
    out.push_back(stepper.state());
  }
  return out;
}

struct ResolventSample {
  std::vector<Point> states;
  std::vector<std::size_t> periods;  // the geometric draws K
};

/// Draws K ~ Geometric with P(K = k) = (1 - p) p^(k-1), k >= 1, and returns X_KT
/// from an independent path per sample.
inline ResolventSample resolvent_sample(const ModelSpec& spec, const Point& x0, double p, std::size_t count,
                                        const SimConfig& config) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("resolvent parameter p must lie in (0, 1)");
  config.validate(spec);
  ResolventSample out;
  out.states.resize(count);
  out.periods.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(config.seed, 2 * (config.stream + i));
    std::geometric_distribution<std::size_t> geom(1.0 - p);
    out.periods[i] = 1 + geom(rng.engine());
  }
  parallel_for(
      count,
      [&](std::size_t i) {
        SimConfig c = config;
        c.stream = 2 * (config.stream + i) + 1;
        out.states[i] = simulate_skeleton(spec, x0, out.periods[i], c).back();
      },
      config.threads);
  return out;
}

/// Terminal states X_{t0 + horizon} of `replicas` independent paths (stream = replica index).
inline std::vector<Point> terminal_states(const ModelSpec& spec, const Point& x0, double t0,
                                          const SimConfig& config, std::size_t replicas) {
  config.validate(spec);
  std::vector<Point> out(replicas);
  const std::size_t steps = config.steps();
  parallel_for(
      replicas,
      [&](std::size_t i) {
        Stepper stepper(spec, x0, t0, config.dt, config.scheme);
        Rng rng(config.seed, config.stream + i);
        const double sq = stepper.sqrt_dt();
        for (std::size_t k = 0; k < steps; ++k) stepper.step(sq * rng.gaussian());
        out[i] = stepper.state();
      },
      config.threads);
  return out;
}

// ---------------------------------------------------------------------------
// Toy model closed forms

/// S(t) = c * int_0^t sin^2(2 pi r) dr.
inline double toy_integrated_rate(double c, double t) {
  return c * (0.5 * t - std::sin(4.0 * std::numbers::pi * t) / (8.0 * std::numbers::pi));
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of the toy first coordinate at time t, started from xi0 at time 0.
inline Moments toy_closed_form(double c, double xi0, double t) {
  if (!(t >= 0.0)) throw DomainError("toy_closed_form requires t >= 0");
  const double st = toy_integrated_rate(c, t);
  Moments m;
  m.mean = xi0 * std::exp(-st);
  if (t == 0.0) return m;
  auto integrand = [&](double r) { return std::exp(-2.0 * (st - toy_integrated_rate(c, r))); };
  double err = 0.0;
  m.variance = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, t, 15, 1e-13, &err);
  return m;
}

/// E[psi_t] for the toy second coordinate: 1 + (psi0 - 1) e^{-t}.
inline double toy_psi_mean(double psi0, double t) { return 1.0 + (psi0 - 1.0) * std::exp(-t); }

// ---------------------------------------------------------------------------
// Export

inline std::vector<std::string> coordinate_names(const ModelSpec& spec) {
  if (spec.is<ToyModel>()) return {"xi", "psi"};
  if (spec.is<DeterministicHH>()) return {"v", "n", "m", "h"};
  return {"v", "n", "m", "h", "xi"};
}

inline void write_path_csv(std::ostream& out, const ModelSpec& spec, const PathRecord& path) {
  out << "t";
  for (const auto& n : coordinate_names(spec)) out << ',' << n;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < path.size(); ++i) {
    out << path.time(i);
    for (int j = 0; j < path.dim; ++j) out << ',' << path.states[i][static_cast<std::size_t>(j)];
    out << '\n';
  }
}

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

inline void put_le(std::ostream& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

}  // namespace detail

inline constexpr std::uint32_t kPathFrameVersion = 1;

/// Binary frame: "PHPR", u32 version, u32 d, u64 count, then `count` rows of
/// (d + 1) f64 values (t, x1..xd); all little-endian.
inline void write_path_binary(std::ostream& out, const PathRecord& path) {
  out.write("PHPR", 4);
  detail::put_le(out, kPathFrameVersion);
  detail::put_le(out, static_cast<std::uint32_t>(path.dim));
  detail::put_le(out, static_cast<std::uint64_t>(path.size()));
  for (std::size_t i = 0; i < path.size(); ++i) {
    detail::put_le(out, path.time(i));
    for (int j = 0; j < path.dim; ++j) detail::put_le(out, path.states[i][static_cast<std::size_t>(j)]);
  }
}

}  // namespace periodic_harris
