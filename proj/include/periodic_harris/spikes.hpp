#pragma once

// Spike detection through the gating variables: a spike starts when the state
// enters {m > h} and ends at the first exit to {m < h} after a refractory
// period delta. Interspike intervals, empirical CDFs and Kolmogorov-Smirnov
// convergence diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/parallel.hpp"
#include "periodic_harris/random.hpp"
#include "periodic_harris/sde.hpp"

namespace periodic_harris {

enum class Region { Spike, Between, Boundary };

inline Region classify(const State5& x) {
  if (x.m > x.h) return Region::Spike;
  if (x.m < x.h) return Region::Between;
  return Region::Boundary;
}

inline const char* region_name(Region r) {
  switch (r) {
    case Region::Spike: return "spike";
    case Region::Between: return "between";
    case Region::Boundary: return "boundary";
  }
  return "";
}

struct SpikeTrain {
  std::vector<double> taus;
  std::vector<double> sigmas;
  double delta = 2.0;
  std::string source;
  std::size_t dropped = 0;  // spikes cut off by the end of the path

  std::size_t size() const { return taus.size(); }

  std::vector<double> isis() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < taus.size(); ++i) out.push_back(taus[i] - taus[i - 1]);
    return out;
  }

  /// Total time spent between entry and exit of recorded spikes.
  double time_spiking() const {
    double s = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) s += sigmas[i] - taus[i];
    return s;
  }
};

/// Streaming detector fed with samples of g = m - h on an increasing time grid.
class SpikeDetector {
 public:
  explicit SpikeDetector(double delta) : delta_(delta) {
    if (!(delta > 0.0)) throw ConfigError("refractory period delta must be positive");
    train_.delta = delta;
  }

  /// Returns true when the sample completed a spike (its exit time was fixed).
  bool observe(double t, double g) {
    bool completed = false;
    if (!started_) {
      started_ = true;
      last_sigma_ = t;
      phase_ = g <= 0.0 ? Phase::armed : Phase::disarmed;
    } else {
      switch (phase_) {
        case Phase::disarmed:
          if (g <= 0.0) phase_ = Phase::armed;
          break;
        case Phase::armed:
          if (g > 0.0) {
            const double tau = prev_t_ + (t - prev_t_) * (-prev_g_) / (g - prev_g_);
            if (tau > last_sigma_) {
              tau_ = tau;
              phase_ = Phase::spiking;
            } else {
              phase_ = Phase::disarmed;
            }
          }
          break;
        case Phase::spiking:
          if (t >= tau_ + delta_ && g < 0.0) {
            double sigma = tau_ + delta_;
            if (prev_g_ >= 0.0) sigma = std::max(sigma, prev_t_ + (t - prev_t_) * prev_g_ / (prev_g_ - g));
            train_.taus.push_back(tau_);
            train_.sigmas.push_back(sigma);
            last_sigma_ = sigma;
            phase_ = Phase::armed;
            completed = true;
          }
          break;
      }
    }
    prev_t_ = t;
    prev_g_ = g;
    return completed;
  }

  bool in_spike() const { return phase_ == Phase::spiking; }
  /// Entry time of the spike in progress (meaningful while in_spike()).
  double pending_tau() const { return tau_; }

  /// Closes the train: an entry without exit is dropped and counted.
  SpikeTrain finish() {
    SpikeTrain out = train_;
    if (phase_ == Phase::spiking) ++out.dropped;
    return out;
  }

  const SpikeTrain& train() const { return train_; }

 private:
  enum class Phase { disarmed, armed, spiking };
  double delta_;
  bool started_ = false;
  Phase phase_ = Phase::disarmed;
  double prev_t_ = 0.0;
  double prev_g_ = 0.0;
  double tau_ = 0.0;
  double last_sigma_ = 0.0;
  SpikeTrain train_;
};

/// Spike train of a recorded HH path (uses coordinates m and h).
inline SpikeTrain detect_spikes(const PathRecord& path, double delta) {
  if (path.dim < 4) throw DomainError("spike detection needs a Hodgkin-Huxley path");
  SpikeDetector det(delta);
  for (std::size_t i = 0; i < path.size(); ++i) det.observe(path.time(i), path.states[i][2] - path.states[i][3]);
  SpikeTrain out = det.finish();
  out.source = "seed " + std::to_string(path.seed) + " stream " + std::to_string(path.stream);
  return out;
}

// ---------------------------------------------------------------------------
// Empirical distribution functions

class EmpiricalCDF {
 public:
  EmpiricalCDF() = default;
  explicit EmpiricalCDF(std::vector<double> samples) : sorted_(std::move(samples)) {
    std::sort(sorted_.begin(), sorted_.end());
  }

  /// Right-continuous F(t) = #{samples <= t} / n.
  double operator()(double t) const {
    if (sorted_.empty()) throw DomainError("empty empirical CDF");
    const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin();
    return static_cast<double>(k) / static_cast<double>(sorted_.size());
  }

  std::size_t size() const { return sorted_.size(); }
  bool empty() const { return sorted_.empty(); }
  const std::vector<double>& samples() const { return sorted_; }

  EmpiricalCDF merged(const EmpiricalCDF& other) const {
    std::vector<double> all;
    all.reserve(sorted_.size() + other.sorted_.size());
    std::merge(sorted_.begin(), sorted_.end(), other.sorted_.begin(), other.sorted_.end(),
               std::back_inserter(all));
    EmpiricalCDF out;
    out.sorted_ = std::move(all);
    return out;
  }

 private:
  std::vector<double> sorted_;
};

inline EmpiricalCDF isi_cdf(const SpikeTrain& train) {
  if (train.taus.size() < 2) throw DomainError("an ISI distribution needs at least two spikes");
  return EmpiricalCDF(train.isis());
}

/// sup_t |a(t) - b(t)|, evaluated exactly on the union of jump points.
inline double ks_distance(const EmpiricalCDF& a, const EmpiricalCDF& b) {
  if (a.empty() || b.empty()) throw DomainError("KS distance of an empty CDF");
  const auto& x = a.samples();
  const auto& y = b.samples();
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < x.size() || j < y.size()) {
    double t;
    if (j >= y.size() || (i < x.size() && x[i] <= y[j])) t = x[i];
    else t = y[j];
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Glivenko-Cantelli diagnostics

struct GcAnalysis {
  std::size_t block = 0;
  std::size_t isi_count = 0;
  std::vector<double> consecutive_block_ks;  // KS(block j, block j+1), per path
  std::vector<double> block_vs_pooled_ks;    // KS(block j, pooled)
  std::vector<double> cumulative_trend;      // median over paths of KS(first j blocks, pooled)
  bool trend_nonincreasing = true;
  std::optional<double> split_half_ks;       // first half vs second half of all ISIs (path order)
};

/// Block statistics for ISI sequences (one vector per independent path).
inline GcAnalysis gc_analyze(const std::vector<std::vector<double>>& isis, std::size_t block,
                             std::size_t trend_blocks = 4) {
  if (block == 0) throw ConfigError("block size must be positive");
  GcAnalysis out;
  out.block = block;
  std::vector<double> all;
  for (const auto& p : isis) all.insert(all.end(), p.begin(), p.end());
  out.isi_count = all.size();
  if (all.empty()) return out;
  const EmpiricalCDF pooled(all);
  if (all.size() >= 2) {
    const auto half = static_cast<std::ptrdiff_t>(all.size() / 2);
    out.split_half_ks = ks_distance(EmpiricalCDF({all.begin(), all.begin() + half}),
                                    EmpiricalCDF({all.begin() + half, all.begin() + 2 * half}));
  }
  std::vector<std::vector<double>> trend_per_path;
  for (const auto& p : isis) {
    const std::size_t nblocks = p.size() / block;
    std::vector<EmpiricalCDF> blocks;
    for (std::size_t j = 0; j < nblocks; ++j) {
      const auto first = p.begin() + static_cast<std::ptrdiff_t>(j * block);
      blocks.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(block)));
    }
    if (nblocks == 1 && isis.size() == 1 && p.size() == block) {
      // a single block covering everything: nothing to compare
      continue;
    }
    for (std::size_t j = 0; j + 1 < nblocks; ++j) out.consecutive_block_ks.push_back(ks_distance(blocks[j], blocks[j + 1]));
    for (const auto& b : blocks) out.block_vs_pooled_ks.push_back(ks_distance(b, pooled));
    std::vector<double> trend;
    EmpiricalCDF cumulative;
    for (std::size_t j = 0; j < std::min(nblocks, trend_blocks); ++j) {
      cumulative = cumulative.empty() ? blocks[j] : cumulative.merged(blocks[j]);
      trend.push_back(ks_distance(cumulative, pooled));
    }
    trend_per_path.push_back(std::move(trend));
  }
  std::size_t depth = std::numeric_limits<std::size_t>::max();
  for (const auto& t : trend_per_path) depth = std::min(depth, t.size());
  if (trend_per_path.empty()) depth = 0;
  for (std::size_t j = 0; j < depth; ++j) {
    std::vector<double> column;
    for (const auto& t : trend_per_path) column.push_back(t[j]);
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    out.cumulative_trend.push_back(n % 2 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]));
  }
  for (std::size_t j = 1; j < out.cumulative_trend.size(); ++j)
    if (out.cumulative_trend[j] > out.cumulative_trend[j - 1]) out.trend_nonincreasing = false;
  return out;
}

struct SpikeCheckpoint {
  double time = 0.0;
  std::size_t spikes = 0;
};

struct GcRunOptions {
  std::size_t total_isis = 1000;  // ISIs to collect over all paths
  std::size_t block = 250;
  std::size_t paths = 1;
  double delta = 2.0;
  double max_time = 1e7;          // ms per path
  double checkpoint_base = 1000;  // ms; checkpoints at base * 2^k
};

struct GcReport {
  GcRunOptions options;
  std::vector<SpikeTrain> trains;
  std::vector<double> horizons;  // simulated time per path
  std::vector<std::vector<SpikeCheckpoint>> checkpoints;
  std::size_t windows = 0;        // complete windows of length T
  std::size_t empty_windows = 0;  // windows without spike onset
  bool complete = true;           // false if max_time stopped a path early
  StepCounters counters;
  GcAnalysis analysis;

  double empty_window_fraction() const {
    return windows == 0 ? 0.0 : static_cast<double>(empty_windows) / static_cast<double>(windows);
  }
};

/// Simulates `paths` independent paths until the ISI quota is met and analyses
/// the ISI distribution.
inline GcReport gc_report(const ModelSpec& spec, const Point& x0, const GcRunOptions& options,
                          const SimConfig& config) {
  if (options.block < 1) throw ConfigError("isi.block must be positive");
  if (options.paths < 1) throw ConfigError("isi.paths must be positive");
  if (spec.dim() < 4) throw ConfigError("ISI statistics need a Hodgkin-Huxley model");
  config.validate(spec);
  GcReport rep;
  rep.options = options;
  const std::size_t per_path = (options.total_isis + options.paths - 1) / options.paths;
  rep.trains.resize(options.paths);
  rep.horizons.resize(options.paths);
  rep.checkpoints.resize(options.paths);
  std::vector<std::size_t> windows(options.paths), empty(options.paths);
  std::vector<StepCounters> counters(options.paths);
  std::vector<char> complete(options.paths, 1);
  const double period = spec.period();
  parallel_for(
      options.paths,
      [&](std::size_t p) {
        Stepper stepper(spec, x0, 0.0, config.dt, config.scheme);
        Rng rng(config.seed, config.stream + p);
        SpikeDetector det(options.delta);
        const double sq = stepper.sqrt_dt();
        const bool noisy = spec.stochastic();
        std::size_t window_index = 0;
        bool current_has = false;  // onset seen in the open window
        bool next_has = false;     // onset already seen in a later window
        double next_checkpoint = options.checkpoint_base;
        det.observe(0.0, x0[2] - x0[3]);
        while (det.train().taus.size() < per_path + 1) {
          stepper.step(noisy ? sq * rng.gaussian() : 0.0);
          const double t = stepper.time();
          const Point& x = stepper.raw();
          const bool was_spiking = det.in_spike();
          det.observe(t, x[2] - x[3]);
          if (det.in_spike() && !was_spiking) {
            const auto wt = static_cast<std::size_t>(std::floor(det.pending_tau() / period));
            (wt == window_index ? current_has : next_has) = true;
          }
          const auto w = static_cast<std::size_t>(std::floor(t / period));
          if (w > window_index) {
            ++windows[p];
            if (!current_has) ++empty[p];
            window_index = w;
            current_has = next_has;
            next_has = false;
          }
          if (t >= next_checkpoint) {
            rep.checkpoints[p].push_back({next_checkpoint, det.train().taus.size() + (det.in_spike() ? 1 : 0)});
            next_checkpoint *= 2.0;
          }
          if (t >= options.max_time) {
            complete[p] = 0;
            break;
          }
        }
        rep.horizons[p] = stepper.time();
        rep.trains[p] = det.finish();
        rep.trains[p].source = "path " + std::to_string(p);
        counters[p] = stepper.counters();
      },
      config.threads);
  std::vector<std::vector<double>> isis;
  for (std::size_t p = 0; p < options.paths; ++p) {
    rep.windows += windows[p];
    rep.empty_windows += empty[p];
    rep.counters += counters[p];
    if (!complete[p]) rep.complete = false;
    auto v = rep.trains[p].isis();
    if (v.size() > per_path) v.resize(per_path);
    isis.push_back(std::move(v));
  }
  rep.analysis = gc_analyze(isis, options.block);
  return rep;
}

// ---------------------------------------------------------------------------
// Export

/// Rows (n, tau, sigma, isi); isi is tau_{n+1} - tau_n and empty on the last row.
inline void write_spike_csv(std::ostream& out, const SpikeTrain& train) {
  out << "n,tau,sigma,isi\n" << std::setprecision(17);
  for (std::size_t i = 0; i < train.taus.size(); ++i) {
    out << i + 1 << ',' << train.taus[i] << ',' << train.sigmas[i] << ',';
    if (i + 1 < train.taus.size()) out << train.taus[i + 1] - train.taus[i];
    out << '\n';
  }
}

/// Sorted samples with the CDF value just after each jump.
inline void write_cdf_csv(std::ostream& out, const EmpiricalCDF& cdf) {
  out << "isi,cdf\n" << std::setprecision(17);
  const auto& s = cdf.samples();
  for (std::size_t i = 0; i < s.size(); ++i)
    out << s[i] << ',' << static_cast<double>(i + 1) / static_cast<double>(s.size()) << '\n';
}

}  // namespace periodic_harris
