#pragma once

// The six batch commands. Each writes its files into a run directory and
// returns a JSON report plus a pass/fail verdict; the executable adds exit codes.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>

#include <json.hpp>

#include "periodic_harris/config.hpp"
#include "periodic_harris/control.hpp"
#include "periodic_harris/ergodics.hpp"
#include "periodic_harris/hoermander.hpp"
#include "periodic_harris/spikes.hpp"

namespace periodic_harris {

using nlohmann::json;

struct CommandOutcome {
  json report;
  bool passed = true;
};

/// Fields shared by every report. "created" is the only wall-clock field.
inline json report_header(std::string_view command, const RunConfig& cfg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return {{"command", command},        {"version", kVersion}, {"config_hash", config_hash(cfg)},
          {"seed", cfg.sim.seed},       {"created", ts.str()}, {"config", to_json(cfg)}};
}

/// <base>/<UTC timestamp>-<config hash>, with a numeric suffix on collision.
inline std::filesystem::path make_run_dir(const RunConfig& cfg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << '-' << config_hash(cfg);
  std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / name.str();
  for (int i = 1; std::filesystem::exists(dir); ++i)
    dir = std::filesystem::path(cfg.output_dir) / (name.str() + "-" + std::to_string(i));
  std::filesystem::create_directories(dir);
  return dir;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline json point_json(const Point& x, int dim) { return std::vector<double>(x.begin(), x.begin() + dim); }

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

inline CommandOutcome run_simulate(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const ModelSpec spec = cfg.model_spec();
  SimConfig sc = cfg.sim_config(spec);
  const Point x0 = cfg.start_point(spec);
  const int d = spec.dim();
  const auto names = coordinate_names(spec);
  CommandOutcome out;
  out.report = report_header("simulate", cfg);
  out.report["model"] = spec.name();
  out.report["x0"] = detail::point_json(x0, d);
  json paths = json::array();
  for (std::size_t r = 0; r < cfg.sim.replicas; ++r) {
    sc.stream = r;
    const PathRecord path = simulate_path(spec, x0, 0.0, sc);
    const std::string stem = "path_" + std::to_string(r);
    if (cfg.sim.format != "binary") {
      auto f = detail::open_out(dir / (stem + ".csv"));
      write_path_csv(f, spec, path);
    }
    if (cfg.sim.format != "csv") {
      auto f = detail::open_out(dir / (stem + ".phpr"), true);
      write_path_binary(f, path);
    }
    json coords = json::object();
    for (int i = 0; i < d; ++i) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& x : path.states) {
        lo = std::min(lo, x[static_cast<std::size_t>(i)]);
        hi = std::max(hi, x[static_cast<std::size_t>(i)]);
      }
      coords[names[static_cast<std::size_t>(i)]] = {{"min", lo}, {"max", hi}};
    }
    paths.push_back({{"stream", r},
                     {"states", path.size()},
                     {"terminal", detail::point_json(path.states.back(), d)},
                     {"range", coords},
                     {"steps", path.counters.steps},
                     {"truncations", path.counters.truncations},
                     {"clamps", path.counters.clamps}});
    log << "path " << r << ": " << path.counters.steps << " steps, " << path.counters.truncations
        << " truncations, " << path.counters.clamps << " clamps\n";
  }
  out.report["paths"] = std::move(paths);
  return out;
}

// ---------------------------------------------------------------------------
// hoermander

inline json verdict_json(const HoermanderVerdict& v) {
  json depths = json::array();
  for (const auto& d : v.depths) {
    json reports = json::array();
    for (const auto& r : d.reports)
      reports.push_back({{"time", r.time}, {"rank", r.rank}, {"members", r.members},
                         {"singular_values", r.singular_values}});
    depths.push_back({{"depth", d.depth}, {"members", d.members}, {"nodes", d.nodes}, {"full", d.full},
                      {"failing_times", d.failing_times}, {"reports", std::move(reports)}});
  }
  return {{"dim", v.dim},
          {"period", v.period},
          {"times", v.times},
          {"minimal_depth", v.minimal_depth ? json(*v.minimal_depth) : json(nullptr)},
          {"established", v.established()},
          {"blow_up", v.blow_up ? json(*v.blow_up) : json(nullptr)},
          {"perturbations_checked", v.perturbations_checked},
          {"perturbations_full", v.perturbations_full},
          {"depths", std::move(depths)}};
}

inline CommandOutcome run_hoermander(const RunConfig& cfg, const std::filesystem::path&, std::ostream& log) {
  const ModelSpec spec = cfg.model_spec();
  if (spec.is<DeterministicHH>()) throw ConfigError("hoermander needs model.kind = cir, ou or toy");
  std::vector<double> x;
  if (cfg.hoermander.point) {
    x = *cfg.hoermander.point;
    if (static_cast<int>(x.size()) != spec.dim()) throw ConfigError("hoermander.point has the wrong dimension");
  } else {
    const Point p = cfg.start_point(spec);
    x.assign(p.begin(), p.begin() + spec.dim());
  }
  HoermanderOptions opt;
  opt.max_depth = cfg.hoermander.max_depth;
  opt.grid = cfg.hoermander.grid;
  opt.tol = cfg.hoermander.tol;
  opt.extra_times = cfg.hoermander.extra_times;
  opt.perturbations = cfg.hoermander.perturbations;
  opt.node_cap = cfg.hoermander.node_cap;
  opt.seed = cfg.sim.seed;
  opt.threads = cfg.sim.threads;
  const auto v = full_weak_hoermander_check(spec, x, opt);
  CommandOutcome out;
  out.report = report_header("hoermander", cfg);
  out.report["model"] = spec.name();
  out.report["point"] = x;
  out.report["verdict"] = verdict_json(v);
  out.passed = v.established();
  for (const auto& d : v.depths)
    log << "N = " << d.depth << ": " << d.members << " brackets, " << d.failing_times.size()
        << " deficient times\n";
  if (v.established())
    log << "minimal N = " << *v.minimal_depth << '\n';
  else if (v.blow_up)
    log << "not established: expression blow-up at " << *v.blow_up << '\n';
  else
    log << "not established up to N = " << opt.max_depth << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// control

/// Reference start used when the config lists none.
inline Point reference_control_start(const ModelSpec& spec) {
  if (spec.is<CirModel>()) return {50.0, 0.5, 0.5, 0.5, 4.0};
  if (spec.is<OuModel>()) return {-40.0, 0.2, 0.9, 0.1, 3.0};
  return {3.0, 5.0};
}

/// CIR: v in [-60, 150], xi in [0.2, 20]; OU: xi in [-10, 10]; toy: xi in [-5, 5], psi in [0, 5].
inline std::vector<Point> random_control_starts(const ModelSpec& spec, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> out;
  for (int i = 0; i < count; ++i) {
    if (spec.is<ToyModel>()) {
      out.push_back({-5.0 + 10.0 * u(rng), 5.0 * u(rng)});
      continue;
    }
    const double v = -60.0 + 210.0 * u(rng);
    const double n = u(rng), m = u(rng), h = u(rng);
    const double xi = spec.is<CirModel>() ? 0.2 + 19.8 * u(rng) : -10.0 + 20.0 * u(rng);
    out.push_back({v, n, m, h, xi});
  }
  return out;
}

inline json control_run_json(const ControlRun& run, const Point& x0, int dim) {
  auto end_of = [&](const char* name) -> json {
    const PhaseLog* p = run.phase(name);
    return p ? json(p->t_end) : json(nullptr);
  };
  json phases = json::array();
  for (const auto& p : run.phases)
    phases.push_back({{"name", p.name}, {"t_start", p.t_start}, {"t_end", p.t_end}, {"steps", p.steps},
                      {"skipped", p.skipped}, {"hdot_sq", p.hdot_sq}, {"capped", p.capped}});
  return {{"start", detail::point_json(x0, dim)},
          {"t1", end_of("I-II hold")},
          {"t2", end_of("III raise")},
          {"t3", end_of("IV coast")},
          {"t4", end_of("V coast")},
          {"t_end", run.times.back()},
          {"hdot_sq", run.hdot_sq},
          {"ramp_distance", run.ramp_distance},
          {"converged", run.converged},
          {"terminal", detail::point_json(run.terminal(), dim)},
          {"terminal_distance", run.terminal_distance},
          {"phases", std::move(phases)}};
}

inline CommandOutcome run_control(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const ModelSpec spec = cfg.model_spec();
  if (spec.is<DeterministicHH>()) throw ConfigError("control needs model.kind = cir, ou or toy");
  const int d = spec.dim();
  std::vector<Point> starts;
  for (const auto& s : cfg.control.starts) {
    Point p{};
    std::copy(s.begin(), s.end(), p.begin());
    starts.push_back(p);
  }
  for (const auto& p : random_control_starts(spec, cfg.control.random_starts, cfg.control.start_seed))
    starts.push_back(p);
  if (starts.empty()) starts.push_back(cfg.sim.x0 ? cfg.start_point(spec) : reference_control_start(spec));

  ControlParams params;
  params.epsilon = cfg.control.epsilon;
  params.k = cfg.control.k;
  params.tol = cfg.control.tol;
  params.final_cap = cfg.control.final_cap;
  IntegrateOptions io;
  io.dt = cfg.control.dt;
  io.record_every = cfg.control.record_every;
  io.fast_forward = cfg.control.fast_forward;

  CommandOutcome out;
  out.report = report_header("control", cfg);
  out.report["model"] = spec.name();
  out.report["target"] = detail::point_json(attainable_point(spec), d);
  std::optional<ControlConstants> k;
  if (!spec.is<ToyModel>()) {
    k = estimate_control_constants();
    out.report["constants"] = {{"f", k->f}, {"C", k->C}, {"lambda", k->lambda}, {"K", k->K}};
  }
  json runs = json::array();
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const Point& x0 = starts[i];
    if (!in_state_space(spec, x0)) throw ConfigError("control start " + std::to_string(i) + " lies outside the state space");
    const ControlProgram prog = spec.is<ToyModel>() ? synthesize_toy_control(cfg.control.toy_horizon)
                                                    : synthesize_hh_control(spec, x0, *k, params);
    const ControlRun run = integrate_control(spec, x0, 0.0, prog, io);
    auto f = detail::open_out(dir / ("control_" + std::to_string(i) + ".csv"));
    write_control_csv(f, spec, run);
    json r = control_run_json(run, x0, d);
    if (const auto rate = coast_decay_rate(run, "IV coast")) r["coast_decay_rate"] = *rate;
    const bool ok = run.converged && run.terminal_distance < cfg.control.tol;
    r["passed"] = ok;
    out.passed = out.passed && ok;
    log << "start " << i << ": terminal distance " << run.terminal_distance << ", energy " << run.hdot_sq
        << (ok ? "" : "  FAILED") << '\n';
    runs.push_back(std::move(r));
  }
  out.report["runs"] = std::move(runs);
  return out;
}

// ---------------------------------------------------------------------------
// lyapunov

inline CommandOutcome run_lyapunov(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const ModelSpec spec = cfg.model_spec();
  if (!spec.is<CirModel>() && !spec.is<OuModel>()) throw ConfigError("lyapunov needs model.kind = cir or ou");
  const double T = cfg.lyapunov.T > 0.0 ? cfg.lyapunov.T : spec.period();
  const SimConfig sc = cfg.sim_config(spec);
  const DriftReport rep = drift_report(spec, T, cfg.lyapunov.replicas, sc, cfg.lyapunov.v_floor);
  {
    auto f = detail::open_out(dir / "drift.csv");
    write_drift_csv(f, rep);
  }
  CommandOutcome out;
  out.report = report_header("lyapunov", cfg);
  out.report["model"] = spec.name();
  out.report["T"] = T;
  out.report["replicas"] = rep.replicas;
  json pts = json::array();
  for (const auto& p : rep.points)
    pts.push_back({{"x", detail::point_json(p.x, 5)}, {"group", p.group}, {"V", p.V},
                   {"estimate", p.estimate.value}, {"stderr", p.estimate.stderr_}});
  out.report["points"] = std::move(pts);
  const auto& fit = rep.fit;
  out.report["fit"] = {{"lambda", fit.lambda},       {"delta", fit.delta},
                       {"delta_ls", fit.delta_ls},   {"lambda_stderr", fit.lambda_stderr},
                       {"used", fit.used},           {"violations", fit.violations},
                       {"lambda_upper", fit.lambda + 3.0 * fit.lambda_stderr}};
  out.passed = fit.lambda + 3.0 * fit.lambda_stderr < 1.0 && fit.violations.empty();
  log << "lambda = " << fit.lambda << " +- " << fit.lambda_stderr << ", delta = " << fit.delta << ", "
      << fit.violations.size() << " violations\n";
  return out;
}

// ---------------------------------------------------------------------------
// isi

/// Spike counts at successive checkpoints strictly increase.
inline bool counts_grow(const std::vector<SpikeCheckpoint>& cps) {
  if (cps.size() < 2) return false;
  for (std::size_t i = 1; i < cps.size(); ++i)
    if (cps[i].spikes <= cps[i - 1].spikes) return false;
  return true;
}

inline CommandOutcome run_isi(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const ModelSpec spec = cfg.model_spec();
  if (spec.is<ToyModel>()) throw ConfigError("isi needs a Hodgkin-Huxley model");
  GcRunOptions o;
  o.total_isis = cfg.spikes.total_isis;
  o.block = cfg.spikes.block;
  o.paths = cfg.spikes.paths;
  o.delta = cfg.spikes.delta;
  o.max_time = cfg.spikes.max_time;
  o.checkpoint_base = cfg.spikes.checkpoint_base;
  const GcReport rep = gc_report(spec, cfg.start_point(spec), o, cfg.sim_config(spec));
  std::vector<double> pooled;
  json trains = json::array();
  bool growth = true;
  for (std::size_t p = 0; p < rep.trains.size(); ++p) {
    auto f = detail::open_out(dir / ("spikes_" + std::to_string(p) + ".csv"));
    write_spike_csv(f, rep.trains[p]);
    const auto isis = rep.trains[p].isis();
    pooled.insert(pooled.end(), isis.begin(), isis.end());
    json cps = json::array();
    for (const auto& c : rep.checkpoints[p]) cps.push_back({{"time", c.time}, {"spikes", c.spikes}});
    growth = growth && counts_grow(rep.checkpoints[p]);
    trains.push_back({{"spikes", rep.trains[p].size()}, {"dropped", rep.trains[p].dropped},
                      {"horizon", rep.horizons[p]}, {"checkpoints", std::move(cps)}});
  }
  if (pooled.size() >= 1) {
    auto f = detail::open_out(dir / "cdf.csv");
    write_cdf_csv(f, EmpiricalCDF(pooled));
  }
  const auto& a = rep.analysis;
  CommandOutcome out;
  out.report = report_header("isi", cfg);
  out.report["model"] = spec.name();
  out.report["complete"] = rep.complete;
  out.report["trains"] = std::move(trains);
  out.report["windows"] = rep.windows;
  out.report["empty_windows"] = rep.empty_windows;
  out.report["truncations"] = rep.counters.truncations;
  out.report["analysis"] = {{"block", a.block},
                            {"isi_count", a.isi_count},
                            {"split_half_ks", detail::optional_json(a.split_half_ks)},
                            {"consecutive_block_ks", a.consecutive_block_ks},
                            {"block_vs_pooled_ks", a.block_vs_pooled_ks},
                            {"cumulative_trend", a.cumulative_trend},
                            {"trend_nonincreasing", a.trend_nonincreasing}};
  const bool ks_ok = rep.complete && a.split_half_ks && *a.split_half_ks < cfg.spikes.ks_threshold;
  const bool trend_ok = rep.complete && a.cumulative_trend.size() >= 2 && a.trend_nonincreasing;
  const bool windows_ok = rep.empty_windows > 0;
  out.report["checks"] = {{"split_half", ks_ok}, {"trend", trend_ok}, {"count_growth", growth},
                          {"spike_free_window", windows_ok}};
  out.passed = ks_ok && trend_ok && growth && windows_ok;
  log << a.isi_count << " ISIs";
  if (!rep.complete) log << " (stopped at the time cap before the quota of " << o.total_isis << ")";
  log << ", split-half KS " << (a.split_half_ks ? std::to_string(*a.split_half_ks) : "n/a") << ", "
      << rep.empty_windows << "/" << rep.windows << " spike-free windows\n";
  return out;
}

// ---------------------------------------------------------------------------
// toy-validate

struct ToyRow {
  double t = 0.0;
  double mc_mean = 0.0, cf_mean = 0.0, z_mean = 0.0;
  double mc_var = 0.0, cf_var = 0.0, z_var = 0.0;
  double mc_psi = 0.0, cf_psi = 0.0, z_psi = 0.0;
};

/// Monte Carlo moments of the toy model against the closed forms.
inline std::vector<ToyRow> toy_validate(const RunConfig& cfg) {
  const ModelSpec spec = cfg.model_spec();
  if (!spec.is<ToyModel>()) throw ConfigError("toy-validate needs model.kind = toy");
  const double c = spec.as<ToyModel>().c;
  SimConfig sc = cfg.sim_config(spec);
  sc.dt = cfg.toy.dt;
  std::vector<ToyRow> rows;
  for (std::size_t k = 0; k < cfg.toy.times.size(); ++k) {
    const double t = cfg.toy.times[k];
    sc.horizon = t;
    sc.stream = k * cfg.toy.paths;
    const auto ends = terminal_states(spec, Point{cfg.toy.xi0, cfg.toy.psi0}, 0.0, sc, cfg.toy.paths);
    const double n = static_cast<double>(ends.size());
    double m = 0.0, mp = 0.0;
    for (const auto& x : ends) {
      m += x[0];
      mp += x[1];
    }
    m /= n;
    mp /= n;
    double m2 = 0.0, m4 = 0.0, vp = 0.0;
    for (const auto& x : ends) {
      const double d = x[0] - m;
      m2 += d * d;
      m4 += d * d * d * d;
      vp += (x[1] - mp) * (x[1] - mp);
    }
    m2 /= n;
    m4 /= n;
    vp /= n;
    const auto cf = toy_closed_form(c, cfg.toy.xi0, t);
    ToyRow r;
    r.t = t;
    r.mc_mean = m;
    r.cf_mean = cf.mean;
    r.z_mean = (m - cf.mean) / std::sqrt(m2 / n);
    r.mc_var = m2 * n / (n - 1.0);
    r.cf_var = cf.variance;
    r.z_var = (r.mc_var - cf.variance) / std::sqrt(std::max(m4 - m2 * m2, 1e-300) / n);
    r.mc_psi = mp;
    r.cf_psi = toy_psi_mean(cfg.toy.psi0, t);
    r.z_psi = (mp - r.cf_psi) / std::sqrt(vp / n);
    rows.push_back(r);
  }
  return rows;
}

inline CommandOutcome run_toy_validate(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const auto rows = toy_validate(cfg);
  CommandOutcome out;
  out.report = report_header("toy-validate", cfg);
  json table = json::array();
  auto f = detail::open_out(dir / "toy_validate.csv");
  f << "t,mc_mean,cf_mean,z_mean,mc_var,cf_var,z_var,mc_psi,cf_psi,z_psi\n" << std::setprecision(17);
  log << std::setw(6) << "t" << std::setw(14) << "MC mean" << std::setw(14) << "closed form" << std::setw(9)
      << "z" << std::setw(14) << "MC var" << std::setw(14) << "closed form" << std::setw(9) << "z\n";
  for (const auto& r : rows) {
    f << r.t << ',' << r.mc_mean << ',' << r.cf_mean << ',' << r.z_mean << ',' << r.mc_var << ',' << r.cf_var << ','
      << r.z_var << ',' << r.mc_psi << ',' << r.cf_psi << ',' << r.z_psi << '\n';
    table.push_back({{"t", r.t}, {"mc_mean", r.mc_mean}, {"closed_form_mean", r.cf_mean}, {"z_mean", r.z_mean},
                     {"mc_variance", r.mc_var}, {"closed_form_variance", r.cf_var}, {"z_variance", r.z_var},
                     {"mc_psi_mean", r.mc_psi}, {"closed_form_psi_mean", r.cf_psi}, {"z_psi", r.z_psi}});
    const bool ok = std::abs(r.z_mean) < 3.0 && std::abs(r.z_var) < 3.0 && std::abs(r.z_psi) < 3.0;
    out.passed = out.passed && ok;
    log << std::fixed << std::setprecision(3) << std::setw(6) << r.t << std::setprecision(6) << std::setw(14)
        << r.mc_mean << std::setw(14) << r.cf_mean << std::setprecision(2) << std::setw(9) << r.z_mean
        << std::setprecision(6) << std::setw(14) << r.mc_var << std::setw(14) << r.cf_var << std::setprecision(2)
        << std::setw(9) << r.z_var << (ok ? "" : "  FAILED") << '\n';
  }
  log.unsetf(std::ios::floatfield);
  out.report["table"] = std::move(table);
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

using CommandFn = std::function<CommandOutcome(const RunConfig&, const std::filesystem::path&, std::ostream&)>;

inline const std::vector<std::pair<std::string, CommandFn>>& commands() {
  static const std::vector<std::pair<std::string, CommandFn>> table{
      {"simulate", run_simulate}, {"hoermander", run_hoermander}, {"control", run_control},
      {"lyapunov", run_lyapunov}, {"isi", run_isi},               {"toy-validate", run_toy_validate}};
  return table;
}

/// Runs `command` in a fresh run directory and writes report.json there.
inline std::pair<CommandOutcome, std::filesystem::path> run_command(const std::string& command, const RunConfig& cfg,
                                                                    std::ostream& log) {
  for (const auto& [name, fn] : commands()) {
    if (name != command) continue;
    const auto dir = make_run_dir(cfg);
    CommandOutcome out = fn(cfg, dir, log);
    out.report["passed"] = out.passed;
    auto f = detail::open_out(dir / "report.json");
    f << out.report.dump(2) << '\n';
    return {std::move(out), dir};
  }
  throw ConfigError("unknown command \"" + command + "\"");
}

}  // namespace periodic_harris
