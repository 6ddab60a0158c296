#pragma once

// Run configuration: TOML loading, dotted-key overrides, validation and the
// canonical hash that names run directories.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/sde.hpp"

namespace periodic_harris {

#ifdef PERIODIC_HARRIS_VERSION
inline constexpr std::string_view kVersion = PERIODIC_HARRIS_VERSION;
#else
inline constexpr std::string_view kVersion = "0.0.0";
#endif

struct SignalConfig {
  std::string kind = "sin2";  // sin2 | constant | fourier
  double period = 10.0;
  double s0 = 0.5;  // sin2: s0 + s1 sin^2(pi t / T)
  double s1 = 1.0;
  double level = 1.0;  // constant
  double mean = 1.0;   // fourier
  std::vector<double> cos;
  std::vector<double> sin;
};

struct ModelConfig {
  std::string kind = "cir";  // cir | ou | toy | hh
  double a = 1.0;
  double c = 1.0;       // toy coefficient
  double input = 10.0;  // constant input current of the deterministic model
  SignalConfig signal;
};

struct SimSection {
  double dt = 0.01;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  std::size_t record_every = 1;
  unsigned threads = 0;
  double p = 0.5;  // resolvent parameter
  std::optional<std::vector<double>> x0;
  std::string format = "csv";  // csv | binary | both
};

struct HoermanderSection {
  int max_depth = 6;
  int grid = 64;
  double tol = 1e-8;
  std::vector<double> extra_times;
  int perturbations = 0;
  std::size_t node_cap = 4'000'000;
  std::optional<std::vector<double>> point;
};

struct ControlSection {
  std::vector<std::vector<double>> starts;
  int random_starts = 0;
  std::uint64_t start_seed = 1;
  double dt = 0.01;
  std::size_t record_every = 10;
  bool fast_forward = true;
  double epsilon = 1e-3;
  int k = 3;
  double tol = 1e-2;
  double final_cap = 500.0;
  double toy_horizon = 30.0;
};

struct LyapunovSection {
  double T = 0.0;  // 0 selects the signal period
  std::size_t replicas = 400;
  double v_floor = 0.0;
};

struct SpikesSection {
  double delta = 2.0;
  std::size_t total_isis = 1000;
  std::size_t block = 250;
  std::size_t paths = 1;
  double max_time = 1e7;
  double checkpoint_base = 1000.0;
  double ks_threshold = 0.1;
};

struct ToySection {
  std::vector<double> times{0.5, 1.0, 2.0};
  std::size_t paths = 10000;
  double dt = 0.005;
  double xi0 = 1.0;
  double psi0 = 2.0;
};

struct RunConfig {
  ModelConfig model;
  SimSection sim;
  HoermanderSection hoermander;
  ControlSection control;
  LyapunovSection lyapunov;
  SpikesSection spikes;
  ToySection toy;
  std::string output_dir = "runs";

  ModelSpec model_spec() const;
  SimConfig sim_config(const ModelSpec& spec) const;
  Point start_point(const ModelSpec& spec) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Building model objects

inline Signal make_signal(const SignalConfig& s) {
  if (s.kind == "sin2") return Signal::sin_squared(s.s0, s.s1, s.period);
  if (s.kind == "constant") return Signal::constant(s.level, s.period);
  if (s.kind == "fourier") return Signal(s.period, s.mean, s.cos, s.sin);
  throw ConfigError("model.signal.kind must be sin2, constant or fourier (got \"" + s.kind + "\")");
}

inline ModelSpec RunConfig::model_spec() const {
  const auto& m = model;
  if (m.kind == "cir") return ModelSpec::cir(m.a, make_signal(m.signal));
  if (m.kind == "ou") return ModelSpec::ou(make_signal(m.signal));
  if (m.kind == "toy") return ModelSpec::toy(m.c);
  if (m.kind == "hh") return ModelSpec::deterministic_hh(m.input);
  throw ConfigError("model.kind must be cir, ou, toy or hh (got \"" + m.kind + "\")");
}

inline SimConfig RunConfig::sim_config(const ModelSpec& spec) const {
  SimConfig c = default_sim_config(spec);
  c.dt = sim.dt;
  c.horizon = sim.horizon;
  c.seed = sim.seed;
  c.record_every = sim.record_every;
  c.threads = sim.threads;
  return c;
}

/// sim.x0 if given, otherwise the attainable point (toy, CIR, OU) or the
/// zero-input resting state (hh).
inline Point RunConfig::start_point(const ModelSpec& spec) const {
  Point x{};
  if (sim.x0) {
    if (static_cast<int>(sim.x0->size()) != spec.dim() && !(spec.dim() == 4 && sim.x0->size() == 5))
      throw ConfigError("sim.x0 needs " + std::to_string(spec.dim()) + " coordinates");
    std::copy(sim.x0->begin(), sim.x0->end(), x.begin());
    if (!in_state_space(spec, x)) throw ConfigError("sim.x0 lies outside the state space");
    return x;
  }
  if (spec.is<DeterministicHH>()) {
    const double v = rest_potential(0.0);
    return {v, gate_equilibrium(Gate::n, v), gate_equilibrium(Gate::m, v), gate_equilibrium(Gate::h, v), 0.0};
  }
  return attainable_point(spec);
}

inline void RunConfig::validate() const {
  const ModelSpec spec = model_spec();  // 2a > 1, signal positivity, toy c
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be positive");
  };
  auto at_least_one = [](std::size_t v, const char* key) {
    if (v < 1) throw ConfigError(std::string(key) + " must be at least 1");
  };
  positive(sim.dt, "sim.dt");
  if (!(sim.horizon >= 0.0)) throw ConfigError("sim.horizon must be nonnegative");
  at_least_one(sim.replicas, "sim.replicas");
  at_least_one(sim.record_every, "sim.record_every");
  if (!(sim.p > 0.0 && sim.p < 1.0)) throw ConfigError("sim.p must lie in (0, 1)");
  if (sim.format != "csv" && sim.format != "binary" && sim.format != "both")
    throw ConfigError("sim.format must be csv, binary or both");
  if (hoermander.max_depth < 1) throw ConfigError("hoermander.max_depth must be at least 1");
  if (hoermander.grid < 1) throw ConfigError("hoermander.grid must be at least 1");
  positive(hoermander.tol, "hoermander.tol");
  at_least_one(hoermander.node_cap, "hoermander.node_cap");
  if (hoermander.perturbations < 0) throw ConfigError("hoermander.perturbations must be nonnegative");
  positive(control.dt, "control.dt");
  positive(control.epsilon, "control.epsilon");
  positive(control.tol, "control.tol");
  positive(control.final_cap, "control.final_cap");
  positive(control.toy_horizon, "control.toy_horizon");
  at_least_one(control.record_every, "control.record_every");
  if (control.k < 1) throw ConfigError("control.k must be at least 1");
  if (control.random_starts < 0) throw ConfigError("control.random_starts must be nonnegative");
  for (const auto& s : control.starts)
    if (static_cast<int>(s.size()) != spec.dim()) throw ConfigError("control.starts entries need one value per coordinate");
  if (!(lyapunov.T >= 0.0)) throw ConfigError("lyapunov.T must be nonnegative");
  if (lyapunov.replicas < 100) throw ConfigError("lyapunov.replicas must be at least 100");
  positive(spikes.delta, "spikes.delta");
  at_least_one(spikes.total_isis, "spikes.total_isis");
  at_least_one(spikes.block, "spikes.block");
  at_least_one(spikes.paths, "spikes.paths");
  positive(spikes.max_time, "spikes.max_time");
  positive(spikes.checkpoint_base, "spikes.checkpoint_base");
  positive(spikes.ks_threshold, "spikes.ks_threshold");
  if (toy.times.empty()) throw ConfigError("toy.times must not be empty");
  for (double t : toy.times) positive(t, "toy.times entries");
  if (toy.paths < 2) throw ConfigError("toy.paths must be at least 2");
  positive(toy.dt, "toy.dt");
  if (toy.psi0 < 0.0) throw ConfigError("toy.psi0 must be nonnegative");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (sim.x0) (void)start_point(spec);
}

// ---------------------------------------------------------------------------
// TOML reading

namespace detail {

/// Typed access to one table that remembers which keys were read, so that
/// unknown keys can be reported.
class TableReader {
 public:
  TableReader(const toml::table* t, std::string prefix) : t_(t), prefix_(std::move(prefix)) {}

  template <class T>
  void get(std::string_view key, T& out) {
    if (!t_) return;
    seen_.insert(std::string(key));
    const toml::node* n = t_->get(key);
    if (!n) return;
    out = convert<T>(*n, name(key));
  }

  template <class T>
  void get(std::string_view key, std::optional<T>& out) {
    if (!t_) return;
    seen_.insert(std::string(key));
    if (const toml::node* n = t_->get(key)) out = convert<T>(*n, name(key));
  }

  TableReader sub(std::string_view key) {
    if (!t_) return {nullptr, name(key)};
    seen_.insert(std::string(key));
    const toml::node* n = t_->get(key);
    if (n && !n->is_table()) throw ConfigError(name(key) + " must be a table");
    return {n ? n->as_table() : nullptr, name(key)};
  }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_)
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown configuration key " + name(k.str()));
  }

 private:
  std::string name(std::string_view key) const { return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key); }

  template <class T>
  static T convert(const toml::node& n, const std::string& key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n.value_exact<bool>()) return *v;
      throw ConfigError(key + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n.value_exact<std::string>()) return *v;
      throw ConfigError(key + " must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = n.value_exact<double>()) return *v;
      if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
      throw ConfigError(key + " must be a number");
    } else if constexpr (std::is_integral_v<T>) {
      auto v = n.value_exact<std::int64_t>();
      if (!v) throw ConfigError(key + " must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (*v < 0) throw ConfigError(key + " must be nonnegative");
      return static_cast<T>(*v);
    } else {
      // vector<double> or vector<vector<double>>
      const toml::array* arr = n.as_array();
      if (!arr) throw ConfigError(key + " must be an array");
      T out;
      for (std::size_t i = 0; i < arr->size(); ++i)
        out.push_back(convert<typename T::value_type>(*arr->get(i), key + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  const toml::table* t_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline RunConfig read_config(const toml::table& root) {
  RunConfig c;
  TableReader top(&root, "");
  {
    auto m = top.sub("model");
    m.get("kind", c.model.kind);
    m.get("a", c.model.a);
    m.get("c", c.model.c);
    m.get("input", c.model.input);
    auto s = m.sub("signal");
    s.get("kind", c.model.signal.kind);
    s.get("period", c.model.signal.period);
    s.get("s0", c.model.signal.s0);
    s.get("s1", c.model.signal.s1);
    s.get("level", c.model.signal.level);
    s.get("mean", c.model.signal.mean);
    s.get("cos", c.model.signal.cos);
    s.get("sin", c.model.signal.sin);
    s.finish();
    m.finish();
  }
  {
    auto s = top.sub("sim");
    s.get("dt", c.sim.dt);
    s.get("horizon", c.sim.horizon);
    s.get("seed", c.sim.seed);
    s.get("replicas", c.sim.replicas);
    s.get("record_every", c.sim.record_every);
    s.get("threads", c.sim.threads);
    s.get("p", c.sim.p);
    s.get("x0", c.sim.x0);
    s.get("format", c.sim.format);
    s.finish();
  }
  {
    auto h = top.sub("hoermander");
    h.get("max_depth", c.hoermander.max_depth);
    h.get("grid", c.hoermander.grid);
    h.get("tol", c.hoermander.tol);
    h.get("extra_times", c.hoermander.extra_times);
    h.get("perturbations", c.hoermander.perturbations);
    h.get("node_cap", c.hoermander.node_cap);
    h.get("point", c.hoermander.point);
    h.finish();
  }
  {
    auto k = top.sub("control");
    k.get("starts", c.control.starts);
    k.get("random_starts", c.control.random_starts);
    k.get("start_seed", c.control.start_seed);
    k.get("dt", c.control.dt);
    k.get("record_every", c.control.record_every);
    k.get("fast_forward", c.control.fast_forward);
    k.get("epsilon", c.control.epsilon);
    k.get("k", c.control.k);
    k.get("tol", c.control.tol);
    k.get("final_cap", c.control.final_cap);
    k.get("toy_horizon", c.control.toy_horizon);
    k.finish();
  }
  {
    auto l = top.sub("lyapunov");
    l.get("T", c.lyapunov.T);
    l.get("replicas", c.lyapunov.replicas);
    l.get("v_floor", c.lyapunov.v_floor);
    l.finish();
  }
  {
    auto s = top.sub("spikes");
    s.get("delta", c.spikes.delta);
    s.get("total_isis", c.spikes.total_isis);
    s.get("block", c.spikes.block);
    s.get("paths", c.spikes.paths);
    s.get("max_time", c.spikes.max_time);
    s.get("checkpoint_base", c.spikes.checkpoint_base);
    s.get("ks_threshold", c.spikes.ks_threshold);
    s.finish();
  }
  {
    auto t = top.sub("toy");
    t.get("times", c.toy.times);
    t.get("paths", c.toy.paths);
    t.get("dt", c.toy.dt);
    t.get("xi0", c.toy.xi0);
    t.get("psi0", c.toy.psi0);
    t.finish();
  }
  {
    auto o = top.sub("output");
    o.get("dir", c.output_dir);
    o.finish();
  }
  top.finish();
  return c;
}

}  // namespace detail

/// Applies `key.path=value`; the value is read as a TOML literal and falls back
/// to a bare string.
inline void apply_override(toml::table& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("--set expects key=value (got \"" + std::string(assignment) + "\")");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  toml::node_view<toml::node> slot;
  toml::table* t = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set key \"" + key + "\" has an empty component");
    if (dot == std::string::npos) {
      toml::table parsed;
      try {
        parsed = toml::parse("v = " + raw);
      } catch (const toml::parse_error&) {
        parsed.insert("v", raw);
      }
      t->insert_or_assign(part, std::move(*parsed.get("v")));
      return;
    }
    toml::node* next = t->get(part);
    if (!next) {
      t->insert(part, toml::table{});
      next = t->get(part);
    }
    if (!next->is_table()) throw ConfigError("--set key \"" + key + "\": " + part + " is not a table");
    t = next->as_table();
    start = dot + 1;
  }
}

inline RunConfig parse_config(std::string_view toml_text, const std::vector<std::string>& overrides = {},
                              std::string_view source = "<string>") {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "cannot parse " << source << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  for (const auto& o : overrides) apply_override(root, o);
  RunConfig c = detail::read_config(root);
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path.string());
}

// ---------------------------------------------------------------------------
// Canonical form and hash

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json j;
  const auto& s = c.model.signal;
  j["model"] = {{"kind", c.model.kind}, {"a", c.model.a}, {"c", c.model.c}, {"input", c.model.input},
                {"signal",
                 {{"kind", s.kind}, {"period", s.period}, {"s0", s.s0}, {"s1", s.s1}, {"level", s.level},
                  {"mean", s.mean}, {"cos", s.cos}, {"sin", s.sin}}}};
  j["sim"] = {{"dt", c.sim.dt}, {"horizon", c.sim.horizon}, {"seed", c.sim.seed}, {"replicas", c.sim.replicas},
              {"record_every", c.sim.record_every}, {"threads", c.sim.threads}, {"p", c.sim.p},
              {"x0", c.sim.x0 ? json(*c.sim.x0) : json(nullptr)}, {"format", c.sim.format}};
  const auto& h = c.hoermander;
  j["hoermander"] = {{"max_depth", h.max_depth}, {"grid", h.grid}, {"tol", h.tol}, {"extra_times", h.extra_times},
                     {"perturbations", h.perturbations}, {"node_cap", h.node_cap},
                     {"point", h.point ? json(*h.point) : json(nullptr)}};
  const auto& k = c.control;
  j["control"] = {{"starts", k.starts}, {"random_starts", k.random_starts}, {"start_seed", k.start_seed},
                  {"dt", k.dt}, {"record_every", k.record_every}, {"fast_forward", k.fast_forward},
                  {"epsilon", k.epsilon}, {"k", k.k}, {"tol", k.tol}, {"final_cap", k.final_cap},
                  {"toy_horizon", k.toy_horizon}};
  j["lyapunov"] = {{"T", c.lyapunov.T}, {"replicas", c.lyapunov.replicas}, {"v_floor", c.lyapunov.v_floor}};
  const auto& p = c.spikes;
  j["spikes"] = {{"delta", p.delta}, {"total_isis", p.total_isis}, {"block", p.block}, {"paths", p.paths},
                 {"max_time", p.max_time}, {"checkpoint_base", p.checkpoint_base}, {"ks_threshold", p.ks_threshold}};
  j["toy"] = {{"times", c.toy.times}, {"paths", c.toy.paths}, {"dt", c.toy.dt}, {"xi0", c.toy.xi0},
              {"psi0", c.toy.psi0}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

/// FNV-1a over the canonical JSON; the thread count and output directory are
/// excluded since they do not change results.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j["sim"].erase("threads");
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace periodic_harris
