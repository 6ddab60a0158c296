#pragma once

// Iterated Lie bracket families L_N and the numerical span test for the weak
// Hoermander condition at a point, uniformly over a grid of torus times.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/expr.hpp"
#include "periodic_harris/model.hpp"
#include "periodic_harris/parallel.hpp"
#include "periodic_harris/vector_field.hpp"

namespace periodic_harris {

struct BracketSet {
  int dim = 0;
  int depth = 0;                        // N
  std::vector<SymVectorField> fields;   // members of L_N, breadth-first
  std::vector<int> levels;              // bracket depth of each member
  std::vector<std::size_t> candidates;  // brackets formed per level (before dropping)
  std::size_t nodes = 0;                // distinct expression nodes held

  std::size_t size() const { return fields.size(); }
  std::size_t level_size(int level) const {
    return static_cast<std::size_t>(std::count(levels.begin(), levels.end(), level));
  }
};

/// Builds L_0, L_1, ... one level at a time. Level 0 holds V1..Vm; level k+1
/// holds [L, V0], [L, V1], ..., [L, Vm] for each level-k member L. Members that
/// are syntactically zero or duplicate an earlier member are dropped.
class BracketGenerator {
 public:
  BracketGenerator(SymVectorField v0, std::vector<SymVectorField> diffusion, std::size_t node_cap = 4'000'000)
      : v0_(std::move(v0)), diffusion_(std::move(diffusion)), ctx_(v0_.dim), node_cap_(node_cap) {
    if (!v0_.drives_time()) throw DomainError("the drift field V0 must have time component 1");
    if (diffusion_.empty()) throw DomainError("at least one diffusion field is required");
    set_.dim = v0_.dim;
    std::vector<SymVectorField> level0;
    for (const auto& v : diffusion_) {
      if (v.dim != v0_.dim) throw DomainError("dimension mismatch between V0 and " + v.word);
      if (!v.components[0].is_zero()) throw DomainError("diffusion field " + v.word + " must have time component 0");
      level0.push_back(v);
    }
    set_.candidates.push_back(level0.size());
    for (auto& f : level0) admit(std::move(f), 0);
    frontier_begin_ = 0;
  }

  const BracketSet& set() const { return set_; }

  /// Extends the family by one bracket level.
  const BracketSet& extend() {
    const std::size_t begin = frontier_begin_;
    const std::size_t end = set_.fields.size();
    const int level = set_.depth + 1;
    std::size_t candidates = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const SymVectorField member = set_.fields[i];
      {
        // [L, V0] = -[V0, L]
        ++candidates;
        SymVectorField b = lie_bracket(v0_, member, ctx_);
        admit(negate(b, "[" + member.word + "," + v0_.word + "]"), level);
      }
      for (const auto& v : diffusion_) {
        ++candidates;
        admit(lie_bracket(member, v, ctx_), level);
      }
    }
    set_.candidates.push_back(candidates);
    frontier_begin_ = end;
    set_.depth = level;
    return set_;
  }

 private:
  void admit(SymVectorField f, int level) {
    if (f.is_syntactically_zero()) return;
    for (auto& c : f.components) c = interner_(simplify(c));
    if (interner_.size() > node_cap_) throw BlowUpError(f.word, interner_.size());
    for (const auto& g : set_.fields) {
      bool same = true;
      for (std::size_t i = 0; i < f.components.size() && same; ++i)
        same = f.components[i].id() == g.components[i].id();
      if (same) return;
    }
    set_.fields.push_back(std::move(f));
    set_.levels.push_back(level);
    set_.nodes = interner_.size();
  }

  SymVectorField v0_;
  std::vector<SymVectorField> diffusion_;
  BracketContext ctx_;
  ExprInterner interner_;
  std::size_t node_cap_;
  BracketSet set_;
  std::size_t frontier_begin_ = 0;
};

inline BracketSet generate_LN(const SymVectorField& v0, std::span<const SymVectorField> diffusion, int N,
                              std::size_t node_cap = 4'000'000) {
  if (N < 0) throw DomainError("bracket depth N must be nonnegative");
  BracketGenerator gen(v0, {diffusion.begin(), diffusion.end()}, node_cap);
  for (int k = 0; k < N; ++k) gen.extend();
  return gen.set();
}

// ---------------------------------------------------------------------------
// Rank

struct RankReport {
  double time = 0.0;
  std::vector<double> point;
  int depth = 0;
  std::size_t members = 0;
  std::vector<double> singular_values;  // descending
  double tol = 1e-8;
  int rank = 0;
  int dim = 0;

  bool full() const { return rank == dim; }
};

/// Numerical rank: singular values above tol * max(sigma_max, 1e-300).
inline int rank_from_singular_values(std::span<const double> sv, double tol) {
  if (sv.empty()) return 0;
  const double cutoff = tol * std::max(sv.front(), 1e-300);
  return static_cast<int>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cutoff; }));
}

/// Evaluates the members at (s, x), normalises each nonzero column to unit
/// length, and reports the singular values of the d x |L_N| matrix.
inline RankReport span_dimension(const BracketSet& bs, double s, std::span<const double> x, double tol = 1e-8) {
  if (!(tol > 0.0)) throw DomainError("rank tolerance must be positive");
  if (static_cast<int>(x.size()) != bs.dim) throw DomainError("evaluation point has the wrong dimension");
  RankReport rep;
  rep.time = s;
  rep.point.assign(x.begin(), x.end());
  rep.depth = bs.depth;
  rep.members = bs.size();
  rep.tol = tol;
  rep.dim = bs.dim;
  std::vector<double> pt(1 + x.size());
  pt[0] = s;
  std::copy(x.begin(), x.end(), pt.begin() + 1);
  Evaluator eval(pt);
  Eigen::MatrixXd m(bs.dim, static_cast<Eigen::Index>(bs.size()));
  Eigen::Index cols = 0;
  for (const auto& f : bs.fields) {
    double norm = 0.0;
    for (int i = 1; i <= bs.dim; ++i) {
      const double v = eval(f.components[static_cast<std::size_t>(i)]);
      if (!std::isfinite(v)) throw DomainError("non-finite value of bracket " + f.word);
      m(i - 1, cols) = v;
      norm += v * v;
    }
    if (norm > 0.0) {
      m.col(cols) /= std::sqrt(norm);
      ++cols;
    }
  }
  if (cols > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.leftCols(cols));
    const auto& sv = svd.singularValues();
    rep.singular_values.assign(sv.data(), sv.data() + sv.size());
  }
  rep.rank = rank_from_singular_values(rep.singular_values, tol);
  return rep;
}

// ---------------------------------------------------------------------------
// Full weak Hoermander check over torus times

struct HoermanderOptions {
  int max_depth = 6;
  int grid = 64;
  std::vector<double> extra_times;
  double tol = 1e-8;
  std::size_t node_cap = 4'000'000;
  int perturbations = 0;  // random points of radius `perturbation_radius` around x
  double perturbation_radius = 1e-3;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct DepthResult {
  int depth = 0;
  std::size_t members = 0;
  std::size_t nodes = 0;
  std::vector<RankReport> reports;  // one per time
  std::vector<double> failing_times;
  bool full = false;
};

struct HoermanderVerdict {
  int dim = 0;
  double period = 1.0;
  std::vector<double> times;
  std::vector<DepthResult> depths;
  std::optional<int> minimal_depth;
  std::optional<std::string> blow_up;  // word that exceeded the node budget
  // perturbation check at the minimal depth
  int perturbations_checked = 0;
  int perturbations_full = 0;

  bool established() const { return minimal_depth.has_value(); }
};

inline std::vector<double> torus_grid(double period, int grid, std::span<const double> extra) {
  std::vector<double> times;
  for (int i = 0; i < grid; ++i) times.push_back(period * i / grid);
  times.insert(times.end(), extra.begin(), extra.end());
  return times;
}

/// Tests rank d of L_N at (s, x) for every grid time s, for N = 1 .. max_depth,
/// stopping at the first N that passes everywhere.
inline HoermanderVerdict full_weak_hoermander_check(const SymVectorField& v0,
                                                    std::span<const SymVectorField> diffusion, double period,
                                                    std::span<const double> x, const HoermanderOptions& opt) {
  if (opt.max_depth < 1) throw ConfigError("hoermander.n_max must be at least 1");
  if (opt.grid < 1) throw ConfigError("hoermander.grid must be positive");
  HoermanderVerdict verdict;
  verdict.dim = v0.dim;
  verdict.period = period;
  verdict.times = torus_grid(period, opt.grid, opt.extra_times);
  BracketGenerator gen(v0, {diffusion.begin(), diffusion.end()}, opt.node_cap);
  for (int depth = 1; depth <= opt.max_depth; ++depth) {
    try {
      gen.extend();
    } catch (const BlowUpError& e) {
      verdict.blow_up = e.word();
      break;
    }
    const BracketSet& bs = gen.set();
    DepthResult res;
    res.depth = depth;
    res.members = bs.size();
    res.nodes = bs.nodes;
    res.reports.resize(verdict.times.size());
    parallel_for(
        verdict.times.size(),
        [&](std::size_t i) { res.reports[i] = span_dimension(bs, verdict.times[i], x, opt.tol); },
        opt.threads);
    for (const auto& r : res.reports)
      if (!r.full()) res.failing_times.push_back(r.time);
    res.full = res.failing_times.empty();
    verdict.depths.push_back(std::move(res));
    if (verdict.depths.back().full) {
      verdict.minimal_depth = depth;
      if (opt.perturbations > 0) {
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> uniform;
        for (int k = 0; k < opt.perturbations; ++k) {
          std::vector<double> dir(x.size());
          double norm = 0.0;
          for (auto& d : dir) {
            d = normal(rng);
            norm += d * d;
          }
          const double radius = opt.perturbation_radius * std::pow(uniform(rng), 1.0 / static_cast<double>(x.size()));
          std::vector<double> y(x.begin(), x.end());
          for (std::size_t i = 0; i < y.size(); ++i) y[i] += radius * dir[i] / std::sqrt(norm);
          bool all = true;
          for (double s : verdict.times) all = all && span_dimension(bs, s, y, opt.tol).full();
          ++verdict.perturbations_checked;
          if (all) ++verdict.perturbations_full;
        }
      }
      break;
    }
  }
  return verdict;
}

/// Convenience overload for the built-in models.
inline HoermanderVerdict full_weak_hoermander_check(const ModelSpec& spec, std::span<const double> x,
                                                    const HoermanderOptions& opt) {
  const auto [v0, v1] = symbolic_fields(spec);
  const std::vector<SymVectorField> diffusion{v1};
  return full_weak_hoermander_check(v0, diffusion, spec.period(), x, opt);
}

/// The time s in [0, 1/4] where the toy determinant 1 - (2/3) c sin^2(2 pi s) vanishes (c >= 3/2).
inline std::optional<double> toy_degenerate_time(double c) {
  const double target = 1.5 / c;
  if (target > 1.0) return std::nullopt;
  return std::asin(std::sqrt(target)) / (2.0 * std::numbers::pi);
}

}  // namespace periodic_harris
