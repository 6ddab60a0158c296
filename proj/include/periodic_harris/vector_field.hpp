#pragma once

// Symbolic vector fields on time x state, (1 + d) components in the variables
// (t, x1, ..., xd), and their Lie brackets.

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/expr.hpp"

namespace periodic_harris {

struct SymVectorField {
  int dim = 0;
  std::vector<Expr> components;  // components[0] is the time component
  std::string word;

  SymVectorField() = default;
  SymVectorField(std::vector<Expr> comps, std::string label)
      : dim(static_cast<int>(comps.size()) - 1), components(std::move(comps)), word(std::move(label)) {
    if (dim < 1) throw DomainError("a vector field needs at least one state component");
    const Expr& c0 = components[0];
    if (!(c0.is_constant(0.0) || c0.is_constant(1.0)))
      throw DomainError("time component of " + word + " must be identically 0 or 1");
  }

  bool drives_time() const { return components[0].is_constant(1.0); }

  /// True if every state component is the constant 0.
  bool is_syntactically_zero() const {
    for (std::size_t i = 1; i < components.size(); ++i)
      if (!components[i].is_zero()) return false;
    return true;
  }

  /// Evaluates the d state components at (t, x).
  std::vector<double> evaluate_state(double t, std::span<const double> x) const {
    std::vector<double> point(1 + x.size());
    point[0] = t;
    std::copy(x.begin(), x.end(), point.begin() + 1);
    Evaluator eval(point);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(dim));
    for (std::size_t i = 1; i < components.size(); ++i) out.push_back(eval(components[i]));
    return out;
  }
};

/// Caches partial derivatives shared across many brackets of the same fields.
class BracketContext {
 public:
  explicit BracketContext(int dim) {
    for (int v = 0; v <= dim; ++v) diffs_.emplace_back(v);
  }
  Expr partial(const Expr& e, int var) { return diffs_.at(static_cast<std::size_t>(var))(e); }

 private:
  std::vector<Differentiator> diffs_;
};

/// Lie bracket [A, B] for a field B with vanishing time component:
///   [A,B]^i = (A^0 == 1 ? dB^i/dt : 0) + sum_j ( A^j dB^i/dx_j - B^j dA^i/dx_j ).
inline SymVectorField lie_bracket(const SymVectorField& a, const SymVectorField& b,
                                  BracketContext& ctx) {
  if (a.dim != b.dim) throw DomainError("dimension mismatch in Lie bracket");
  if (!b.components[0].is_zero())
    throw DomainError("second argument of a Lie bracket must have zero time component");
  const int d = a.dim;
  std::vector<Expr> out(static_cast<std::size_t>(d) + 1);
  out[0] = Expr::constant(0.0);
  for (int i = 1; i <= d; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    Expr acc = a.drives_time() ? ctx.partial(b.components[iu], 0) : Expr::constant(0.0);
    for (int j = 1; j <= d; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      acc = acc + a.components[ju] * ctx.partial(b.components[iu], j);
      acc = acc - b.components[ju] * ctx.partial(a.components[iu], j);
    }
    out[iu] = acc;
  }
  return SymVectorField(std::move(out), "[" + a.word + "," + b.word + "]");
}

inline SymVectorField lie_bracket(const SymVectorField& a, const SymVectorField& b) {
  BracketContext ctx(a.dim);
  return lie_bracket(a, b, ctx);
}

inline SymVectorField negate(const SymVectorField& f, std::string word) {
  std::vector<Expr> out;
  out.reserve(f.components.size());
  for (const auto& c : f.components) out.push_back(-c);
  return SymVectorField(std::move(out), std::move(word));
}

/// Parses a field from text: one expression per line (time component first).
/// Blank lines and lines starting with '#' are skipped.
inline SymVectorField parse_vector_field(std::istream& in, std::string word) {
  std::vector<Expr> comps;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    comps.push_back(simplify(parse(line)));
  }
  return SymVectorField(std::move(comps), std::move(word));
}

inline SymVectorField load_vector_field(const std::string& path, std::string word) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vector field file " + path);
  return parse_vector_field(in, std::move(word));
}

}  // namespace periodic_harris
