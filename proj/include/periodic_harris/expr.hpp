#pragma once

// A small symbolic expression engine: parse, print, evaluate, differentiate and
// simplify real-analytic expressions in the variables t, x1, ..., xd.
//
// Grammar (whitespace is ignored):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | power ;
//   power   = primary [ "^" [ "-" ] integer ] ;
//   primary = number | "t" | "x" integer | "pi"
//           | func "(" expr ")" | "(" expr ")" ;
//   func    = "exp" | "log" | "sin" | "cos" | "sqrt" | "phi" | "phi_" integer ;
//   number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//
// `phi(u)` is u / (exp(u) - 1) continued analytically through u = 0, and
// `phi_k(u)` is its k-th derivative (produced by differentiation).
//
// Expressions are immutable DAGs of shared nodes. Variable index 0 is t and
// index i >= 1 is x_i.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "periodic_harris/errors.hpp"
#include "periodic_harris/kernel.hpp"

namespace periodic_harris {

enum class Op : std::uint8_t {
  constant,
  variable,
  neg,
  exp,
  log,
  sin,
  cos,
  sqrt,
  phi,  // derivative order stored in the integer slot
  add,
  sub,
  mul,
  div,
  pow,  // integer exponent stored in the integer slot
};

namespace detail {
struct Node;
}

class Expr {
 public:
  Expr();
  explicit Expr(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}

  static Expr constant(double value);
  static Expr variable(int index);
  static Expr time() { return variable(0); }
  static Expr state(int i) { return variable(i); }

  Op op() const;
  double value() const;
  int integer() const;  // variable index, pow exponent, or phi order
  const Expr& lhs() const;
  const Expr& rhs() const;
  std::size_t hash() const;
  const detail::Node* id() const noexcept { return node_.get(); }

  bool is_constant() const { return op() == Op::constant; }
  bool is_constant(double v) const { return is_constant() && value() == v; }
  bool is_zero() const { return is_constant(0.0); }

 private:
  std::shared_ptr<const detail::Node> node_;
};

namespace detail {

struct Node {
  Op op;
  double value = 0.0;
  int integer = 0;
  Expr a;
  Expr b;
  std::size_t hash = 0;
  Node(Op o, double v, int i) : op(o), value(v), integer(i), a(nullptr), b(nullptr) {}
  Node(Op o, double v, int i, Expr x, Expr y)
      : op(o), value(v), integer(i), a(std::move(x)), b(std::move(y)) {}
};

inline std::size_t hash_combine(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

inline bool is_unary(Op op) {
  return op == Op::neg || op == Op::exp || op == Op::log || op == Op::sin || op == Op::cos ||
         op == Op::sqrt || op == Op::phi || op == Op::pow;
}

inline bool is_binary(Op op) {
  return op == Op::add || op == Op::sub || op == Op::mul || op == Op::div;
}

inline Expr make_node(Op op, double value, int integer, Expr a = Expr(nullptr),
                      Expr b = Expr(nullptr)) {
  std::size_t h = std::hash<int>{}(static_cast<int>(op));
  if (op == Op::constant) {
    double v = value == 0.0 ? 0.0 : value;  // fold -0.0
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = hash_combine(h, std::hash<std::uint64_t>{}(bits));
  }
  h = hash_combine(h, std::hash<int>{}(integer));
  if (a.id() != nullptr) h = hash_combine(h, a.hash());
  if (b.id() != nullptr) h = hash_combine(h, b.hash());
  auto node = std::make_shared<Node>(op, value, integer, std::move(a), std::move(b));
  node->hash = h;
  return Expr(std::move(node));
}

}  // namespace detail

inline Expr Expr::constant(double value) {
  return detail::make_node(Op::constant, value == 0.0 ? 0.0 : value, 0);
}
inline Expr Expr::variable(int index) {
  if (index < 0) throw DomainError("negative variable index");
  return detail::make_node(Op::variable, 0.0, index);
}
inline Expr::Expr() : Expr(constant(0.0)) {}
inline Op Expr::op() const { return node_->op; }
inline double Expr::value() const { return node_->value; }
inline int Expr::integer() const { return node_->integer; }
inline const Expr& Expr::lhs() const { return node_->a; }
inline const Expr& Expr::rhs() const { return node_->b; }
inline std::size_t Expr::hash() const { return node_->hash; }

/// Structural equality (same tree shape, ops, constants and variables).
inline bool structurally_equal(const Expr& x, const Expr& y) {
  if (x.id() == y.id()) return true;
  if (x.hash() != y.hash() || x.op() != y.op() || x.integer() != y.integer()) return false;
  if (x.op() == Op::constant) return x.value() == y.value();
  if (x.op() == Op::variable) return true;
  if (!structurally_equal(x.lhs(), y.lhs())) return false;
  if (detail::is_binary(x.op())) return structurally_equal(x.rhs(), y.rhs());
  return true;
}

// ---------------------------------------------------------------------------
// Raw constructors: build exactly the requested node (used by the parser).

namespace raw {
inline Expr unary(Op op, Expr a, int integer = 0) {
  return detail::make_node(op, 0.0, integer, std::move(a));
}
inline Expr binary(Op op, Expr a, Expr b) {
  return detail::make_node(op, 0.0, 0, std::move(a), std::move(b));
}
}  // namespace raw

// ---------------------------------------------------------------------------
// Simplifying constructors. Each one folds constants and removes neutral
// elements; none of them changes the value of the expression.

inline Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  if (a.op() == Op::neg) return a.lhs();
  return raw::unary(Op::neg, a);
}

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (b.op() == Op::neg) {
    if (structurally_equal(a, b.lhs())) return Expr::constant(0.0);
    return raw::binary(Op::sub, a, b.lhs());
  }
  if (a.op() == Op::neg && structurally_equal(a.lhs(), b)) return Expr::constant(0.0);
  return raw::binary(Op::add, a, b);
}

inline Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  if (structurally_equal(a, b)) return Expr::constant(0.0);
  if (b.op() == Op::neg) return a + b.lhs();
  return raw::binary(Op::sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_zero() || b.is_zero()) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  if (b.is_constant()) return b * a;  // constants to the left
  if (a.op() == Op::neg && b.op() == Op::neg) return a.lhs() * b.lhs();
  if (a.op() == Op::neg) return -(a.lhs() * b);
  if (b.op() == Op::neg) return -(a * b.lhs());
  if (a.is_constant() && b.op() == Op::mul && b.lhs().is_constant())
    return Expr::constant(a.value() * b.lhs().value()) * b.rhs();
  return raw::binary(Op::mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant() && b.value() != 0.0)
    return Expr::constant(a.value() / b.value());
  if (a.is_zero()) return Expr::constant(0.0);
  if (b.is_constant(1.0)) return a;
  if (b.is_constant(-1.0)) return -a;
  if (structurally_equal(a, b)) return Expr::constant(1.0);
  if (a.op() == Op::neg) return -(a.lhs() / b);
  if (b.op() == Op::neg) return -(a / b.lhs());
  return raw::binary(Op::div, a, b);
}

inline Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
inline Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
inline Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
inline Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
inline Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
inline Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }
inline Expr operator/(const Expr& a, double b) { return a / Expr::constant(b); }
inline Expr operator/(double a, const Expr& b) { return Expr::constant(a) / b; }

inline Expr pow(const Expr& base, int exponent) {
  if (exponent == 0) return Expr::constant(1.0);
  if (exponent == 1) return base;
  if (base.is_constant()) return Expr::constant(std::pow(base.value(), exponent));
  if (base.op() == Op::pow) return pow(base.lhs(), base.integer() * exponent);
  return raw::unary(Op::pow, base, exponent);
}

inline Expr exp(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::exp(a.value()));
  return raw::unary(Op::exp, a);
}
inline Expr log(const Expr& a) {
  if (a.is_constant() && a.value() > 0.0) return Expr::constant(std::log(a.value()));
  return raw::unary(Op::log, a);
}
inline Expr sin(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::sin(a.value()));
  return raw::unary(Op::sin, a);
}
inline Expr cos(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::cos(a.value()));
  return raw::unary(Op::cos, a);
}
inline Expr sqrt(const Expr& a) {
  if (a.is_constant() && a.value() >= 0.0) return Expr::constant(std::sqrt(a.value()));
  return raw::unary(Op::sqrt, a);
}
inline Expr phi(const Expr& a, int order = 0) {
  if (a.is_constant()) return Expr::constant(phi_derivative(order, a.value()));
  return raw::unary(Op::phi, a, order);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Evaluates expressions at one point; shared sub-expressions are computed once.
/// `point[0]` is t, `point[i]` is x_i.
class Evaluator {
 public:
  explicit Evaluator(std::span<const double> point) : point_(point) {}

  double operator()(const Expr& e) {
    if (e.op() == Op::constant) return e.value();
    if (e.op() == Op::variable) return variable(e.integer());
    if (auto it = cache_.find(e.id()); it != cache_.end()) return it->second;
    const double v = compute(e);
    cache_.emplace(e.id(), v);
    return v;
  }

 private:
  double variable(int i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= point_.size())
      throw DomainError("variable index " + std::to_string(i) + " outside evaluation point");
    return point_[static_cast<std::size_t>(i)];
  }

  double compute(const Expr& e) {
    switch (e.op()) {
      case Op::neg: return -(*this)(e.lhs());
      case Op::exp: return std::exp((*this)(e.lhs()));
      case Op::log: {
        const double u = (*this)(e.lhs());
        if (!(u > 0.0)) throw DomainError("log of non-positive value");
        return std::log(u);
      }
      case Op::sin: return std::sin((*this)(e.lhs()));
      case Op::cos: return std::cos((*this)(e.lhs()));
      case Op::sqrt: {
        const double u = (*this)(e.lhs());
        if (u < 0.0) throw DomainError("sqrt of negative value");
        return std::sqrt(u);
      }
      case Op::phi: {
        const double u = (*this)(e.lhs());
        return e.integer() == 0 ? periodic_harris::phi(u) : phi_derivative(e.integer(), u);
      }
      case Op::pow: {
        const double u = (*this)(e.lhs());
        if (u == 0.0 && e.integer() < 0) throw DomainError("division by zero in power");
        return std::pow(u, e.integer());
      }
      case Op::add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::sub: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::mul: return (*this)(e.lhs()) * (*this)(e.rhs());
      case Op::div: {
        const double den = (*this)(e.rhs());
        if (den == 0.0) throw DomainError("division by zero");
        return (*this)(e.lhs()) / den;
      }
      default: break;
    }
    throw DomainError("unknown expression node");
  }

  std::span<const double> point_;
  std::unordered_map<const detail::Node*, double> cache_;
};

inline double evaluate(const Expr& e, std::span<const double> point) {
  return Evaluator(point)(e);
}

inline double evaluate(const Expr& e, std::initializer_list<double> point) {
  return evaluate(e, std::span<const double>(point.begin(), point.size()));
}

// ---------------------------------------------------------------------------
// Differentiation

/// Symbolic partial derivative with respect to one variable. Results are
/// memoized per node, so derivatives of a shared DAG stay shared.
class Differentiator {
 public:
  explicit Differentiator(int var) : var_(var) {}

  Expr operator()(const Expr& e) {
    if (e.op() == Op::constant) return Expr::constant(0.0);
    if (e.op() == Op::variable) return Expr::constant(e.integer() == var_ ? 1.0 : 0.0);
    if (auto it = cache_.find(e.id()); it != cache_.end()) return it->second.second;
    Expr d = compute(e);
    cache_.emplace(e.id(), std::make_pair(e, d));  // keep e alive so the key stays valid
    return d;
  }

  int variable() const noexcept { return var_; }

 private:
  Expr compute(const Expr& e) {
    const Expr& u = e.lhs();
    switch (e.op()) {
      case Op::neg: return -(*this)(u);
      case Op::exp: return e * (*this)(u);
      case Op::log: return (*this)(u) / u;
      case Op::sin: return cos(u) * (*this)(u);
      case Op::cos: return -(sin(u) * (*this)(u));
      case Op::sqrt: return (*this)(u) / (2.0 * e);
      case Op::phi: return phi(u, e.integer() + 1) * (*this)(u);
      case Op::pow:
        return static_cast<double>(e.integer()) * pow(u, e.integer() - 1) * (*this)(u);
      case Op::add: return (*this)(u) + (*this)(e.rhs());
      case Op::sub: return (*this)(u) - (*this)(e.rhs());
      case Op::mul: return (*this)(u) * e.rhs() + u * (*this)(e.rhs());
      case Op::div: {
        const Expr& v = e.rhs();
        const Expr du = (*this)(u);
        const Expr dv = (*this)(v);
        if (dv.is_zero()) return du / v;
        return (du * v - u * dv) / pow(v, 2);
      }
      default: break;
    }
    throw DomainError("unknown expression node");
  }

  int var_;
  std::unordered_map<const detail::Node*, std::pair<Expr, Expr>> cache_;
};

inline Expr diff(const Expr& e, int var) { return Differentiator(var)(e); }

// ---------------------------------------------------------------------------
// Simplification

/// Rebuilds the expression bottom-up through the simplifying constructors.
inline Expr simplify(const Expr& e) {
  std::unordered_map<const detail::Node*, Expr> memo;
  std::function<Expr(const Expr&)> rec = [&](const Expr& x) -> Expr {
    if (x.op() == Op::constant || x.op() == Op::variable) return x;
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second;
    Expr out;
    const Expr a = rec(x.lhs());
    switch (x.op()) {
      case Op::neg: out = -a; break;
      case Op::exp: out = exp(a); break;
      case Op::log: out = log(a); break;
      case Op::sin: out = sin(a); break;
      case Op::cos: out = cos(a); break;
      case Op::sqrt: out = sqrt(a); break;
      case Op::phi: out = phi(a, x.integer()); break;
      case Op::pow: out = pow(a, x.integer()); break;
      case Op::add: out = a + rec(x.rhs()); break;
      case Op::sub: out = a - rec(x.rhs()); break;
      case Op::mul: out = a * rec(x.rhs()); break;
      case Op::div: out = a / rec(x.rhs()); break;
      default: out = x; break;
    }
    memo.emplace(x.id(), out);
    return out;
  };
  return rec(e);
}

// ---------------------------------------------------------------------------
// Hash-consing

/// Maps structurally equal sub-expressions onto a single shared node. Keeps
/// every interned node alive for its own lifetime.
class ExprInterner {
 public:
  Expr operator()(const Expr& e) {
    if (auto it = seen_.find(e.id()); it != seen_.end()) return it->second;
    Expr canonical = e;
    if (detail::is_unary(e.op()) || detail::is_binary(e.op())) {
      Expr a = (*this)(e.lhs());
      Expr b = detail::is_binary(e.op()) ? (*this)(e.rhs()) : Expr(nullptr);
      if (a.id() != e.lhs().id() || (b.id() != nullptr && b.id() != e.rhs().id()))
        canonical = detail::make_node(e.op(), e.value(), e.integer(), a, b);
    }
    Expr out = lookup(canonical);
    seen_.emplace(e.id(), out);
    keep_.push_back(e);
    return out;
  }

  std::size_t size() const noexcept { return table_.size(); }

 private:
  struct Key {
    Op op;
    double value;
    int integer;
    const detail::Node* a;
    const detail::Node* b;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = std::hash<int>{}(static_cast<int>(k.op));
      h = detail::hash_combine(h, std::hash<double>{}(k.value));
      h = detail::hash_combine(h, std::hash<int>{}(k.integer));
      h = detail::hash_combine(h, std::hash<const void*>{}(k.a));
      return detail::hash_combine(h, std::hash<const void*>{}(k.b));
    }
  };

  Expr lookup(const Expr& e) {
    const Key key{e.op(), e.value(), e.integer(),
                  (detail::is_unary(e.op()) || detail::is_binary(e.op())) ? e.lhs().id() : nullptr,
                  detail::is_binary(e.op()) ? e.rhs().id() : nullptr};
    auto [it, inserted] = table_.emplace(key, e);
    return it->second;
  }

  std::unordered_map<Key, Expr, KeyHash> table_;
  std::unordered_map<const detail::Node*, Expr> seen_;
  std::vector<Expr> keep_;
};

/// Number of distinct nodes reachable from the given roots.
inline std::size_t node_count(std::span<const Expr> roots) {
  std::unordered_set<const detail::Node*> seen;
  std::vector<const Expr*> stack;
  for (const auto& r : roots) stack.push_back(&r);
  while (!stack.empty()) {
    const Expr* e = stack.back();
    stack.pop_back();
    if (!seen.insert(e->id()).second) continue;
    if (detail::is_unary(e->op()) || detail::is_binary(e->op())) stack.push_back(&e->lhs());
    if (detail::is_binary(e->op())) stack.push_back(&e->rhs());
  }
  return seen.size();
}

inline std::size_t node_count(const Expr& e) { return node_count(std::span<const Expr>(&e, 1)); }

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul:
    case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    case Op::constant: return e.value() < 0.0 ? 0 : 5;
    default: return 5;
  }
}

inline std::string format_number(double v) {
  if (v == std::numbers::pi) return "pi";
  if (!std::isfinite(v)) throw DomainError("cannot print non-finite constant");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* function_name(Op op) {
  switch (op) {
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::sqrt: return "sqrt";
    default: return "";
  }
}

inline void print(const Expr& e, std::string& out);

inline void print_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

inline void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::constant: {
      const std::string s = format_number(e.value());
      out += e.value() < 0.0 ? "(" + s + ")" : s;
      return;
    }
    case Op::variable:
      out += e.integer() == 0 ? std::string("t") : "x" + std::to_string(e.integer());
      return;
    case Op::neg:
      out += '-';
      print_wrapped(e.lhs(), precedence(e.lhs()) < 4, out);
      return;
    case Op::pow:
      print_wrapped(e.lhs(), precedence(e.lhs()) < 5, out);
      out += '^' + std::to_string(e.integer());
      return;
    case Op::phi:
      out += e.integer() == 0 ? std::string("phi") : "phi_" + std::to_string(e.integer());
      print_wrapped(e.lhs(), true, out);
      return;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      const int p = precedence(e);
      print_wrapped(e.lhs(), precedence(e.lhs()) < p, out);
      out += e.op() == Op::add ? '+' : e.op() == Op::sub ? '-' : e.op() == Op::mul ? '*' : '/';
      print_wrapped(e.rhs(), precedence(e.rhs()) <= p, out);
      return;
    }
    default:
      out += function_name(e.op());
      print_wrapped(e.lhs(), true, out);
      return;
  }
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (accept('+')) e = raw::binary(Op::add, e, term());
      else if (accept('-')) e = raw::binary(Op::sub, e, term());
      else return e;
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept('*')) e = raw::binary(Op::mul, e, unary());
      else if (accept('/')) e = raw::binary(Op::div, e, unary());
      else return e;
    }
  }

  Expr unary() {
    if (accept('-')) {
      // Negated literals become negative constants so that printing round-trips.
      Expr operand = unary();
      if (operand.is_constant()) return Expr::constant(-operand.value());
      return raw::unary(Op::neg, operand);
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!accept('^')) return base;
    const bool negative = accept('-');
    skip();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer exponent");
    const int n = std::stoi(std::string(text_.substr(start, pos_ - start)));
    return raw::unary(Op::pow, base, negative ? -n : n);
  }

  Expr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      const std::size_t s = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      return pos_ - s;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      if (digits() == 0) fail("expected digits after decimal point");
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) fail("expected exponent digits");
    }
    return Expr::constant(std::stod(std::string(text_.substr(start, pos_ - start))));
  }

  Expr primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (accept('(')) {
      Expr e = expr();
      expect(')');
      return e;
    }
    if (!std::isalpha(static_cast<unsigned char>(c))) fail(std::string("unexpected '") + c + "'");
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    if (name == "t") return Expr::time();
    if (name == "pi") return Expr::constant(std::numbers::pi);
    if (name.size() > 1 && name[0] == 'x' && all_digits(name, 1) && name[1] != '0')
      return Expr::state(std::stoi(name.substr(1)));
    Op op;
    int order = 0;
    if (name == "exp") op = Op::exp;
    else if (name == "log") op = Op::log;
    else if (name == "sin") op = Op::sin;
    else if (name == "cos") op = Op::cos;
    else if (name == "sqrt") op = Op::sqrt;
    else if (name == "phi") op = Op::phi;
    else if (name.size() > 4 && name.rfind("phi_", 0) == 0 && all_digits(name, 4)) {
      op = Op::phi;
      order = std::stoi(name.substr(4));
    } else {
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    expect('(');
    Expr arg = expr();
    expect(')');
    return raw::unary(op, arg, order);
  }

  static bool all_digits(const std::string& s, std::size_t from) {
    if (from >= s.size()) return false;
    for (std::size_t i = from; i < s.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses an expression. Throws ParseError on malformed input.
inline Expr parse(std::string_view text) { return detail::Parser(text).parse(); }

/// Highest variable index occurring in `e` (0 if only t or constants).
inline int max_variable(const Expr& e) {
  int best = -1;
  std::unordered_set<const detail::Node*> seen;
  std::function<void(const Expr&)> rec = [&](const Expr& x) {
    if (!seen.insert(x.id()).second) return;
    if (x.op() == Op::variable) best = std::max(best, x.integer());
    if (detail::is_unary(x.op()) || detail::is_binary(x.op())) rec(x.lhs());
    if (detail::is_binary(x.op())) rec(x.rhs());
  };
  rec(e);
  return best;
}

}  // namespace periodic_harris
