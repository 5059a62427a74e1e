#pragma once

// Reverse-mode automatic differentiation over scalars.
//
// A Tape records nodes in creation order, so parents always precede children
// and a single reverse sweep visits every node once. Parameters are the first
// nodes on the tape; rewind() drops everything after them while keeping their
// accumulated adjoints, which lets a training loop build, sweep and discard a
// small graph per observation.
//
// Constants never touch the tape: a Var with a negative index is a constant
// and contributes no edges. Operations whose inputs are all constants fold to
// constants.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tailflow/special.hpp"

namespace tailflow::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int64_t index = -1;
  double value = 0.0;

  Var() = default;
  Var(double v) : value(v) {}  // NOLINT: implicit lift of constants
  Var(Tape* t, std::int64_t i, double v) : tape(t), index(i), value(v) {}

  bool is_constant() const noexcept { return index < 0; }
};

struct BackwardResult {
  bool ok = true;
  std::optional<std::size_t> first_poisoned;
};

class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const double> params);

  /// Register a parameter leaf; only valid before any non-parameter node.
  Var add_param(double value);
  Var param(std::size_t i) const { return Var(const_cast<Tape*>(this), static_cast<std::int64_t>(i), values_[i]); }
  static Var lift(double constant) { return Var(constant); }

  std::size_t num_params() const noexcept { return num_params_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Record a node with explicit parents and local partials. Constant parents
  /// are skipped. Returns a constant if no parent is live.
  Var node(double value, std::span<const Var> parents, std::span<const double> partials);
  Var unary(double value, const Var& a, double da);
  Var binary(double value, const Var& a, double da, const Var& b, double db);

  /// Incremental node construction for fused primitives (dot, matvec rows).
  /// Edges pushed between begin_node and finish_node belong to the new node.
  void begin_node() { pending_begin_ = edges_.size(); }
  void push_edge(const Var& parent, double partial) {
    if (parent.index >= 0) edges_.push_back({static_cast<std::uint32_t>(parent.index), partial});
  }
  Var finish_node(double value);

  /// Accumulate d(output)/d(node) * seed into every ancestor adjoint.
  BackwardResult backward(const Var& output, double seed = 1.0);

  std::span<const double> gradients() const { return {adjoints_.data(), num_params_}; }
  double gradient(std::size_t i) const { return adjoints_[i]; }
  void clear_gradients();

  /// Drop all non-parameter nodes. Parameter adjoints are retained.
  void rewind();
  void set_param_values(std::span<const double> values);

  bool poisoned() const noexcept { return first_poisoned_.has_value(); }
  std::optional<std::size_t> first_poisoned() const noexcept { return first_poisoned_; }
  void clear_poison() { first_poisoned_.reset(); }

 private:
  struct Edge {
    std::uint32_t parent;
    double partial;
  };

  void check_poison(double value, std::size_t index);

  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::uint32_t> edge_end_;  // edges of node i are [edge_end_[i-1], edge_end_[i])
  std::vector<Edge> edges_;
  std::size_t num_params_ = 0;
  std::size_t pending_begin_ = 0;
  std::optional<std::size_t> first_poisoned_;
};

// ---------------------------------------------------------------------------
// Primitive set. Every function has a double overload with the same name so
// model code can be written once as a template over the scalar type.

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.value; }

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) { return a.tape ? a.tape : b.tape; }
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t || (a.is_constant() && b.is_constant())) return Var(a.value + b.value);
  return t->binary(a.value + b.value, a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t || (a.is_constant() && b.is_constant())) return Var(a.value - b.value);
  return t->binary(a.value - b.value, a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b);
  if (!t || (a.is_constant() && b.is_constant())) return Var(a.value * b.value);
  return t->binary(a.value * b.value, a, b.value, b, a.value);
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value / b.value;
  Tape* t = detail::tape_of(a, b);
  if (!t || (a.is_constant() && b.is_constant())) return Var(q);
  return t->binary(q, a, 1.0 / b.value, b, -q / b.value);
}
inline Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value);
  return a.tape->unary(-a.value, a, -1.0);
}
inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline Var apply_unary(const Var& a, double v, double dv) {
  if (a.is_constant()) return Var(v);
  return a.tape->unary(v, a, dv);
}

// Domain violations (log of a negative number, ...) yield NaN, which poisons the tape.
inline double exp(double x) { return std::exp(x); }
inline Var exp(const Var& a) {
  const double e = std::exp(a.value);
  return apply_unary(a, e, e);
}
inline double log(double x) { return std::log(x); }
inline Var log(const Var& a) { return apply_unary(a, std::log(a.value), 1.0 / a.value); }
inline double log1p(double x) { return std::log1p(x); }
inline Var log1p(const Var& a) { return apply_unary(a, std::log1p(a.value), 1.0 / (1.0 + a.value)); }
inline double expm1(double x) { return std::expm1(x); }
inline Var expm1(const Var& a) { return apply_unary(a, std::expm1(a.value), std::exp(a.value)); }
inline double sqrt(double x) { return std::sqrt(x); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value);
  return apply_unary(a, s, 0.5 / s);
}
inline double square(double x) { return x * x; }
inline Var square(const Var& a) { return apply_unary(a, a.value * a.value, 2.0 * a.value); }
inline double abs(double x) { return std::abs(x); }
/// |a| with the derivative split by sign; at 0 the right derivative (+1) is used.
inline Var abs(const Var& a) { return apply_unary(a, std::abs(a.value), a.value < 0.0 ? -1.0 : 1.0); }
inline double tanh(double x) { return std::tanh(x); }
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value);
  return apply_unary(a, t, 1.0 - t * t);
}
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Var sigmoid(const Var& a) {
  const double s = sigmoid(a.value);
  return apply_unary(a, s, s * (1.0 - s));
}
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(const Var& a) { return apply_unary(a, relu(a.value), a.value > 0.0 ? 1.0 : 0.0); }
/// log(1 + e^x), stable for large |x|.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline Var softplus(const Var& a) { return apply_unary(a, softplus(a.value), sigmoid(a.value)); }
/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y)); }

inline double pow(double a, double b) { return std::pow(a, b); }
Var pow(const Var& base, const Var& exponent);

inline double erfc(double z) { return special::erfc(z); }
inline Var erfc(const Var& a) {
  return apply_unary(a, special::erfc(a.value), -2.0 / special::kSqrtPi * std::exp(-a.value * a.value));
}
inline double log_erfc(double z) { return special::log_erfc(z); }
/// d/dz log erfc(z) = -2 / (sqrt(pi) erfcx(z)), evaluated without underflow.
inline Var log_erfc(const Var& a) {
  return apply_unary(a, special::log_erfc(a.value), -2.0 / (special::kSqrtPi * special::erfcx(a.value)));
}
inline double lgamma(double x) { return special::lgamma(x); }
inline Var lgamma(const Var& a) { return apply_unary(a, special::lgamma(a.value), special::digamma(a.value)); }

Var sum(std::span<const Var> xs);
inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}
Var dot(std::span<const Var> a, std::span<const Var> b);
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
/// y = W x + b with W row-major (rows x cols).
std::vector<Var> matvec(std::span<const Var> w, std::span<const Var> b, std::span<const Var> x);
std::vector<double> matvec(std::span<const double> w, std::span<const double> b, std::span<const double> x);

/// log(sum(exp(xs))) with max shifting.
Var log_sum_exp(std::span<const Var> xs);
double log_sum_exp(std::span<const double> xs);

}  // namespace tailflow::ad
