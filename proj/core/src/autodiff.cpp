#include "tailflow/autodiff.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace tailflow::ad {

Tape::Tape(std::span<const double> params) {
  values_.reserve(params.size() + 4096);
  adjoints_.reserve(params.size() + 4096);
  edge_end_.reserve(params.size() + 4096);
  edges_.reserve(16384);
  for (double p : params) add_param(p);
}

Var Tape::add_param(double value) {
  if (values_.size() != num_params_) throw std::logic_error("Tape::add_param after graph nodes were recorded");
  values_.push_back(value);
  adjoints_.push_back(0.0);
  edge_end_.push_back(static_cast<std::uint32_t>(edges_.size()));
  ++num_params_;
  return Var(this, static_cast<std::int64_t>(num_params_ - 1), value);
}

void Tape::set_param_values(std::span<const double> values) {
  if (values.size() != num_params_) throw std::invalid_argument("Tape::set_param_values: size mismatch");
  std::copy(values.begin(), values.end(), values_.begin());
}

void Tape::check_poison(double value, std::size_t index) {
  if (std::isnan(value) && !first_poisoned_) first_poisoned_ = index;
}

Var Tape::finish_node(double value) {
  if (edges_.size() == pending_begin_) return Var(value);
  const std::size_t index = values_.size();
  for (std::size_t e = pending_begin_; e < edges_.size(); ++e) check_poison(edges_[e].partial, index);
  check_poison(value, index);
  values_.push_back(value);
  adjoints_.push_back(0.0);
  edge_end_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return Var(this, static_cast<std::int64_t>(index), value);
}

Var Tape::node(double value, std::span<const Var> parents, std::span<const double> partials) {
  begin_node();
  for (std::size_t i = 0; i < parents.size(); ++i) push_edge(parents[i], partials[i]);
  return finish_node(value);
}

Var Tape::unary(double value, const Var& a, double da) {
  begin_node();
  push_edge(a, da);
  return finish_node(value);
}

Var Tape::binary(double value, const Var& a, double da, const Var& b, double db) {
  begin_node();
  push_edge(a, da);
  push_edge(b, db);
  return finish_node(value);
}

BackwardResult Tape::backward(const Var& output, double seed) {
  BackwardResult result;
  if (first_poisoned_) {
    result.ok = false;
    result.first_poisoned = first_poisoned_;
    return result;
  }
  if (output.is_constant()) return result;
  const std::size_t out = static_cast<std::size_t>(output.index);
  adjoints_[out] += seed;
  for (std::size_t i = out + 1; i-- > num_params_;) {
    const double a = adjoints_[i];
    if (a == 0.0) continue;
    const std::uint32_t begin = i == 0 ? 0u : edge_end_[i - 1];
    const std::uint32_t end = edge_end_[i];
    for (std::uint32_t e = begin; e < end; ++e) adjoints_[edges_[e].parent] += a * edges_[e].partial;
    adjoints_[i] = 0.0;
  }
  return result;
}

void Tape::clear_gradients() { std::fill(adjoints_.begin(), adjoints_.end(), 0.0); }

void Tape::rewind() {
  values_.resize(num_params_);
  adjoints_.resize(num_params_);
  edge_end_.resize(num_params_);
  edges_.clear();
  first_poisoned_.reset();
}

Var pow(const Var& base, const Var& exponent) {
  const double b = base.value;
  const double e = exponent.value;
  const double v = std::pow(b, e);
  Tape* t = detail::tape_of(base, exponent);
  if (!t || (base.is_constant() && exponent.is_constant())) return Var(v);
  const double db = (e == 0.0) ? 0.0 : e * std::pow(b, e - 1.0);
  // d/de b^e = b^e log b; take the limit 0 at b = 0 so that 0^e stays differentiable in e.
  const double de = (b == 0.0) ? 0.0 : v * std::log(b);
  return t->binary(v, base, db, exponent, de);
}

Var sum(std::span<const Var> xs) {
  Tape* t = nullptr;
  double s = 0.0;
  for (const Var& x : xs) {
    s += x.value;
    if (!x.is_constant()) t = x.tape;
  }
  if (!t) return Var(s);
  t->begin_node();
  for (const Var& x : xs) t->push_edge(x, 1.0);
  return t->finish_node(s);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  Tape* t = nullptr;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].value * b[i].value;
    if (!a[i].is_constant()) t = a[i].tape;
    if (!b[i].is_constant()) t = b[i].tape;
  }
  if (!t) return Var(s);
  t->begin_node();
  for (std::size_t i = 0; i < a.size(); ++i) {
    t->push_edge(a[i], b[i].value);
    t->push_edge(b[i], a[i].value);
  }
  return t->finish_node(s);
}

std::vector<Var> matvec(std::span<const Var> w, std::span<const Var> b, std::span<const Var> x) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  if (w.size() != rows * cols) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<Var> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const Var> row = w.subspan(r * cols, cols);
    Tape* t = b[r].tape;
    double s = b[r].value;
    for (std::size_t c = 0; c < cols; ++c) {
      s += row[c].value * x[c].value;
      if (!t) t = row[c].tape ? row[c].tape : x[c].tape;
    }
    if (!t) {
      out[r] = Var(s);
      continue;
    }
    t->begin_node();
    t->push_edge(b[r], 1.0);
    for (std::size_t c = 0; c < cols; ++c) {
      t->push_edge(row[c], x[c].value);
      t->push_edge(x[c], row[c].value);
    }
    out[r] = t->finish_node(s);
  }
  return out;
}

std::vector<double> matvec(std::span<const double> w, std::span<const double> b, std::span<const double> x) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  if (w.size() != rows * cols) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    out[r] = s;
  }
  return out;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Var log_sum_exp(std::span<const Var> xs) {
  double m = -std::numeric_limits<double>::infinity();
  Tape* t = nullptr;
  for (const Var& x : xs) {
    m = std::max(m, x.value);
    if (!x.is_constant()) t = x.tape;
  }
  double s = 0.0;
  for (const Var& x : xs) s += std::exp(x.value - m);
  const double v = m + std::log(s);
  if (!t) return Var(v);
  t->begin_node();
  for (const Var& x : xs) t->push_edge(x, std::exp(x.value - v));
  return t->finish_node(v);
}

}  // namespace tailflow::ad
