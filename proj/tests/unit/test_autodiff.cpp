#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/autodiff.hpp"

using namespace tailflow;
using ad::Var;

namespace {

// Gradient of f at x by reverse mode, and by central differences.
template <class F>
void check_grad(F f, std::vector<double> x, double tol = 1e-7) {
  ad::Tape tape(x);
  std::vector<Var> v;
  for (std::size_t i = 0; i < x.size(); ++i) v.push_back(tape.param(i));
  const Var y = f(v);
  REQUIRE(tape.backward(y).ok);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto fi = [&](double t) {
      auto xx = x;
      xx[i] = t;
      std::vector<double> d(xx.begin(), xx.end());
      return f(d);
    };
    CHECK(tape.gradient(i) == doctest::Approx(oracle::derivative(fi, x[i], 1e-4)).epsilon(tol).scale(1e-8));
  }
}

}  // namespace

TEST_CASE("primitive partials") {
  check_grad([](auto v) { return v[0] * v[1] + v[0] / v[1] - v[1]; }, {0.7, -1.3});
  check_grad([](auto v) { return ad::exp(v[0]) * ad::log(v[1]) + ad::log1p(v[0]) - ad::expm1(v[1]); }, {0.2, 2.1});
  check_grad([](auto v) { return ad::sqrt(v[0]) + ad::tanh(v[1]) + ad::sigmoid(v[0] * v[1]); }, {1.7, -0.4});
  check_grad([](auto v) { return ad::softplus(v[0]) * ad::square(v[1]) + ad::abs(v[1]); }, {-0.6, -2.0});
  check_grad([](auto v) { return ad::pow(v[0], v[1]); }, {2.3, 0.7});
  check_grad([](auto v) { return ad::erfc(v[0]) + ad::log_erfc(v[1]); }, {0.4, 6.0});
  check_grad([](auto v) { return ad::lgamma(v[0]); }, {3.3});
  check_grad([](auto v) { return ad::log_sum_exp(std::span(v)) + ad::dot(std::span(v), std::span(v)); }, {0.3, -2.0, 1.1});
  check_grad([](auto v) { return ad::sum(std::span(v)) * v[2]; }, {0.3, -2.0, 1.1});
}

TEST_CASE("constants fold and never reach the tape") {
  ad::Tape tape(std::vector<double>{1.0});
  const std::size_t before = tape.size();
  const Var c = Var(2.0) * Var(3.0) + ad::exp(Var(0.0));
  CHECK(c.is_constant());
  CHECK(c.value == 7.0);
  CHECK(tape.size() == before);
  const Var p = tape.param(0);
  const Var y = p * 0.0 + c;
  CHECK_FALSE(y.is_constant());
}

TEST_CASE("rewind keeps parameter adjoints and backward accumulates") {
  ad::Tape tape(std::vector<double>{2.0, 5.0});
  for (int rep = 0; rep < 3; ++rep) {
    tape.rewind();
    const Var y = tape.param(0) * tape.param(1);
    tape.backward(y, 0.5);
  }
  CHECK(tape.gradient(0) == doctest::Approx(3 * 0.5 * 5.0));
  CHECK(tape.gradient(1) == doctest::Approx(3 * 0.5 * 2.0));
  tape.clear_gradients();
  CHECK(tape.gradient(0) == 0.0);
}

TEST_CASE("a non-finite node is reported") {
  ad::Tape tape(std::vector<double>{-1.0});
  const Var y = ad::log(tape.param(0));
  CHECK(tape.poisoned());
  const auto r = tape.backward(y);
  CHECK_FALSE(r.ok);
}

TEST_CASE("fused node builder") {
  ad::Tape tape(std::vector<double>{1.5, -2.0});
  tape.begin_node();
  tape.push_edge(tape.param(0), 3.0);
  tape.push_edge(Var(4.0), 100.0);  // constant parents are ignored
  tape.push_edge(tape.param(1), -1.0);
  const Var y = tape.finish_node(42.0);
  tape.backward(y);
  CHECK(tape.gradient(0) == 3.0);
  CHECK(tape.gradient(1) == -1.0);
  tape.begin_node();
  CHECK(tape.finish_node(1.0).is_constant());
}
