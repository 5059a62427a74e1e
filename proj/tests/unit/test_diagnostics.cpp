#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/diagnostics.hpp"
#include "tailflow/synthetic.hpp"

using namespace tailflow;

TEST_CASE("ESS efficiency on constructed weights") {
  CHECK(diag::ess_efficiency(std::vector<double>(50, 3.0)) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> one(200, 0.0);
  one[17] = 1.0;
  CHECK(diag::ess_efficiency(one) == doctest::Approx(1.0 / 200).epsilon(1e-15));
  // two distinct values: (a + b)^2 / (2 (a^2 + b^2))
  CHECK(diag::ess_efficiency(std::vector<double>{1.0, 3.0}) == doctest::Approx(16.0 / 20.0));
  CHECK(diag::ess_efficiency_log(std::vector<double>{1000.0, 1000.0 + std::log(3.0)}) == doctest::Approx(0.8));
  CHECK_THROWS(diag::ess_efficiency(std::vector<double>{0.0, 0.0}));
  CHECK_THROWS(diag::ess_efficiency(std::vector<double>{1.0, -1.0}));
}

TEST_CASE("khat recovers the shape of exact GPD weights") {
  std::mt19937_64 g(1);
  for (double k : {0.2, 0.5, 0.9}) {
    // 3000 tail weights: the shape's standard error is about (1 + k) / sqrt(3000) < 0.04
    std::vector<double> w(1000000);
    for (auto& v : w) v = oracle::gpd_draw(k, 1.0, g);
    const auto kh = diag::khat(w);
    REQUIRE(kh.has_value());
    CHECK(std::abs(*kh - k) < 0.1);
  }
}

TEST_CASE("khat is scale invariant and undefined for equal weights") {
  std::mt19937_64 g(2);
  std::vector<double> w(2000);
  for (auto& v : w) v = oracle::gpd_draw(0.6, 1.0, g);
  const double k0 = *diag::khat(w);
  // power-of-two factors scale every intermediate exactly
  for (double c : {0.125, 1024.0, std::ldexp(1.0, -600)}) {
    std::vector<double> s = w;
    for (auto& v : s) v *= c;
    CHECK(*diag::khat(s) == k0);
  }
  for (double c : {3.7, 1e-200, 1e250}) {
    std::vector<double> s = w;
    for (auto& v : s) v *= c;
    CHECK(*diag::khat(s) == doctest::Approx(k0).epsilon(1e-6));
  }
  CHECK_FALSE(diag::khat(std::vector<double>(500, 2.0)).has_value());
  CHECK(diag::ess_efficiency(std::vector<double>(500, 2.0)) == 1.0);
  CHECK_THROWS(diag::khat(std::vector<double>(50, 1.0)));
}

TEST_CASE("VI diagnostics of the exact target are perfect") {
  // A flow that equals the target is not available, but a normal flow
  // against a normal target is: log weights are all zero.
  flows::FlowModel m = flows::build_architecture("normal", 2);
  const auto target = train::make_log_target([](auto x) {
    using S = typename decltype(x)::value_type;
    return -0.5 * (x[0] * x[0] + x[1] * x[1]) - 2 * special::kLogSqrt2Pi;
  });
  Rng r(3);
  const auto d = diag::vi_diagnostics(m, target, 1000, r);
  CHECK(d.ess_efficiency == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.non_finite == 0);
}
