#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/autodiff.hpp"
#include "tailflow/tail_transform.hpp"

using namespace tailflow;
using ttf::TailParams;

TEST_CASE("forward matches the closed form") {
  const TailParams p{0.3, 1.7, 0.8, 0.25};
  for (double z = -9; z <= 9; z += 0.173)
    CHECK(ttf::forward(z, p) == doctest::Approx(oracle::ttf_forward(z, 0.3, 1.7, 0.8, 0.25)).epsilon(1e-12));
}

TEST_CASE("forward is odd around mu when the tails agree and R(0) = mu") {
  const TailParams p{2.0, 0.5, 0.6, 0.6};
  CHECK(ttf::forward(0.0, p) == 2.0);
  for (double z : {0.1, 1.0, 4.0}) CHECK(ttf::forward(z, p) - 2.0 == doctest::Approx(2.0 - ttf::forward(-z, p)));
}

TEST_CASE("inverse round trip over both branches") {
  for (double lam : {0.05, 0.1, 0.5, 1.0, 3.0, 8.0})
    for (const auto& [mu, sigma] : {std::pair{0.0, 1.0}, std::pair{2.0, 0.5}, std::pair{-1.0, 30.0}}) {
      const TailParams p{mu, sigma, lam, lam * 0.7};
      for (double z = -30; z <= 30; z += 0.05) {
        bool saturated = false;
        const double x = ttf::forward<double>(z, ttf::as_scalar(p), &saturated);
        // past the exponent cap the map is flat and cannot be inverted
        if (saturated || !std::isfinite(x)) continue;
        CHECK(std::abs(ttf::inverse(x, p) - z) <= 1e-8 * std::max(1.0, std::abs(z)));
      }
    }
}

TEST_CASE("inverse is continuous across the branch switch") {
  const TailParams p{0.0, 1.0, 0.5, 0.5};
  // y^(-1/lambda) = 1e-6  <=>  x = sigma/lambda (1e6^lambda - 1)
  const double x_switch = (std::pow(1e6, 0.5) - 1) / 0.5;
  const double lo = ttf::inverse(x_switch * (1 - 1e-12), p);
  const double hi = ttf::inverse(x_switch * (1 + 1e-12), p);
  CHECK(std::abs(hi - lo) < 1e-9);
  // the unrefined asymptotic value is close but not at round-trip accuracy
  CHECK(std::abs(ttf::inverse_asymptotic(x_switch, p) - ttf::inverse_direct(x_switch, p)) < 1e-2);
}

TEST_CASE("log derivative matches finite differences") {
  const TailParams p{0.0, 1.3, 0.4, 1.2};
  for (double z : {-6.0, -2.0, -0.3, 0.2, 1.0, 3.5, 7.0}) {
    const double fd = oracle::derivative([&](double t) { return ttf::forward(t, p); }, z, 1e-4);
    CHECK(ttf::log_deriv(z, p) == doctest::Approx(std::log(fd)).epsilon(1e-9));
  }
}

TEST_CASE("deep-tail log derivative stays finite where the value saturates") {
  const TailParams p{0.0, 1.0, 1.0, 1.0};
  const double ld = ttf::log_deriv(60.0, p);
  CHECK(std::isfinite(ld));
  CHECK(ld > 1000);
}

TEST_CASE("derivative at the origin is sigma sqrt(2/pi)") {
  for (double sigma : {0.3, 1.0, 4.0}) {
    const TailParams p{1.0, sigma, 0.7, 2.0};
    CHECK(std::abs(std::exp(ttf::log_deriv(0.0, p)) - sigma * std::sqrt(2 / M_PI)) <= 1e-10);
  }
}

TEST_CASE("alternative form jumps at zero by the GPD half-mass offsets") {
  const TailParams p{0.0, 1.0, 0.6, 1.4};
  const double up = ttf::alt_forward(1e-300, p);
  const double down = ttf::alt_forward(-1e-300, p);
  CHECK(std::abs(up - (std::pow(2, 0.6) - 1) / 0.6) <= 1e-10);
  CHECK(std::abs(down + (std::pow(2, 1.4) - 1) / 1.4) <= 1e-10);
}

TEST_CASE("parameter gradients of forward and inverse") {
  const double z0 = 1.7, x0 = 5.0;
  for (double sgn : {1.0, -1.0}) {
    const std::vector<double> theta{0.2, 1.1, 0.6, 0.9};
    auto fwd = [&](std::vector<double> t) { return ttf::forward(sgn * z0, TailParams{t[0], t[1], t[2], t[3]}); };
    auto inv = [&](std::vector<double> t) { return ttf::inverse(sgn * x0, TailParams{t[0], t[1], t[2], t[3]}); };
    for (int which = 0; which < 2; ++which) {
      ad::Tape tape(theta);
      ttf::TailParamsT<ad::Var> pv{tape.param(0), tape.param(1), tape.param(2), tape.param(3)};
      const ad::Var out = which == 0 ? ttf::forward<ad::Var>(ad::Var(sgn * z0), pv) : ttf::inverse<ad::Var>(ad::Var(sgn * x0), pv);
      tape.backward(out);
      for (std::size_t i = 0; i < 4; ++i) {
        auto f1 = [&](double v) {
          auto t = theta;
          t[i] = v;
          return which == 0 ? fwd(t) : inv(t);
        };
        CHECK(tape.gradient(i) == doctest::Approx(oracle::derivative(f1, theta[i], 1e-5)).epsilon(1e-7).scale(1.0));
      }
    }
  }
}

TEST_CASE("GPD quantiles") {
  CHECK(ttf::gpd_quantile(0.0, 0.5) == 0.0);
  CHECK(ttf::gpd_quantile(0.75, 0.5) == doctest::Approx((std::pow(0.25, -0.5) - 1) / 0.5));
  CHECK(ttf::two_tailed_quantile(-0.75, 1.0, 0.5) == doctest::Approx(-(std::pow(0.25, -0.5) - 1) / 0.5));
  CHECK_THROWS(ttf::gpd_quantile(1.0, 0.5));
}

TEST_CASE("pushed normal upper tail has GPD shape lambda") {
  // R(z) for large z behaves like the GPD quantile of 1 - Phi(z) up to scale:
  // the ratio of log R to -log(1 - Phi(z)) tends to lambda.
  const TailParams p{0.0, 1.0, 0.5, 0.5};
  const double z = 30.0;
  const double ratio = std::log(ttf::forward(z, p)) / -std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
  CHECK(ratio == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("marginal layer") {
  const auto layer = ttf::MarginalTailLayer::uniform(3, 0.5);
  const std::vector<double> z{-1.0, 0.0, 2.0};
  const auto f = layer.forward(z);
  const auto b = layer.inverse(f.values);
  for (int i = 0; i < 3; ++i) CHECK(b.values[i] == doctest::Approx(z[i]).epsilon(1e-12));
  CHECK(f.log_det == doctest::Approx(-b.log_det).epsilon(1e-12));
  CHECK_THROWS(layer.forward(std::vector<double>{1.0}));
  CHECK_THROWS(ttf::MarginalTailLayer({TailParams{0, -1, 1, 1}}));
}
