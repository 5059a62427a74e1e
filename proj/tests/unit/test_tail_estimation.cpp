#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/comet.hpp"
#include "tailflow/special.hpp"
#include "tailflow/tail_estimation.hpp"

using namespace tailflow;

TEST_CASE("Hill estimator agrees with the direct formula") {
  std::mt19937_64 g(1);
  std::vector<double> x(3000);
  for (auto& v : x) v = 1.0 + oracle::gpd_draw(0.5, 2.0, g);
  std::vector<double> s = x;
  std::sort(s.begin(), s.end());
  for (std::size_t k : {2u, 50u, 400u}) CHECK(tailest::hill_estimator(s, k) == doctest::Approx(oracle::hill(x, k)).epsilon(1e-12));
  CHECK_THROWS(tailest::hill_estimator(s, 1));
  CHECK_THROWS(tailest::hill_estimator(s, s.size()));
}

TEST_CASE("Hill on exact Pareto recovers the shape") {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(200000);
  for (auto& v : x) v = std::pow(1 - u(g), -0.7);
  std::sort(x.begin(), x.end());
  CHECK(tailest::hill_estimator(x, 20000) == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("double bootstrap on Student-T tails") {
  Rng rng(3);
  for (double nu : {1.0, 2.0}) {
    std::vector<double> x(20000);
    for (auto& v : x) v = std::abs(special::sample_student_t(nu, rng));
    const auto r = tailest::hill_double_bootstrap(x, {200, 7});
    CAPTURE(nu);
    CHECK(r.shape == doctest::Approx(1 / nu).epsilon(0.25));
    CHECK_FALSE(r.light_tailed);
    CHECK(r.k >= 2);
  }
  CHECK_THROWS(tailest::hill_double_bootstrap(std::vector<double>(100, 1.0)));
}

TEST_CASE("marginal estimates keep heavy columns and map flagged ones to the light convention") {
  Rng rng(4);
  Matrix m(5000, 2);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    m(r, 0) = rng.normal();
    m(r, 1) = special::sample_student_t(1.0, rng);
  }
  const auto est = tailest::estimate_marginal_tails(m, {200, 1});
  CHECK(est.shape.size() == 2);
  CHECK(est.shape[1] == doctest::Approx(1.0).epsilon(0.3));
  CHECK_FALSE(est.light_tailed[1]);
  if (est.light_tailed[0]) CHECK(est.shape[0] == doctest::Approx(1e-3));
}

TEST_CASE("GPD maximum likelihood") {
  std::mt19937_64 g(5);
  for (double shape : {-0.2, 0.0, 0.3, 1.0}) {
    std::vector<double> e(20000);
    for (auto& v : e) v = oracle::gpd_draw(shape, 1.5, g);
    const auto fit = tailest::gpd_fit_ml(e);
    CAPTURE(shape);
    CHECK(fit.shape == doctest::Approx(shape).epsilon(0.05).scale(1.0));
    CHECK(fit.scale == doctest::Approx(1.5).epsilon(0.06));
    CHECK(fit.log_likelihood == doctest::Approx(oracle::gpd_loglik(e, fit.shape, fit.scale)).epsilon(1e-9));
    // no nearby point beats the optimum
    for (double ds : {-0.01, 0.01})
      for (double dl : {-0.01, 0.01}) CHECK(oracle::gpd_loglik(e, fit.shape + ds, fit.scale * (1 + dl)) <= fit.log_likelihood + 1e-6);
  }
  CHECK_THROWS_AS(tailest::gpd_fit_ml(std::vector<double>(5, 1.0)), tailest::GpdFitError);
  CHECK_THROWS_AS(tailest::gpd_fit_ml(std::vector<double>(50, 2.0)), tailest::GpdFitError);
}

TEST_CASE("GPD scale with a known shape") {
  std::mt19937_64 g(6);
  std::vector<double> e(5000);
  for (auto& v : e) v = oracle::gpd_draw(0.5, 3.0, g);
  const auto fit = tailest::gpd_fit_scale(e, 0.5);
  CHECK(fit.shape == 0.5);
  CHECK(fit.scale == doctest::Approx(3.0).epsilon(0.08));
  for (double f : {0.999, 1.001}) CHECK(oracle::gpd_loglik(e, 0.5, fit.scale * f) <= fit.log_likelihood + 1e-8);
  // exponential: closed-form ML scale is the mean
  double mean = 0;
  for (double v : e) mean += v;
  mean /= e.size();
  CHECK(tailest::gpd_fit_scale(e, 0.0).scale == doctest::Approx(mean).epsilon(1e-8));
}

TEST_CASE("COMET marginal: uniform data, round trips and tails") {
  Rng rng(7);
  std::vector<double> u(5000);
  for (auto& v : u) v = rng.uniform();
  const auto mu = comet::CometMarginal::fit(u);
  CHECK(mu.cdf(0.5) == doctest::Approx(0.5).epsilon(0.02));

  std::vector<double> t(20000);
  for (auto& v : t) v = special::sample_student_t(2.0, rng);
  const auto mt = comet::CometMarginal::fit(t);
  CHECK(mt.upper().shape == doctest::Approx(0.5).epsilon(0.1).scale(1.0));
  CHECK(mt.lower().shape == doctest::Approx(0.5).epsilon(0.1).scale(1.0));
  for (double x : {-80.0, -5.0, mt.lower().threshold, -0.3, 0.0, 1.1, mt.upper().threshold, 4.0, 300.0}) {
    CAPTURE(x);
    CHECK(mt.inv_cdf(mt.cdf(x)) == doctest::Approx(x).epsilon(1e-6));
    CHECK(mt.inv_logit_cdf(mt.logit_cdf(x)) == doctest::Approx(x).epsilon(1e-6));
  }
  // continuity at the junctions
  for (double th : {mt.lower().threshold, mt.upper().threshold}) {
    CHECK(mt.cdf(th * (1 - 1e-12)) == doctest::Approx(mt.cdf(th * (1 + 1e-12))).epsilon(1e-9));
    CHECK(mt.cdf(th) == doctest::Approx(th < 0 ? 0.05 : 0.95).epsilon(1e-9));
  }
  // monotone, limits, density integrates
  double prev = 0;
  for (double x = -50; x < 50; x += 0.05) {
    const double c = mt.cdf(x);
    CHECK(c > prev);
    prev = c;
  }
  CHECK(mt.cdf(-1e12) < 1e-6);
  CHECK(mt.cdf(1e12) > 1 - 1e-6);
  const double mass = oracle::integrate([&](double x) { return std::exp(mt.log_pdf(x)); }, -40, 40, 1e-9);
  CHECK(mass == doctest::Approx(mt.cdf(40) - mt.cdf(-40)).epsilon(1e-5));
  CHECK(mt.inv_logit_cdf(0.0) == doctest::Approx(mt.inv_cdf(0.5)).epsilon(1e-12));
  CHECK_THROWS(comet::CometMarginal::fit(std::vector<double>(50, 1.0)));
}

TEST_CASE("COMET marginal with a known shape") {
  Rng rng(8);
  std::vector<double> t(5000);
  for (auto& v : t) v = special::sample_student_t(1.0, rng);
  const auto m = comet::CometMarginal::fit(t, 0.05, 1.0);
  CHECK(m.upper().shape == 1.0);
  CHECK(m.lower().shape == 1.0);
}

TEST_CASE("logistic then GPD quantile") {
  CHECK(comet::logistic_gpd(0.0, 1.0, 1.0) == doctest::Approx(1.0));  // median of GPD(1): 2^1 - 1
  const double z = 3.0, lam = 0.5, s = 2.0;
  const double u = 1 / (1 + std::exp(-z));
  CHECK(comet::logistic_gpd(z, lam, s) == doctest::Approx(s * (std::pow(1 - u, -lam) - 1) / lam).epsilon(1e-12));
  CHECK_THROWS(comet::logistic_gpd(0.0, 0.0, 1.0));
}
