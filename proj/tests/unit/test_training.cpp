#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/flows/flow_model.hpp"
#include "tailflow/synthetic.hpp"
#include "tailflow/training.hpp"

using namespace tailflow;

TEST_CASE("Adam step by hand") {
  std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -0.1, 4.0};
  const std::vector<std::uint8_t> frozen{0, 0, 1};
  train::AdamState st;
  CHECK(train::adam_step(x, g, st, 0.01, frozen));
  // first step: m_hat = g, v_hat = g^2, so the update is lr * sign(g) up to eps
  CHECK(x[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(-2.0 + 0.01 * 0.1 / (0.1 + 1e-8)).epsilon(1e-14));
  CHECK(x[2] == 0.5);
  CHECK(train::adam_step(x, g, st, 0.01, frozen));
  const double m = 0.9 * 0.1 * 0.3 + 0.1 * 0.3, v = 0.999 * 0.001 * 0.09 + 0.001 * 0.09;
  const double step = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(x[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8) - step).epsilon(1e-13));

  const std::vector<double> bad{NAN, 0, 0};
  const auto before = x;
  CHECK_FALSE(train::adam_step(x, bad, st, 0.01));
  CHECK(x == before);
  CHECK(st.skipped == 1);
}

TEST_CASE("gradient clipping") {
  std::vector<double> g{3, 4};
  CHECK(train::clip_gradient(g, 1.0) == 5.0);
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
  std::vector<double> small{0.1, 0.1};
  train::clip_gradient(small, 1.0);
  CHECK(small[0] == 0.1);
}

TEST_CASE("config validation") {
  train::TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.clip_norm = -1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.patience = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("patience: a flat validation loss stops at epoch patience + 1") {
  // A model whose parameters are all frozen never changes its validation loss.
  flows::FlowModel m = flows::build_architecture("normal", 2);
  for (auto& f : m.params.frozen) f = 1;
  Matrix data(20, 2);
  Rng r(1);
  for (double& v : data.data()) v = r.normal();
  train::TrainConfig c;
  c.patience = 100;
  c.max_epochs = 1000;
  const auto res = train::fit_density(m, data, data, c);
  CHECK(res.epochs_run == 101);
  CHECK(res.best_epoch == 1);
  CHECK(res.trace.size() == 101);
}

TEST_CASE("fit_density learns a shifted, scaled Gaussian in one dimension") {
  flows::FlowModel m = flows::build_architecture("normal", 1);
  Rng r(2);
  Matrix tr(2000, 1), va(500, 1);
  for (double& v : tr.data()) v = 2.0 + 0.5 * r.normal();
  for (double& v : va.data()) v = 2.0 + 0.5 * r.normal();
  train::TrainConfig c;
  c.learning_rate = 0.05;
  c.max_epochs = 600;
  const auto res = train::fit_density(m, tr, va, c);
  CHECK_FALSE(res.diverged);
  // reference: the Gaussian maximum-likelihood fit to the training rows, scored on the validation rows
  double mu = 0, var = 0;
  for (double v : tr.data()) mu += v / 2000;
  for (double v : tr.data()) var += (v - mu) * (v - mu) / 2000;
  double ref = 0;
  for (double v : va.data()) ref += (0.5 * std::log(2 * M_PI * var) + 0.5 * (v - mu) * (v - mu) / var) / 500;
  CHECK(std::abs(train::mean_nll(m, va) - ref) < 0.02);
  double mean = 0;
  Rng s(3);
  for (int i = 0; i < 4000; ++i) mean += m.sample(s)[0];
  CHECK(mean / 4000 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("TTFfix keeps its frozen shapes through training") {
  flows::ArchitectureOptions o;
  o.tail_shapes = {0.7, 0.2};
  flows::FlowModel m = flows::build_architecture("TTFfix", 2, o);
  std::vector<double> frozen_before;
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.frozen[i]) frozen_before.push_back(m.params.values[i]);
  const auto hash = [](const std::vector<double>& v) { return std::hash<std::string>{}(std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double))); };
  Rng r(4);
  Matrix d(200, 2);
  for (double& v : d.data()) v = special::sample_student_t(2.0, r);
  train::TrainConfig c;
  c.max_epochs = 30;
  train::fit_density(m, d, d, c);
  std::vector<double> frozen_after;
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.frozen[i]) frozen_after.push_back(m.params.values[i]);
  CHECK(hash(frozen_before) == hash(frozen_after));
  const auto tp = m.tail_params();
  CHECK(tp[0].lambda_pos == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(tp[1].lambda_neg == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("a non-finite loss rolls back, halves the rate and eventually gives up") {
  flows::FlowModel m = flows::build_architecture("normal", 1);
  Matrix d(10, 1, 0.0);
  d(3, 0) = INFINITY;
  train::TrainConfig c;
  c.max_epochs = 50;
  const auto res = train::fit_density(m, d, d.slice(0, 3), c);
  CHECK(res.diverged);
  CHECK(res.rollbacks == static_cast<std::size_t>(c.max_retries + 1));
}

TEST_CASE("ELBO gradient matches finite differences with common random numbers") {
  flows::ArchitectureOptions o;
  o.tail_shapes.assign(3, 0.5);
  for (const char* name : {"TTFfix", "TTF", "normal", "m_normal"}) {
    CAPTURE(name);
    flows::FlowModel m = flows::build_architecture(name, 3, o);
    Rng j(6);
    for (std::size_t i = 0; i < m.params.size(); ++i)
      if (!m.params.frozen[i]) m.params.values[i] += 0.05 * j.normal();
    const auto target = experiments::synthetic_target(3, 2.0);
    ad::Tape tape(m.params.values);
    Rng r1(9);
    const auto est = train::elbo_gradient(m, target, 8, r1, tape);
    REQUIRE(est.ok);
    auto elbo = [&]() {
      Rng r(9);
      double s = 0;
      for (int k = 0; k < 8; ++k) {
        const auto d = m.sample_with_log_prob<double>(m.view(), r);
        s += target.value(d.x) - d.log_q;
      }
      return s / 8;
    };
    CHECK(est.elbo == doctest::Approx(elbo()).epsilon(1e-12));
    Rng pick(1);
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = pick.index(m.params.size());
      if (m.params.frozen[i]) continue;
      const double v0 = m.params.values[i];
      const double fd = oracle::derivative([&](double v) { m.params.values[i] = v; const double e = elbo(); m.params.values[i] = v0; return e; }, v0, 1e-5);
      CHECK(est.gradient[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-7));
    }
  }
}

TEST_CASE("VI recovers a one-dimensional Gaussian target") {
  flows::FlowModel m = flows::build_architecture("normal", 1);
  const auto target = train::make_log_target([](auto x) {
    using S = typename decltype(x)::value_type;
    const S r = (x[0] - 1.0) / 2.0;
    return -0.5 * r * r - std::log(2.0) - special::kLogSqrt2Pi;
  });
  train::TrainConfig c;
  c.learning_rate = 0.02;
  c.max_epochs = 800;
  c.vi_samples = 32;
  const auto res = train::fit_vi(m, target, c);
  CHECK_FALSE(res.diverged);
  double tail = 0;
  for (std::size_t k = res.trace.size() - 100; k < res.trace.size(); ++k) tail += res.trace[k].train_loss;
  CHECK(tail / 100 == doctest::Approx(0.0).epsilon(0.02).scale(1.0));
}
