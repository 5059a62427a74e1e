#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tailflow/flows/flow_model.hpp"
#include "tailflow/flows/serialization.hpp"
#include "tailflow/synthetic.hpp"
#include "tailflow/training.hpp"

using namespace tailflow;
using namespace tailflow::flows;

namespace {

ArchitectureOptions options_for(const std::string& name, std::size_t d) {
  ArchitectureOptions o;
  o.init_seed = 21;
  if (name == "mTAF" || name == "TTFfix") o.tail_shapes.assign(d, 0.4);
  if (name == "COMET") {
    Rng r(3);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> s(1000);
      for (auto& v : s) v = special::sample_student_t(3.0, r);
      o.comet_marginals.push_back(comet::CometMarginal::fit(s));
    }
  }
  return o;
}

FlowModel jiggled(const std::string& name, std::size_t d, bool lu = false) {
  auto o = options_for(name, d);
  o.lu_layer = lu;
  FlowModel m = build_architecture(name, d, o);
  Rng r(77);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (!m.params.frozen[i]) m.params.values[i] += 0.1 * r.normal();
  return m;
}

std::vector<double> point(std::size_t d, double shift) {
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = 1.4 * std::sin(2.1 * i + shift);
  return x;
}

}  // namespace

TEST_CASE("every architecture builds with the documented stack") {
  for (const auto& name : architecture_names()) {
    CAPTURE(name);
    const FlowModel m = build_architecture(name, 3, options_for(name, 3));
    CHECK(m.dim == 3);
    CHECK(m.name == name);
    CHECK(std::holds_alternative<RqsLayer>(m.layers.at(0)));
    CHECK(std::holds_alternative<AffineArLayer>(m.layers.at(1)));
    const bool tail = name == "TTF" || name == "TTFfix" || name == "TTF_tBase";
    CHECK((m.tail_layer() != nullptr) == tail);
  }
  CHECK(std::string(base_kind(build_architecture("normal", 2).base)) == "std_normal");
  CHECK_THROWS(build_architecture("TTFfix", 3));  // needs tail shapes
  CHECK_THROWS(build_architecture("nonsense", 3));
  CHECK(build_architecture("TTF", 3, [] { ArchitectureOptions o; o.lu_layer = true; return o; }()).layers.size() == 4);
}

TEST_CASE("TTFfix freezes lambda at the given shapes; mTAF freezes nu = 1/shape") {
  const FlowModel f = build_architecture("TTFfix", 2, options_for("TTFfix", 2));
  for (const auto& t : f.tail_params()) {
    CHECK(t.lambda_pos == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(t.lambda_neg == doctest::Approx(0.4).epsilon(1e-14));
  }
  const FlowModel m = build_architecture("mTAF", 2, options_for("mTAF", 2));
  const auto& base = std::get<StudentTBase>(m.base);
  CHECK_FALSE(base.trainable);
  for (double nu : student_t_dof(base, m.view())) CHECK(nu == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("random shape initialization lies in [0.05, 1]") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    ArchitectureOptions o;
    o.init_seed = s;
    for (const auto& t : build_architecture("TTF", 4, o).tail_params()) {
      CHECK(t.lambda_pos >= 0.05);
      CHECK(t.lambda_pos <= 1.0);
    }
    const FlowModel g = build_architecture("gTAF", 4, o);
    for (double nu : student_t_dof(std::get<StudentTBase>(g.base), g.view())) {
      CHECK(nu >= 1.0 - 1e-12);
      CHECK(nu <= 20.0 + 1e-9);
    }
  }
}

TEST_CASE("log density equals base density plus numerical log-Jacobian") {
  for (const auto& name : architecture_names())
    for (std::size_t d : {2u, 5u})
      for (bool lu : {false, true}) {
        CAPTURE(name);
        CAPTURE(d);
        CAPTURE(lu);
        const FlowModel m = jiggled(name, d, lu);
        const auto p = m.view();
        const auto x = point(d, 0.3);
        const auto zb = m.to_base<double>(p, x);
        const auto back = m.from_base<double>(p, zb.values);
        for (std::size_t i = 0; i < d; ++i) CHECK(back.values[i] == doctest::Approx(x[i]).epsilon(1e-8));
        const auto J = oracle::jacobian([&](const std::vector<double>& v) { return m.to_base<double>(p, v).values; }, x, 1e-6);
        const double ref = base_log_prob<double>(m.base, p, zb.values) + oracle::log_abs_det(J, d);
        CHECK(m.log_prob(x) == doctest::Approx(ref).epsilon(1e-6));
      }
}

TEST_CASE("samples carry their own log density") {
  for (const auto& name : architecture_names()) {
    CAPTURE(name);
    const FlowModel m = jiggled(name, 3);
    Rng r(5);
    for (int k = 0; k < 5; ++k) {
      const auto s = m.sample_with_log_prob<double>(m.view(), r);
      if (!std::isfinite(s.log_q)) continue;
      CHECK(s.log_q == doctest::Approx(m.log_prob(s.x)).epsilon(1e-7));
    }
  }
}

TEST_CASE("training gradient matches finite differences of the mean NLL") {
  for (const auto& name : architecture_names())
    for (std::size_t d : {2u, 5u}) {
      CAPTURE(name);
      CAPTURE(d);
      FlowModel m = jiggled(name, d);
      Matrix data(4, d);
      for (std::size_t r = 0; r < 4; ++r) {
        const auto x = point(d, 0.9 * r);
        for (std::size_t j = 0; j < d; ++j) data(r, j) = x[j];
      }
      ad::Tape tape(m.params.values);
      const std::vector<std::size_t> rows{0, 1, 2, 3};
      const auto lg = train::de_loss_gradient(m, tape, data, rows);
      REQUIRE(lg.finite);
      CHECK(lg.loss == doctest::Approx(train::mean_nll(m, data)).epsilon(1e-12));
      Rng pick(d);
      for (int k = 0; k < 25; ++k) {
        const std::size_t i = pick.index(m.params.size());
        const double v0 = m.params.values[i];
        auto f = [&](double v) {
          m.params.values[i] = v;
          const double out = train::mean_nll(m, data);
          m.params.values[i] = v0;
          return out;
        };
        const double fd = m.params.frozen[i] ? 0.0 : oracle::derivative(f, v0, 1e-4);
        CHECK(lg.gradient[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-7));
      }
    }
}

TEST_CASE("d = 1 TTF density integrates to one") {
  for (double lam : {0.5, 1.0}) {
    ArchitectureOptions o;
    o.tail_shapes = {lam};
    FlowModel m = build_architecture("TTFfix", 1, o);
    Rng r(2);
    for (std::size_t i = 0; i < m.params.size(); ++i)
      if (!m.params.frozen[i]) m.params.values[i] += 0.2 * r.normal();
    auto dens = [&](double x) {
      const double v = std::exp(m.log_prob(std::vector<double>{x}));
      return std::isfinite(v) ? v : 0.0;
    };
    // heavy tails reach far out; decade-spaced knots keep each panel well resolved
    const double x_lo = m.from_base<double>(m.view(), std::vector<double>{-9.0}).values[0];
    const double x_hi = m.from_base<double>(m.view(), std::vector<double>{9.0}).values[0];
    std::vector<double> knots{0.0};
    for (double e = 1e-1; e < std::max(-x_lo, x_hi); e *= 10) {
      knots.push_back(e);
      knots.insert(knots.begin(), -e);
    }
    double total = 0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k)
      total += oracle::integrate(dens, knots[k], knots[k + 1], 1e-12, 60);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("serialization reproduces the model bit for bit") {
  for (const auto& name : architecture_names()) {
    CAPTURE(name);
    const FlowModel m = jiggled(name, 3, name == "TTF");
    std::stringstream ss;
    save_model(m, ss);
    const FlowModel back = load_model(ss);
    CHECK(back.params.values == m.params.values);
    CHECK(back.params.frozen == m.params.frozen);
    const auto x = point(3, 1.0);
    CHECK(back.log_prob(x) == m.log_prob(x));
  }
  std::stringstream bad("tailflow-model 99\n");
  CHECK_THROWS(load_model(bad));
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 0.0, 4.9e-324}) CHECK(parse_double(format_double(v)) == v);
  CHECK(std::isinf(parse_double(format_double(INFINITY))));
  CHECK(std::isnan(parse_double(format_double(NAN))));
  CHECK_THROWS(parse_double("1.5x"));
}
