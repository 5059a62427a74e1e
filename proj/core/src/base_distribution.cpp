#include "tailflow/flows/base_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "tailflow/special.hpp"

namespace tailflow::flows {

namespace {

using ad::Var;

template <class S>
S attach(const S& parent, double value, double slope) {
  if constexpr (std::is_same_v<S, double>) {
    (void)parent;
    (void)slope;
    return value;
  } else {
    return ad::apply_unary(parent, value, slope);
  }
}

template <class S>
S student_t_log_pdf(const S& x, const S& nu) {
  return ad::lgamma(0.5 * (nu + 1.0)) - ad::lgamma(0.5 * nu) - 0.5 * ad::log(nu * special::kPi) -
         0.5 * (nu + 1.0) * ad::log1p(x * x / nu);
}

template <class S>
S check_and_sum(std::vector<S>& terms) {
  return ad::sum(std::span<const S>(terms));
}

}  // namespace

StudentTBase make_student_t_base(std::size_t dim, std::span<const double> nu, bool trainable, ParamSet& params) {
  if (nu.size() != dim) throw std::invalid_argument("StudentTBase: need one nu per dimension");
  StudentTBase b{dim, params.allocate("base.nu", dim), trainable};
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(nu[i] > 0.0) || !std::isfinite(nu[i])) throw std::invalid_argument("StudentTBase: nu must be positive");
    params.values[b.nu_offset + i] = ad::softplus_inverse(nu[i]);
  }
  if (!trainable) params.freeze(b.nu_offset, dim);
  return b;
}

GaussianMixtureBase make_gaussian_mixture_base(std::size_t dim, std::size_t components, ParamSet& params, Rng& rng) {
  if (components == 0) throw std::invalid_argument("GaussianMixtureBase: need at least one component");
  GaussianMixtureBase b;
  b.dim = dim;
  b.components = components;
  b.logits = params.allocate("base.logits", components, 0.0);
  b.means = params.allocate("base.means", components * dim);
  b.stds = params.allocate("base.stds", components * dim, ad::softplus_inverse(1.0 - GaussianMixtureBase::kMinStd));
  for (std::size_t i = 0; i < components * dim; ++i) params.values[b.means + i] = rng.normal();
  return b;
}

GeneralizedNormalBase make_generalized_normal_base(std::size_t dim, double shape, ParamSet& params) {
  if (!(shape > GeneralizedNormalBase::kMinShape)) throw std::invalid_argument("GeneralizedNormalBase: shape too small");
  return {dim, params.allocate("base.shape", dim, ad::softplus_inverse(shape - GeneralizedNormalBase::kMinShape))};
}

std::size_t base_dim(const BaseDistribution& base) {
  return std::visit([](const auto& b) { return b.dim; }, base);
}

const char* base_kind(const BaseDistribution& base) {
  struct V {
    const char* operator()(const StdNormalBase&) const { return "std_normal"; }
    const char* operator()(const StudentTBase&) const { return "student_t"; }
    const char* operator()(const GaussianMixtureBase&) const { return "gaussian_mixture"; }
    const char* operator()(const GeneralizedNormalBase&) const { return "generalized_normal"; }
  };
  return std::visit(V{}, base);
}

std::vector<double> student_t_dof(const StudentTBase& base, const ParamView<double>& p) {
  std::vector<double> nu(base.dim);
  for (std::size_t i = 0; i < base.dim; ++i) nu[i] = ad::softplus(p[base.nu_offset + i]);
  return nu;
}

template <class S>
S base_log_prob(const BaseDistribution& base, const ParamView<S>& p, std::span<const S> z) {
  if (z.size() != base_dim(base)) throw std::invalid_argument("base_log_prob: dimension mismatch");
  const std::size_t d = z.size();
  std::vector<S> terms;
  terms.reserve(d + 1);

  if (std::holds_alternative<StdNormalBase>(base)) {
    for (std::size_t i = 0; i < d; ++i) terms.push_back(-0.5 * z[i] * z[i]);
    terms.push_back(S(-static_cast<double>(d) * special::kLogSqrt2Pi));
    return check_and_sum(terms);
  }

  if (const auto* t = std::get_if<StudentTBase>(&base)) {
    for (std::size_t i = 0; i < d; ++i) terms.push_back(student_t_log_pdf<S>(z[i], ad::softplus(p[t->nu_offset + i])));
    return check_and_sum(terms);
  }

  if (const auto* m = std::get_if<GaussianMixtureBase>(&base)) {
    std::vector<S> logits(m->components);
    for (std::size_t k = 0; k < m->components; ++k) logits[k] = p[m->logits + k];
    const S norm = ad::log_sum_exp(std::span<const S>(logits));
    std::vector<S> comp(m->components);
    for (std::size_t k = 0; k < m->components; ++k) {
      terms.clear();
      terms.push_back(logits[k] - norm);
      for (std::size_t i = 0; i < d; ++i) {
        const S s = ad::softplus(p[m->stds + k * d + i]) + GaussianMixtureBase::kMinStd;
        const S u = (z[i] - p[m->means + k * d + i]) / s;
        terms.push_back(-0.5 * u * u - ad::log(s));
      }
      terms.push_back(S(-static_cast<double>(d) * special::kLogSqrt2Pi));
      comp[k] = check_and_sum(terms);
    }
    return ad::log_sum_exp(std::span<const S>(comp));
  }

  const auto& g = std::get<GeneralizedNormalBase>(base);
  for (std::size_t i = 0; i < d; ++i) {
    const S beta = ad::softplus(p[g.shape_offset + i]) + GeneralizedNormalBase::kMinShape;
    const double az = std::abs(ad::value(z[i]));
    // |z|^beta as exp(beta log|z|) so both derivatives stay finite at z = 0.
    const S power = az > 0.0 ? ad::exp(beta * ad::log(ad::abs(z[i]))) : S(0.0);
    terms.push_back(ad::log(beta) - 0.69314718055994530942 - ad::lgamma(1.0 / beta) - power);
  }
  return check_and_sum(terms);
}

template <class S>
std::vector<S> base_sample(const BaseDistribution& base, const ParamView<S>& p, Rng& rng) {
  const std::size_t d = base_dim(base);
  std::vector<S> z(d);

  if (std::holds_alternative<StdNormalBase>(base)) {
    for (auto& v : z) v = S(rng.normal());
    return z;
  }

  if (const auto* t = std::get_if<StudentTBase>(&base)) {
    for (std::size_t i = 0; i < d; ++i) {
      const S nu = ad::softplus(p[t->nu_offset + i]);
      const special::StudentTDraw draw = special::sample_student_t_draw(ad::value(nu), rng);
      z[i] = attach<S>(nu, draw.value, draw.dvalue_dnu);
    }
    return z;
  }

  if (const auto* m = std::get_if<GaussianMixtureBase>(&base)) {
    std::vector<double> logits(m->components);
    for (std::size_t k = 0; k < m->components; ++k) logits[k] = ad::value(p[m->logits + k]);
    const double norm = ad::log_sum_exp(std::span<const double>(logits));
    double u = rng.uniform();
    std::size_t k = 0;
    for (; k + 1 < m->components; ++k) {
      u -= std::exp(logits[k] - norm);
      if (u <= 0.0) break;
    }
    for (std::size_t i = 0; i < d; ++i) {
      const S s = ad::softplus(p[m->stds + k * d + i]) + GaussianMixtureBase::kMinStd;
      z[i] = p[m->means + k * d + i] + s * rng.normal();
    }
    return z;
  }

  const auto& g = std::get<GeneralizedNormalBase>(base);
  for (std::size_t i = 0; i < d; ++i) {
    const S beta = ad::softplus(p[g.shape_offset + i]) + GeneralizedNormalBase::kMinShape;
    const double b = ad::value(beta);
    const double a = 1.0 / b;
    const double gam = std::max(special::sample_gamma(a, rng), std::numeric_limits<double>::min());
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double y = std::pow(gam, a);
    // y = G^(1/beta): dy/dbeta = y (da/dbeta) (log G + a dG/da / G), da/dbeta = -1/beta^2.
    const double dy = y * (-1.0 / (b * b)) * (std::log(gam) + a * special::gamma_sample_dshape(a, gam) / gam);
    z[i] = attach<S>(beta, sign * y, sign * dy);
  }
  return z;
}

template double base_log_prob<double>(const BaseDistribution&, const ParamView<double>&, std::span<const double>);
template Var base_log_prob<Var>(const BaseDistribution&, const ParamView<Var>&, std::span<const Var>);
template std::vector<double> base_sample<double>(const BaseDistribution&, const ParamView<double>&, Rng&);
template std::vector<Var> base_sample<Var>(const BaseDistribution&, const ParamView<Var>&, Rng&);

}  // namespace tailflow::flows
