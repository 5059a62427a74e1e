#pragma once

// Tail transform R(z) = mu + sigma * (s / lambda_s) * [erfc(|z|/sqrt2)^(-lambda_s) - 1],
// s = sign(z), lambda_s = lambda_pos for z >= 0 and lambda_neg otherwise.
//
// Standard normal tails are mapped to generalized Pareto tails with shape
// lambda_s. All powers of erfc are evaluated as exp(-lambda * log erfc), so
// inputs far in the tail (|z| up to ~37) stay finite.

#include <cmath>
#include <span>
#include <type_traits>
#include <vector>

#include "tailflow/autodiff.hpp"

namespace tailflow::ttf {

/// Light-tailed dimensions use this fixed shape instead of an identity bypass.
inline constexpr double kLightTailShape = 1.0 / 1000.0;

/// The stable inverse switches to the asymptotic branch below this value of
/// y^(-1/lambda).
inline constexpr double kInverseBranchThreshold = 1e-6;

/// Exponent cap for exp(-lambda log erfc); larger values saturate.
inline constexpr double kMaxExponent = 700.0;

struct TailParams {
  double mu = 0.0;
  double sigma = 1.0;
  double lambda_pos = 1.0;
  double lambda_neg = 1.0;

  /// Throws std::invalid_argument unless sigma, lambda_pos, lambda_neg > 0.
  void validate() const;
  double lambda_for(double sign) const { return sign >= 0.0 ? lambda_pos : lambda_neg; }
};

template <class S>
struct TailParamsT {
  S mu;
  S sigma;
  S lambda_pos;
  S lambda_neg;
};

inline TailParamsT<double> as_scalar(const TailParams& p) { return {p.mu, p.sigma, p.lambda_pos, p.lambda_neg}; }

// ---------------------------------------------------------------------------
// Templated kernels (S = double or ad::Var).

/// R(z). Sets *saturated when the exponent had to be capped.
template <class S>
S forward(const S& z, const TailParamsT<S>& p, bool* saturated = nullptr) {
  const double s = ad::value(z) >= 0.0 ? 1.0 : -1.0;
  const S& lambda = s > 0.0 ? p.lambda_pos : p.lambda_neg;
  const S log_tail = ad::log_erfc(s * z * (1.0 / special::kSqrt2));
  S exponent = -lambda * log_tail;
  if (ad::value(exponent) > kMaxExponent) {
    if (saturated) *saturated = true;
    exponent = S(kMaxExponent);
  }
  return p.mu + p.sigma * s * ad::expm1(exponent) / lambda;
}

/// log dR/dz = log sigma + 0.5 log(2/pi) - z^2/2 - (lambda_s + 1) log erfc(|z|/sqrt2).
template <class S>
S log_deriv(const S& z, const TailParamsT<S>& p) {
  const double s = ad::value(z) >= 0.0 ? 1.0 : -1.0;
  const S& lambda = s > 0.0 ? p.lambda_pos : p.lambda_neg;
  const S log_tail = ad::log_erfc(s * z * (1.0 / special::kSqrt2));
  return ad::log(p.sigma) + special::kHalfLog2OverPi - 0.5 * z * z - (lambda + 1.0) * log_tail;
}

/// R_alt(z) = mu + sigma (s/lambda_s) [{erfc(|z|/sqrt2)/2}^(-lambda_s) - 1].
/// Discontinuous at z = 0 unless lambda_pos = lambda_neg = 0 in the limit.
template <class S>
S alt_forward(const S& z, const TailParamsT<S>& p) {
  const double s = ad::value(z) >= 0.0 ? 1.0 : -1.0;
  const S& lambda = s > 0.0 ? p.lambda_pos : p.lambda_neg;
  const S log_tail = ad::log_erfc(s * z * (1.0 / special::kSqrt2)) - 0.69314718055994530942;
  return p.mu + p.sigma * s * ad::expm1(-lambda * log_tail) / lambda;
}

// ---------------------------------------------------------------------------
// Inverse. The value is computed in double precision; for ad::Var the result
// is attached to the tape through the implicit function theorem.

/// z = R^-1(x) for double parameters.
double inverse(double x, const TailParams& p);
/// The asymptotic branch z ~ s [eta - log eta]^(1/2), eta = (2/lambda) log y + log(2/pi),
/// without refinement. Exposed for diagnostics and tests.
double inverse_asymptotic(double x, const TailParams& p);
/// The direct branch s sqrt2 erfc_inv(y^(-1/lambda)) regardless of threshold.
double inverse_direct(double x, const TailParams& p);

/// Partials of R(z; mu, sigma, lambda_s) with respect to (mu, sigma, lambda_s) at fixed z.
struct ForwardPartials {
  double d_mu;
  double d_sigma;
  double d_lambda;
  double d_z;
};
ForwardPartials forward_partials(double z, const TailParams& p);

template <class S>
S inverse(const S& x, const TailParamsT<S>& p) {
  if constexpr (std::is_same_v<S, double>) {
    return inverse(x, TailParams{p.mu, p.sigma, p.lambda_pos, p.lambda_neg});
  } else {
    const TailParams pv{p.mu.value, p.sigma.value, p.lambda_pos.value, p.lambda_neg.value};
    const double z = inverse(x.value, pv);
    const ForwardPartials d = forward_partials(z, pv);
    // R(z(x, theta), theta) = x  =>  dz/dx = 1/R_z, dz/dtheta = -R_theta / R_z.
    const double inv = 1.0 / d.d_z;
    const bool upper = z >= 0.0;
    const S& lambda = upper ? p.lambda_pos : p.lambda_neg;
    const ad::Var parents[4] = {x, p.mu, p.sigma, lambda};
    const double partials[4] = {inv, -d.d_mu * inv, -d.d_sigma * inv, -d.d_lambda * inv};
    ad::Tape* tape = x.tape ? x.tape : (p.mu.tape ? p.mu.tape : (p.sigma.tape ? p.sigma.tape : lambda.tape));
    if (!tape) return S(z);
    return tape->node(z, parents, partials);
  }
}

/// log dR^-1/dx = -log_deriv(R^-1(x)).
template <class S>
S inverse_log_deriv(const S& x, const TailParamsT<S>& p) {
  return -log_deriv(inverse(x, p), p);
}

// ---------------------------------------------------------------------------
// Building blocks.

/// GPD quantile (1/lambda)[(1-u)^(-lambda) - 1]. Throws for u outside [0, 1).
double gpd_quantile(double u, double lambda);
/// (s/lambda_s)[(1-|u|)^(-lambda_s) - 1]. Throws for |u| >= 1.
double two_tailed_quantile(double u, double lambda_pos, double lambda_neg);

// Double-precision conveniences.
inline double forward(double z, const TailParams& p) { return forward<double>(z, as_scalar(p)); }
inline double log_deriv(double z, const TailParams& p) { return log_deriv<double>(z, as_scalar(p)); }
inline double inverse_log_deriv(double x, const TailParams& p) { return -log_deriv(inverse(x, p), p); }
double alt_forward(double z, const TailParams& p);

/// Elementwise tail transform over d marginals, each with its own parameters.
class MarginalTailLayer {
 public:
  MarginalTailLayer() = default;
  explicit MarginalTailLayer(std::vector<TailParams> params, std::vector<bool> frozen = {});

  /// d marginals with (mu, sigma, lambda) = (0, 1, lambda).
  static MarginalTailLayer uniform(std::size_t d, double lambda);

  std::size_t dim() const noexcept { return params_.size(); }
  const std::vector<TailParams>& params() const noexcept { return params_; }
  const std::vector<bool>& frozen() const noexcept { return frozen_; }

  struct Result {
    std::vector<double> values;
    double log_det = 0.0;
  };

  /// z -> x with log|det dx/dz|.
  Result forward(std::span<const double> z) const;
  /// x -> z with log|det dz/dx|.
  Result inverse(std::span<const double> x) const;
  double log_det(std::span<const double> z) const;

 private:
  void check_dim(std::size_t n) const;

  std::vector<TailParams> params_;
  std::vector<bool> frozen_;
};

}  // namespace tailflow::ttf
