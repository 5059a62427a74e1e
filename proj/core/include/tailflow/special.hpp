#pragma once

#include "tailflow/rng.hpp"

namespace tailflow::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrtPi = 1.77245385090551602730;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
inline constexpr double kHalfLog2OverPi = -0.22579135264472743236;  // 0.5*log(2/pi)

/// Complementary error function. Throws std::domain_error for non-finite input.
/// Never returns exactly 0 for finite z: deep-tail values are floored at the
/// smallest subnormal.
double erfc(double z);

/// Scaled complementary error function exp(z^2) * erfc(z).
double erfcx(double z);

/// log(erfc(z)), accurate for large positive z where erfc underflows.
double log_erfc(double z);

/// Inverse of erfc on (0, 2). Throws std::domain_error outside.
double erfc_inv(double p);

/// Standard normal quantile, accurate to ~1e-15 relative in both tails.
double std_normal_quantile(double p);

/// log Phi(x) for the standard normal cdf.
double std_normal_log_cdf(double x);

double lgamma(double x);
double digamma(double x);

/// Regularized lower incomplete gamma function P(a, x).
double gamma_p(double a, double x);

/// Partial derivative of P(a, x) with respect to the shape a.
double gamma_p_dshape(double a, double x);

/// Gamma(shape, 1) draw (Marsaglia-Tsang squeeze, shape augmentation below 1).
double sample_gamma(double shape, Rng& rng);

/// Pathwise derivative d g / d shape of a Gamma(shape, 1) draw g, obtained by
/// implicit differentiation of the cdf: -(dP/dshape) / density.
double gamma_sample_dshape(double shape, double g);

struct StudentTDraw {
  double value = 0.0;
  double gamma = 0.0;    // Gamma(nu/2, 1) draw before clamping
  double normal = 0.0;   // N(0, 1) draw
  bool clamped = false;  // gamma fell below the clamp
  double dvalue_dnu = 0.0;
};

inline constexpr double kStudentTClamp = 1e-24;

/// Reparameterised Student-T draw z * sqrt(nu / (2 max(g, eps))).
StudentTDraw sample_student_t_draw(double nu, Rng& rng, double eps = kStudentTClamp);

inline double sample_student_t(double nu, Rng& rng, double eps = kStudentTClamp) {
  return sample_student_t_draw(nu, rng, eps).value;
}

/// log density of the standard Student-T with nu degrees of freedom.
double student_t_log_pdf(double x, double nu);

}  // namespace tailflow::special
