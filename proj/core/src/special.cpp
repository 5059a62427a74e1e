#include "tailflow/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tailflow::special {

namespace {

// Rational Chebyshev approximations from W. J. Cody, "Rational Chebyshev
// approximations for the error function", Math. Comp. 1969 (netlib specfun
// CALERF). Accurate to better than 1e-16 relative in each interval.
constexpr double kA[5] = {3.16112374387056560e00, 1.13864154151050156e02, 3.77485237685302021e02,
                          3.20937758913846947e03, 1.85777706184603153e-1};
constexpr double kB[4] = {2.36012909523441209e01, 2.44024637934444173e02, 1.28261652607737228e03,
                          2.84423683343917062e03};
constexpr double kC[9] = {5.64188496988670089e-1, 8.88314979438837594e00, 6.61191906371416295e01,
                          2.98635138197400131e02, 8.81952221241769090e02, 1.71204761263407058e03,
                          2.05107837782607147e03, 1.23033935479799725e03, 2.15311535474403846e-8};
constexpr double kD[8] = {1.57449261107098347e01, 1.17693950891312499e02, 5.37181101862009858e02,
                          1.62138957456669019e03, 3.29079923573345963e03, 4.36261909014324716e03,
                          3.43936767414372164e03, 1.23033935480374942e03};
constexpr double kP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1, 1.25781726111229246e-1,
                          1.60837851487422766e-2, 6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kQ[5] = {2.56852019228982242e00, 1.87295284992346047e00, 5.27905102951428412e-1,
                          6.05183413124413191e-2, 2.33520497626869185e-3};
constexpr double kInvSqrtPi = 5.6418958354775628695e-1;

void require_finite(double z, const char* fn) {
  if (!std::isfinite(z)) throw std::domain_error(std::string(fn) + ": non-finite argument");
}

// erf(y) for |y| <= 0.46875.
double erf_small(double y) {
  const double ysq = std::abs(y) > 1.11e-16 ? y * y : 0.0;
  double num = kA[4] * ysq;
  double den = ysq;
  for (int i = 0; i < 3; ++i) {
    num = (num + kA[i]) * ysq;
    den = (den + kB[i]) * ysq;
  }
  return y * (num + kA[3]) / (den + kB[3]);
}

// exp(y^2) * erfc(y) for y > 0.46875.
double erfcx_positive(double y) {
  if (y <= 4.0) {
    double num = kC[8] * y;
    double den = y;
    for (int i = 0; i < 7; ++i) {
      num = (num + kC[i]) * y;
      den = (den + kD[i]) * y;
    }
    return (num + kC[7]) / (den + kD[7]);
  }
  if (y >= 6.71e7) return kInvSqrtPi / y;
  const double ysq = 1.0 / (y * y);
  double num = kP[5] * ysq;
  double den = ysq;
  for (int i = 0; i < 4; ++i) {
    num = (num + kP[i]) * ysq;
    den = (den + kQ[i]) * ysq;
  }
  const double r = ysq * (num + kP[4]) / (den + kQ[4]);
  return (kInvSqrtPi - r) / y;
}

// exp(-y^2) split as exp(-ysq^2) exp(-del) to avoid losing digits in y*y.
double exp_neg_square(double y) {
  const double ysq = std::trunc(y * 16.0) / 16.0;
  const double del = (y - ysq) * (y + ysq);
  return std::exp(-ysq * ysq) * std::exp(-del);
}

double neg_square(double y) {
  const double ysq = std::trunc(y * 16.0) / 16.0;
  const double del = (y - ysq) * (y + ysq);
  return -ysq * ysq - del;
}

// Acklam's rational approximation to the normal quantile (rel. error ~1e-9).
double acklam_lower(double p) {
  constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                           1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                           6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                           -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                           3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double lgamma_positive(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double gamma_p_series(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  double ap = a;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - lgamma_positive(a));
}

// Upper regularized gamma by Lentz's continued fraction.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - lgamma_positive(a)) * h;
}

double gamma_log_pdf(double a, double g) { return (a - 1.0) * std::log(g) - g - lgamma_positive(a); }

}  // namespace

double erfcx(double z) {
  require_finite(z, "erfcx");
  const double y = std::abs(z);
  double r;
  if (y <= 0.46875) {
    r = std::exp(y * y) * (1.0 - erf_small(z));
    return r;
  }
  r = erfcx_positive(y);
  if (z < 0.0) {
    if (z < -26.628) return std::numeric_limits<double>::infinity();
    const double e = 1.0 / exp_neg_square(y);
    r = (e + e) - r;
  }
  return r;
}

double erfc(double z) {
  require_finite(z, "erfc");
  const double y = std::abs(z);
  if (y <= 0.46875) return 1.0 - erf_small(z);
  double r;
  if (y < 26.0) {
    r = exp_neg_square(y) * erfcx_positive(y);
  } else {
    r = std::exp(neg_square(y) + std::log(erfcx_positive(y)));
    if (r < std::numeric_limits<double>::denorm_min()) r = std::numeric_limits<double>::denorm_min();
  }
  return z < 0.0 ? 2.0 - r : r;
}

double log_erfc(double z) {
  require_finite(z, "log_erfc");
  if (z <= 0.46875) return std::log(erfc(z));
  return neg_square(z) + std::log(erfcx_positive(z));
}

double std_normal_log_cdf(double x) {
  require_finite(x, "std_normal_log_cdf");
  if (x < 0.0) return log_erfc(-x / kSqrt2) - 0.6931471805599453094;
  return std::log1p(-0.5 * erfc(x / kSqrt2));
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
  if (p > 0.5) return -std_normal_quantile(1.0 - p);
  double x = acklam_lower(p);
  // One Newton step on log Phi(x) = log p. Working in log space keeps the step
  // well conditioned down to subnormal p, where Phi and phi both underflow.
  const double log_p = std::log(p);
  const double log_cdf = std_normal_log_cdf(x);
  const double log_pdf = -0.5 * x * x - kLogSqrt2Pi;
  const double slope = std::exp(log_pdf - log_cdf);
  x -= (log_cdf - log_p) / slope;
  return x;
}

double erfc_inv(double p) {
  if (!(p > 0.0 && p < 2.0)) throw std::domain_error("erfc_inv: p must lie in (0, 2)");
  if (p == 1.0) return 0.0;
  return -std_normal_quantile(0.5 * p) / kSqrt2;
}

double lgamma(double x) { return lgamma_positive(x); }

double digamma(double x) {
  if (!std::isfinite(x)) throw std::domain_error("digamma: non-finite argument");
  if (x <= 0.0 && x == std::floor(x)) return std::numeric_limits<double>::quiet_NaN();
  double result = 0.0;
  if (x < 0.0) {
    // Reflection: psi(1 - x) - psi(x) = pi cot(pi x).
    result -= kPi / std::tan(kPi * x);
    x = 1.0 - x;
  }
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  const double tail =
      f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
  return result + std::log(x) - 0.5 / x - tail;
}

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("gamma_p: shape must be positive");
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_p_dshape(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("gamma_p_dshape: shape must be positive");
  if (x <= 0.0) return 0.0;
  const double log_t0 = a * std::log(x) - x - lgamma_positive(a + 1.0);
  if (log_t0 < -700.0 || x > a + 4000.0) {
    // Series start underflows or needs too many terms; the derivative is
    // negligible there anyway, so a central difference is adequate.
    const double h = 1e-5 * std::max(1.0, a);
    return (gamma_p(a + h, x) - gamma_p(a - std::min(h, 0.5 * a), x)) / (h + std::min(h, 0.5 * a));
  }
  // P(a, x) = sum_n t_n, t_n = x^(a+n) e^-x / Gamma(a+n+1); differentiate termwise.
  const double log_x = std::log(x);
  double t = std::exp(log_t0);
  double psi = digamma(a + 1.0);
  double sum = t * (log_x - psi);
  double sum_t = t;
  for (int n = 1; n < 200000; ++n) {
    psi += 1.0 / (a + n);
    t *= x / (a + n);
    const double term = t * (log_x - psi);
    sum += term;
    sum_t += t;
    if (n > x - a && t < 1e-18 * sum_t) break;
  }
  return sum;
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw std::domain_error("sample_gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double g = sample_gamma(shape + 1.0, rng);
    const double log_g = std::log(g) + std::log(rng.uniform()) / shape;
    const double r = std::exp(log_g);
    return r > 0.0 ? r : std::numeric_limits<double>::denorm_min();
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double gamma_sample_dshape(double shape, double g) {
  if (!(shape > 0.0)) throw std::domain_error("gamma_sample_dshape: shape must be positive");
  if (!(g > 0.0)) return 0.0;
  if (shape > 2000.0) {
    // Wilson-Hilferty: g = a (1 - 1/(9a) + xi / sqrt(9a))^3 with xi held fixed.
    const double a = shape;
    const double s = std::sqrt(9.0 * a);
    const double cube = std::cbrt(g / a);
    const double xi = (cube - 1.0 + 1.0 / (9.0 * a)) * s;
    const double base = 1.0 - 1.0 / (9.0 * a) + xi / s;
    const double dbase = 1.0 / (9.0 * a * a) - 0.5 * xi / (s * a);
    return base * base * base + 3.0 * a * base * base * dbase;
  }
  const double dp = gamma_p_dshape(shape, g);
  return -dp / std::exp(gamma_log_pdf(shape, g));
}

StudentTDraw sample_student_t_draw(double nu, Rng& rng, double eps) {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw std::domain_error("sample_student_t: nu must be positive");
  if (eps < 0.0) throw std::domain_error("sample_student_t: clamp must be non-negative");
  StudentTDraw draw;
  draw.gamma = sample_gamma(0.5 * nu, rng);
  draw.normal = rng.normal();
  draw.clamped = draw.gamma < eps;
  const double g = draw.clamped ? eps : draw.gamma;
  draw.value = draw.normal * std::sqrt(nu / (2.0 * g));
  // d value / d nu = value * (1/(2 nu) - (dg/dnu) / (2 g)), dg/dnu = 0.5 dg/dshape.
  const double half_inv_nu = 0.5 / nu;
  if (draw.clamped) {
    draw.dvalue_dnu = draw.value * half_inv_nu;
  } else {
    const double dg = 0.5 * gamma_sample_dshape(0.5 * nu, draw.gamma);
    draw.dvalue_dnu = draw.value * (half_inv_nu - 0.5 * dg / g);
  }
  return draw;
}

double student_t_log_pdf(double x, double nu) {
  if (!(nu > 0.0)) throw std::domain_error("student_t_log_pdf: nu must be positive");
  return lgamma_positive(0.5 * (nu + 1.0)) - lgamma_positive(0.5 * nu) - 0.5 * std::log(nu * kPi) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

}  // namespace tailflow::special
