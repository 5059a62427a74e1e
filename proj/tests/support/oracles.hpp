#pragma once

// Reference computations for tests. Nothing here calls into the library's
// numerics: they use long double, the C library and brute force instead.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

inline constexpr long double kPiL = 3.141592653589793238462643383279502884L;

/// R(z) straight from the closed form, in long double. Only usable where
/// erfc does not underflow (|z| < ~100).
inline double ttf_forward(double z, double mu, double sigma, double lp, double ln) {
  const long double s = z >= 0 ? 1.0L : -1.0L;
  const long double lam = z >= 0 ? lp : ln;
  const long double e = std::erfc(std::fabs(static_cast<long double>(z)) / std::sqrt(2.0L));
  return static_cast<double>(mu + sigma * s / lam * (std::pow(e, -lam) - 1.0L));
}

/// Root of a monotone increasing f on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double target, double lo, double hi, int iters = 400) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Fourth-order central difference.
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-4) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double fa, double b, double fb, double m,
                      double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15;
  return simpson(f, a, fa, m, fm, lm, flm, left, tol / 2, depth - 1) +
         simpson(f, m, fm, b, fb, rm, frm, right, tol / 2, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                        int depth = 50) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  return detail::simpson(f, a, fa, b, fb, m, fm, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth);
}

/// Kolmogorov distance between a sample and a continuous cdf.
inline double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, std::fabs(F - i / n), std::fabs((i + 1) / n - F)});
  }
  return d;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Standard normal quantile by bisection on the C library erfc.
inline double normal_quantile(double p) { return bisect(normal_cdf, p, -40, 40); }

/// Mean log-spacing of the k largest values over the (k+1)-th largest.
inline double hill(std::vector<double> x, std::size_t k) {
  std::sort(x.begin(), x.end(), std::greater<>());
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(x[i]) - std::log(x[k]);
  return s / static_cast<double>(k);
}

/// GPD(shape, scale) draw by inversion.
template <class Gen>
double gpd_draw(double shape, double scale, Gen& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double v = 1.0 - u(g);
  return shape == 0 ? -scale * std::log(v) : scale * (std::pow(v, -shape) - 1) / shape;
}

inline double gpd_loglik(const std::vector<double>& e, double shape, double scale) {
  double s = 0;
  for (double x : e) {
    if (std::abs(shape) < 1e-12) {
      s += -std::log(scale) - x / scale;
      continue;
    }
    const double t = 1 + shape * x / scale;
    if (t <= 0) return -INFINITY;
    s += -std::log(scale) - (1 + 1 / shape) * std::log(t);
  }
  return s;
}

/// Correlation of sorted data with normal plotting positions.
inline double normal_qq_correlation(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = normal_quantile((i + 0.5) / n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double mq = std::accumulate(q.begin(), q.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (q[i] - mq);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (q[i] - mq) * (q[i] - mq);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double student_t_log_pdf(double x, double nu) {
  return std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * static_cast<double>(kPiL)) -
         (nu + 1) / 2 * std::log1p(x * x / nu);
}

/// Numerical Jacobian of f: R^n -> R^n, row-major.
inline std::vector<double> jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                    std::vector<double> x, double h = 1e-5) {
  const std::size_t n = x.size();
  std::vector<double> J(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double x0 = x[j];
    x[j] = x0 + h;
    const auto a = f(x);
    x[j] = x0 - h;
    const auto b = f(x);
    x[j] = x0;
    for (std::size_t i = 0; i < n; ++i) J[i * n + j] = (a[i] - b[i]) / (2 * h);
  }
  return J;
}

/// log|det A| by partial-pivot elimination.
inline double log_abs_det(std::vector<double> A, std::size_t n) {
  double s = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(A[r * n + c]) > std::fabs(A[p * n + c])) p = r;
    if (p != c)
      for (std::size_t k = 0; k < n; ++k) std::swap(A[c * n + k], A[p * n + k]);
    const double piv = A[c * n + c];
    s += std::log(std::fabs(piv));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r * n + c] / piv;
      for (std::size_t k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
    }
  }
  return s;
}

}  // namespace oracle
