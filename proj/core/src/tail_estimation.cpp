#include "tailflow/tail_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tailflow/rng.hpp"
#include "tailflow/tail_transform.hpp"

namespace tailflow::tailest {

double hill_estimator(std::span<const double> sorted_ascending, std::size_t k) {
  const std::size_t n = sorted_ascending.size();
  if (k < 2 || k >= n) throw std::domain_error("hill_estimator: need 2 <= k < n");
  const double base = sorted_ascending[n - k - 1];
  if (!(base > 0.0)) throw std::domain_error("hill_estimator: top order statistics must be positive");
  const double log_base = std::log(base);
  double s = 0.0;
  for (std::size_t i = n - k; i < n; ++i) s += std::log(sorted_ascending[i]) - log_base;
  return s / static_cast<double>(k);
}

namespace {

// For logs sorted descending, fills q[k] += (M_k - 2 gamma_k^2)^2 for k in [2, kmax].
void accumulate_bootstrap(const std::vector<double>& logs_desc, std::size_t kmax, std::vector<double>& q) {
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t k = 1; k <= kmax; ++k) {
    s1 += logs_desc[k - 1];
    s2 += logs_desc[k - 1] * logs_desc[k - 1];
    if (k < 2) continue;
    const double base = logs_desc[k];
    const double kk = static_cast<double>(k);
    const double gamma = s1 / kk - base;
    const double m = s2 / kk - 2.0 * base * s1 / kk + base * base;
    const double dev = m - 2.0 * gamma * gamma;
    q[k] += dev * dev;
  }
}

struct CurveMin {
  std::size_t k = 0;
  bool interior = false;
};

CurveMin bootstrap_curve(const std::vector<double>& logs, std::size_t m, std::size_t reps, Rng& rng) {
  const std::size_t kmax = m - 2;
  std::vector<double> q(kmax + 1, 0.0);
  std::vector<double> sample(m);
  for (std::size_t r = 0; r < reps; ++r) {
    for (auto& v : sample) v = logs[rng.index(logs.size())];
    std::sort(sample.begin(), sample.end(), std::greater<>());
    accumulate_bootstrap(sample, kmax, q);
  }
  CurveMin out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= kmax; ++k) {
    if (q[k] < best) {
      best = q[k];
      out.k = k;
    }
  }
  out.interior = out.k > 2 && out.k < kmax;
  return out;
}

}  // namespace

DoubleBootstrapResult hill_double_bootstrap(std::span<const double> samples, const DoubleBootstrapOptions& opt) {
  std::vector<double> positive;
  positive.reserve(samples.size());
  for (double v : samples) {
    if (!std::isfinite(v)) throw std::domain_error("hill_double_bootstrap: non-finite sample");
    if (v > 0.0) positive.push_back(v);
  }
  const std::size_t n = positive.size();
  if (n < 500) throw std::domain_error("hill_double_bootstrap: need at least 500 positive samples");
  std::sort(positive.begin(), positive.end());
  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) logs[i] = std::log(positive[i]);

  const double nd = static_cast<double>(n);
  const std::size_t n1 = static_cast<std::size_t>(std::floor(std::pow(nd, 0.955)));
  const std::size_t n2 = static_cast<std::size_t>(std::floor(static_cast<double>(n1) * static_cast<double>(n1) / nd));

  Rng rng(mix_seed(opt.seed, 0x68696c6cULL));
  const CurveMin c1 = bootstrap_curve(logs, n1, opt.repetitions, rng);
  const CurveMin c2 = bootstrap_curve(logs, n2, opt.repetitions, rng);

  DoubleBootstrapResult res;
  double kstar = 0.0;
  if (c1.interior && c2.interior) {
    const double k1 = static_cast<double>(c1.k);
    const double k2 = static_cast<double>(c2.k);
    const double ln1 = std::log(static_cast<double>(n1));
    const double lk1 = std::log(k1);
    kstar = k1 * k1 / k2 * std::pow(lk1 * lk1 / std::pow(2.0 * ln1 - lk1, 2.0), (ln1 - lk1) / ln1);
  }
  if (!(kstar >= 2.0) || !std::isfinite(kstar)) {
    res.fallback = true;
    kstar = std::floor(std::pow(nd, 0.6));
  }
  res.k = std::clamp<std::size_t>(static_cast<std::size_t>(kstar), 2, n - 1);
  res.shape = hill_estimator(positive, res.k);
  res.light_tailed = res.fallback || res.shape < kLightTailThreshold;
  return res;
}

double gpd_log_likelihood(std::span<const double> x, double shape, double scale) {
  if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  if (shape == 0.0) {
    for (double v : x) s += v;
    return -n * std::log(scale) - s / scale;
  }
  for (double v : x) {
    const double t = shape * v / scale;
    if (!(t > -1.0)) return -std::numeric_limits<double>::infinity();
    s += std::log1p(t);
  }
  return -n * std::log(scale) - (1.0 + 1.0 / shape) * s;
}

GpdFit gpd_fit_ml(std::span<const double> x) {
  if (x.size() < 10) throw GpdFitError("gpd_fit_ml: need at least 10 excesses", {});
  double xmax = 0.0;
  double xmin = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double v : x) {
    if (!(v > 0.0) || !std::isfinite(v)) throw GpdFitError("gpd_fit_ml: excesses must be positive and finite", {});
    xmax = std::max(xmax, v);
    xmin = std::min(xmin, v);
    mean += v;
  }
  mean /= static_cast<double>(x.size());
  if (xmax == xmin) throw GpdFitError("gpd_fit_ml: degenerate sample (all excesses equal)", {});

  const double n = static_cast<double>(x.size());
  constexpr double kShapeLo = -0.5;
  constexpr double kShapeHi = 10.0;
  std::vector<double> trace;

  // Profile over theta = shape / scale: shape(theta) = mean log(1 + theta x).
  struct Point {
    double theta;
    double shape;
    double ll;
  };
  auto eval = [&](double theta) -> Point {
    if (theta == 0.0) return {0.0, 0.0, -n * std::log(mean) - n};
    double s = 0.0;
    for (double v : x) {
      const double t = theta * v;
      if (!(t > -1.0)) return {theta, 0.0, -std::numeric_limits<double>::infinity()};
      s += std::log1p(t);
    }
    const double shape = s / n;
    if (!(shape > kShapeLo && shape < kShapeHi) || shape == 0.0)
      return {theta, shape, -std::numeric_limits<double>::infinity()};
    const double ll = -n * std::log(shape / theta) - n * (1.0 + shape);
    trace.push_back(ll);
    return {theta, shape, ll};
  };

  std::vector<Point> grid;
  for (double s = -14.0; s <= 14.0 + 1e-9; s += 0.1) {
    const double t = std::exp(s) / mean;
    grid.push_back(eval(t));
    if (t * xmax < 1.0) grid.push_back(eval(-t));
  }
  grid.push_back(eval(0.0));
  std::sort(grid.begin(), grid.end(), [](const Point& a, const Point& b) { return a.theta < b.theta; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i].ll > grid[best].ll) best = i;
  if (!std::isfinite(grid[best].ll)) throw GpdFitError("gpd_fit_ml: no finite likelihood on the profile grid", trace);

  // Golden-section refinement between the neighbours of the best grid point.
  double a = grid[best > 0 ? best - 1 : best].theta;
  double b = grid[best + 1 < grid.size() ? best + 1 : best].theta;
  Point top = grid[best];
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  Point pc = eval(c);
  Point pd = eval(d);
  for (int it = 0; it < 200 && std::abs(b - a) > 1e-14 * std::max(1.0, std::abs(top.theta)); ++it) {
    if (pc.ll >= pd.ll) {
      b = d;
      d = c;
      pd = pc;
      c = b - phi * (b - a);
      pc = eval(c);
    } else {
      a = c;
      c = d;
      pc = pd;
      d = a + phi * (b - a);
      pd = eval(d);
    }
  }
  for (const Point& p : {pc, pd})
    if (p.ll > top.ll) top = p;

  GpdFit fit;
  if (top.theta == 0.0) {
    fit.shape = 0.0;
    fit.scale = mean;
  } else {
    fit.shape = top.shape;
    fit.scale = top.shape / top.theta;
  }
  fit.log_likelihood = gpd_log_likelihood(x, fit.shape, fit.scale);
  if (!std::isfinite(fit.log_likelihood) || !(fit.scale > 0.0))
    throw GpdFitError("gpd_fit_ml: optimiser ended outside the parameter space", trace);
  return fit;
}

GpdFit gpd_fit_scale(std::span<const double> x, double shape) {
  if (x.empty()) throw GpdFitError("gpd_fit_scale: no excesses", {});
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  if (!(mean > 0.0)) throw GpdFitError("gpd_fit_scale: excesses must be positive", {});
  double scale = mean;
  if (shape != 0.0) {
    if (!(shape > -1.0)) throw GpdFitError("gpd_fit_scale: shape must exceed -1", {});
    // For shape > -1 the score is monotone in the scale; bisect on its sign.
    const double n = static_cast<double>(x.size());
    auto score = [&](double sigma) {
      double h = 0.0;
      for (double v : x) {
        const double t = v / sigma;
        h += t / (1.0 + shape * t);
      }
      return (1.0 + shape) * h - n;
    };
    double xmax = 0.0;
    for (double v : x) xmax = std::max(xmax, v);
    double lo = shape < 0.0 ? -shape * xmax * (1.0 + 1e-15) : mean * 1e-12;
    double hi = std::max(mean, xmax) * 4.0;
    while (score(hi) > 0.0) hi *= 2.0;
    while (shape >= 0.0 && score(lo) < 0.0) lo *= 0.5;
    for (int it = 0; it < 2000; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (score(mid) > 0.0 ? lo : hi) = mid;
    }
    scale = 0.5 * (lo + hi);
  }
  GpdFit fit{shape, scale, 0.0};
  fit.log_likelihood = gpd_log_likelihood(x, fit.shape, fit.scale);
  if (!std::isfinite(fit.log_likelihood)) throw GpdFitError("gpd_fit_scale: no finite likelihood", {});
  return fit;
}

TailEstimate estimate_marginal_tails(const Matrix& data, const DoubleBootstrapOptions& opt, Centering centering) {
  if (data.rows() < 500) throw std::domain_error("estimate_marginal_tails: need at least 500 observations");
  TailEstimate est;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    std::vector<double> col = data.column(j);
    double center = 0.0;
    if (centering == Centering::median) {
      std::vector<double> tmp = col;
      const std::size_t mid = tmp.size() / 2;
      std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
      center = tmp[mid];
      if (tmp.size() % 2 == 0) {
        const double lower = *std::max_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid));
        center = 0.5 * (center + lower);
      }
    } else {
      center = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    }
    for (auto& v : col) v = std::abs(v - center);
    DoubleBootstrapOptions o = opt;
    o.seed = mix_seed(opt.seed, j);
    const DoubleBootstrapResult r = hill_double_bootstrap(col, o);
    est.shape.push_back(r.light_tailed ? ttf::kLightTailShape : r.shape);
    est.k.push_back(r.k);
    est.light_tailed.push_back(r.light_tailed);
    est.fallback.push_back(r.fallback);
  }
  return est;
}

}  // namespace tailflow::tailest
