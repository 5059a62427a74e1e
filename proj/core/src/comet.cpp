#include "tailflow/comet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tailflow/autodiff.hpp"
#include "tailflow/special.hpp"
#include "tailflow/tail_estimation.hpp"

namespace tailflow::comet {

namespace {

// Kernel contributions beyond this many bandwidths are exactly 0 or 1 in double.
constexpr double kKernelReach = 9.0;

double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = (static_cast<double>(s.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double gpd_log_survival(const GpdTail& t, double e) {
  if (t.shape == 0.0) return -e / t.scale;
  return -std::log1p(t.shape * e / t.scale) / t.shape;
}

double gpd_log_density(const GpdTail& t, double e) {
  if (t.shape == 0.0) return -std::log(t.scale) - e / t.scale;
  return -std::log(t.scale) - (1.0 + 1.0 / t.shape) * std::log1p(t.shape * e / t.scale);
}

// Excess with the given log survival probability.
double gpd_excess(const GpdTail& t, double log_s) {
  if (t.shape == 0.0) return -t.scale * log_s;
  return t.scale * std::expm1(-t.shape * log_s) / t.shape;
}

GpdTail fit_tail(double threshold, const std::vector<double>& excess, std::optional<double> fixed_shape) {
  GpdTail t;
  t.threshold = threshold;
  try {
    const tailest::GpdFit f = fixed_shape ? tailest::gpd_fit_scale(excess, *fixed_shape) : tailest::gpd_fit_ml(excess);
    t.shape = f.shape;
    t.scale = f.scale;
    // A negative shape bounds the support; keep every data point representable.
    if (t.shape < 0.0) {
      t.shape = 0.0;
      t.scale = tailest::gpd_fit_scale(excess, 0.0).scale;
    }
  } catch (const tailest::GpdFitError&) {
    double mean = 0.0;
    for (double e : excess) mean += e;
    mean = excess.empty() ? 0.0 : mean / static_cast<double>(excess.size());
    t.shape = 0.0;
    t.scale = mean > 0.0 ? mean : 1.0;
    t.fallback = true;
  }
  return t;
}

}  // namespace

CometMarginal::CometMarginal(std::vector<double> body, double bandwidth, double tail_mass, GpdTail lower,
                             GpdTail upper)
    : body_(std::move(body)), bandwidth_(bandwidth), tail_mass_(tail_mass), lower_(lower), upper_(upper) {
  if (body_.empty()) throw std::invalid_argument("CometMarginal: empty body");
  if (!(bandwidth_ > 0.0)) throw std::invalid_argument("CometMarginal: bandwidth must be positive");
  if (!(tail_mass_ > 0.0 && tail_mass_ < 0.5)) throw std::invalid_argument("CometMarginal: tail mass must be in (0, 0.5)");
  if (!(lower_.threshold < upper_.threshold)) throw std::invalid_argument("CometMarginal: thresholds out of order");
  if (!(lower_.scale > 0.0 && upper_.scale > 0.0)) throw std::invalid_argument("CometMarginal: tail scales must be positive");
  std::sort(body_.begin(), body_.end());
  kde_lo_ = kde_cdf(lower_.threshold);
  kde_span_ = kde_cdf(upper_.threshold) - kde_lo_;
  if (!(kde_span_ > 0.0)) throw std::invalid_argument("CometMarginal: kernel estimate has no mass on the body");
}

CometMarginal CometMarginal::fit(std::span<const double> samples, double tail_mass, std::optional<double> fixed_shape) {
  if (samples.size() < 100) throw std::invalid_argument("CometMarginal::fit: need at least 100 samples");
  std::vector<double> s(samples.begin(), samples.end());
  for (double v : s)
    if (!std::isfinite(v)) throw std::invalid_argument("CometMarginal::fit: non-finite sample");
  std::sort(s.begin(), s.end());
  const double lo = quantile_sorted(s, tail_mass);
  const double hi = quantile_sorted(s, 1.0 - tail_mass);
  if (!(lo < hi)) throw std::invalid_argument("CometMarginal::fit: degenerate sample");

  std::vector<double> body, lower_excess, upper_excess;
  for (double v : s) {
    if (v < lo) lower_excess.push_back(lo - v);
    else if (v > hi) upper_excess.push_back(v - hi);
    else body.push_back(v);
  }

  // Silverman's rule on the body subsample.
  double mean = 0.0;
  for (double v : body) mean += v;
  mean /= static_cast<double>(body.size());
  double var = 0.0;
  for (double v : body) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(body.size() > 1 ? body.size() - 1 : 1));
  const double iqr = quantile_sorted(body, 0.75) - quantile_sorted(body, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : (hi - lo);
  const double bw = 0.9 * spread * std::pow(static_cast<double>(body.size()), -0.2);

  return CometMarginal(std::move(body), bw, tail_mass, fit_tail(lo, lower_excess, fixed_shape),
                       fit_tail(hi, upper_excess, fixed_shape));
}

double CometMarginal::kde_cdf(double x) const {
  const double reach = kKernelReach * bandwidth_;
  const auto first = std::lower_bound(body_.begin(), body_.end(), x - reach);
  const auto last = std::upper_bound(first, body_.end(), x + reach);
  double s = static_cast<double>(first - body_.begin());
  for (auto it = first; it != last; ++it) s += 0.5 * special::erfc(-(x - *it) / (bandwidth_ * special::kSqrt2));
  return s / static_cast<double>(body_.size());
}

double CometMarginal::kde_pdf(double x) const {
  const double reach = kKernelReach * bandwidth_;
  const auto first = std::lower_bound(body_.begin(), body_.end(), x - reach);
  const auto last = std::upper_bound(first, body_.end(), x + reach);
  double s = 0.0;
  for (auto it = first; it != last; ++it) {
    const double t = (x - *it) / bandwidth_;
    s += std::exp(-0.5 * t * t);
  }
  return s / (static_cast<double>(body_.size()) * bandwidth_) * (1.0 / std::sqrt(2.0 * special::kPi));
}

double CometMarginal::cdf(double x) const { return std::exp(log_cdf(x)); }

double CometMarginal::log_cdf(double x) const {
  if (x < lower_.threshold) return std::log(tail_mass_) + gpd_log_survival(lower_, lower_.threshold - x);
  if (x > upper_.threshold) return std::log1p(-std::exp(log_survival(x)));
  return std::log(tail_mass_ + (1.0 - 2.0 * tail_mass_) * (kde_cdf(x) - kde_lo_) / kde_span_);
}

double CometMarginal::log_survival(double x) const {
  if (x > upper_.threshold) return std::log(tail_mass_) + gpd_log_survival(upper_, x - upper_.threshold);
  if (x < lower_.threshold) return std::log1p(-std::exp(log_cdf(x)));
  return std::log(tail_mass_ + (1.0 - 2.0 * tail_mass_) * (kde_lo_ + kde_span_ - kde_cdf(x)) / kde_span_);
}

double CometMarginal::log_pdf(double x) const {
  if (x < lower_.threshold) return std::log(tail_mass_) + gpd_log_density(lower_, lower_.threshold - x);
  if (x > upper_.threshold) return std::log(tail_mass_) + gpd_log_density(upper_, x - upper_.threshold);
  return std::log((1.0 - 2.0 * tail_mass_) * kde_pdf(x) / kde_span_);
}

double CometMarginal::logit_cdf(double x) const { return log_cdf(x) - log_survival(x); }

double CometMarginal::body_quantile(double u) const {
  const double target = kde_lo_ + kde_span_ * (u - tail_mass_) / (1.0 - 2.0 * tail_mass_);
  double a = lower_.threshold;
  double b = upper_.threshold;
  double x = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const double f = kde_cdf(x) - target;
    if (f > 0.0) b = x;
    else a = x;
    const double slope = kde_pdf(x);
    double next = slope > 0.0 ? x - f / slope : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - x) <= 1e-14 * std::max(1.0, std::abs(x)) || b - a <= 1e-14 * std::max(1.0, std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

double CometMarginal::inv_logit_cdf(double v) const {
  const double log_u = -ad::softplus(-v);
  const double log_1mu = -ad::softplus(v);
  const double log_m = std::log(tail_mass_);
  if (log_u < log_m) return lower_.threshold - gpd_excess(lower_, log_u - log_m);
  if (log_1mu < log_m) return upper_.threshold + gpd_excess(upper_, log_1mu - log_m);
  return body_quantile(ad::sigmoid(v));
}

double CometMarginal::inv_cdf(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("CometMarginal::inv_cdf: u must lie in (0, 1)");
  return inv_logit_cdf(std::log(u) - std::log1p(-u));
}

double logistic_gpd(double z, double lambda, double sigma) {
  if (!(lambda > 0.0)) throw std::domain_error("logistic_gpd: lambda must be positive");
  // -log(1 - logistic(z)) = softplus(z)
  return sigma * std::expm1(lambda * ad::softplus(z)) / lambda;
}

}  // namespace tailflow::comet
