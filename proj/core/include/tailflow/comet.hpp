#pragma once

// Marginals for the COMET baseline: a Gaussian kernel density estimate for the
// body between the 5% and 95% empirical quantiles, generalized Pareto tails
// outside. The cdf is continuous with exactly `tail_mass` in each tail.

#include <optional>
#include <span>
#include <vector>

namespace tailflow::comet {

struct GpdTail {
  double threshold = 0.0;
  double shape = 0.0;
  double scale = 1.0;
  /// The ML fit failed and an exponential tail (shape 0) was used instead.
  bool fallback = false;
};

class CometMarginal {
 public:
  CometMarginal() = default;
  CometMarginal(std::vector<double> body, double bandwidth, double tail_mass, GpdTail lower, GpdTail upper);

  /// Needs at least 100 samples. With `fixed_shape` only the tail scales are
  /// fitted (two-stage use with known or pre-estimated tail shapes).
  static CometMarginal fit(std::span<const double> samples, double tail_mass = 0.05,
                           std::optional<double> fixed_shape = std::nullopt);

  double cdf(double x) const;
  double log_cdf(double x) const;
  double log_survival(double x) const;
  double log_pdf(double x) const;
  /// Quantile for u in (0, 1).
  double inv_cdf(double u) const;

  /// log F(x) - log(1 - F(x)), accurate in both tails.
  double logit_cdf(double x) const;
  /// Inverse of logit_cdf.
  double inv_logit_cdf(double v) const;

  const std::vector<double>& body() const noexcept { return body_; }
  double bandwidth() const noexcept { return bandwidth_; }
  double tail_mass() const noexcept { return tail_mass_; }
  const GpdTail& lower() const noexcept { return lower_; }
  const GpdTail& upper() const noexcept { return upper_; }
  bool fallback() const noexcept { return lower_.fallback || upper_.fallback; }

 private:
  double kde_cdf(double x) const;
  double kde_pdf(double x) const;
  // Body quantile for a cdf value inside (tail_mass, 1 - tail_mass).
  double body_quantile(double u) const;

  std::vector<double> body_;  // sorted
  double bandwidth_ = 1.0;
  double tail_mass_ = 0.05;
  GpdTail lower_;
  GpdTail upper_;
  double kde_lo_ = 0.0;  // kde cdf at the lower threshold
  double kde_span_ = 1.0;
};

/// sigma * Q_GPD(logistic(z); lambda), evaluated without forming 1 - logistic(z).
double logistic_gpd(double z, double lambda, double sigma = 1.0);

}  // namespace tailflow::comet
