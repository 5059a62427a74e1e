#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tailflow/matrix.hpp"

namespace tailflow::tailest {

/// Shape estimates below this are reported as light tailed.
inline constexpr double kLightTailThreshold = 0.02;

/// Hill estimator (1/k) sum_{i=1..k} [log x_(n-i+1) - log x_(n-k)] on data
/// sorted ascending. Requires 2 <= k < n and a strictly positive top-(k+1) window.
double hill_estimator(std::span<const double> sorted_ascending, std::size_t k);

struct DoubleBootstrapResult {
  double shape = 0.0;
  std::size_t k = 0;
  bool light_tailed = false;
  /// No interior minimum of the bootstrap MSE curve; k fell back to floor(n^0.6).
  bool fallback = false;
};

struct DoubleBootstrapOptions {
  std::size_t repetitions = 500;
  std::uint64_t seed = 0;
};

/// Danielsson et al. double bootstrap for the number of order statistics,
/// with subsample sizes n1 = floor(n^0.955), n2 = floor(n1^2 / n). Requires n >= 500
/// strictly positive samples (order does not matter).
DoubleBootstrapResult hill_double_bootstrap(std::span<const double> samples, const DoubleBootstrapOptions& opt = {});

struct GpdFit {
  double shape = 0.0;
  double scale = 1.0;
  double log_likelihood = 0.0;
};

class GpdFitError : public std::runtime_error {
 public:
  GpdFitError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  /// Profile log-likelihood values visited before the failure.
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// GPD log-likelihood of threshold excesses; -inf outside the support.
double gpd_log_likelihood(std::span<const double> excesses, double shape, double scale);

/// Maximum-likelihood GPD fit of positive excesses over shape in (-0.5, 10),
/// scale > 0, via a one-dimensional profile likelihood. Needs >= 10 values.
GpdFit gpd_fit_ml(std::span<const double> excesses);

/// Maximum-likelihood scale for a GPD with known shape > -1 (exactly the mean at shape 0).
GpdFit gpd_fit_scale(std::span<const double> excesses, double shape);

enum class Centering { median, mean };

struct TailEstimate {
  std::vector<double> shape;
  std::vector<std::size_t> k;
  std::vector<bool> light_tailed;
  std::vector<bool> fallback;
};

/// Per-column double-bootstrap estimate on |x - center|. Light-tailed columns
/// get the 1/1000 shape convention.
TailEstimate estimate_marginal_tails(const Matrix& data, const DoubleBootstrapOptions& opt = {},
                                     Centering centering = Centering::median);

}  // namespace tailflow::tailest
