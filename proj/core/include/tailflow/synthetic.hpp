#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "tailflow/autodiff.hpp"
#include "tailflow/matrix.hpp"
#include "tailflow/rng.hpp"
#include "tailflow/training.hpp"

namespace tailflow::experiments {

/// X_1..X_{d-1} iid t_nu, X_d | X_{d-1} ~ N(X_{d-1}, 1).
struct SyntheticDeSpec {
  std::size_t d = 5;
  double nu = 2.0;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  double train_fraction = 0.4;
  double valid_fraction = 0.2;
  double test_fraction = 0.4;

  void validate() const;
};

struct Splits {
  Matrix train;
  Matrix valid;
  Matrix test;
};

Matrix sample_synthetic(std::size_t d, double nu, std::size_t n, Rng& rng);
Splits gen_synthetic_de(const SyntheticDeSpec& spec);

/// Exact log density of the synthetic model: sum_{i<d} log t_nu(x_i) + log N(x_d; x_{d-1}, 1).
template <class S>
S synthetic_log_density(std::span<const S> x, double nu) {
  const std::size_t d = x.size();
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * 3.14159265358979323846);
  S total = S(0.0);
  for (std::size_t i = 0; i + 1 < d; ++i) total = total + (c - 0.5 * (nu + 1.0) * ad::log1p(x[i] * x[i] / nu));
  const S r = x[d - 1] - x[d - 2];
  return total - 0.5 * r * r - 0.91893853320467274178;
}

/// The synthetic density as a VI target (normalized, so the ELBO is at most 0).
train::LogTarget synthetic_target(std::size_t d, double nu);

/// Per-column affine standardization.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  /// Mean and standard deviation estimated from the rows of a and b together.
  static Standardizer fit(const Matrix& a, const Matrix& b);
  void apply(Matrix& m) const;
  /// Add to a log density evaluated on standardized data to get the density
  /// on the original scale.
  double log_jacobian() const;
};

}  // namespace tailflow::experiments
