#pragma once

// Invertible layers. Every layer maps in two directions:
//   forward: base side -> data side (generative), log|det dx/dz|
//   inverse: data side -> base side (density),    log|det dz/dx|
// Both are templates over the scalar type (double or ad::Var) and are
// instantiated for those two types only.

#include <span>
#include <string>
#include <vector>

#include "tailflow/comet.hpp"
#include "tailflow/flows/conditioner.hpp"
#include "tailflow/flows/params.hpp"
#include "tailflow/tail_transform.hpp"

namespace tailflow::flows {

template <class S>
struct LayerResult {
  std::vector<S> values;
  S log_det = S(0.0);
};

struct SplineConfig {
  std::size_t bins = 5;
  double bound = 2.5;
  double min_width = 1e-3;
  double min_height = 1e-3;
  double min_derivative = 1e-3;

  /// Raw parameters per dimension: bins widths, bins heights, bins-1 interior derivatives.
  std::size_t raw_size() const { return 3 * bins - 1; }
};

template <class S>
struct SplineResult {
  S value;
  S log_det;
};

/// Monotone rational-quadratic spline on [-bound, bound] with identity tails.
/// `inverse = false` evaluates the spline, `true` its inverse; log_det is
/// log|d out / d in| in either case and is exactly 0 outside the box.
template <class S>
SplineResult<S> rqs_spline(const S& x, std::span<const S> raw, const SplineConfig& cfg, bool inverse);

/// Raw derivative value that makes the softplus parameterization return exactly 1.
double spline_identity_derivative(const SplineConfig& cfg);

/// Autoregressive rational-quadratic spline. The density direction evaluates
/// the spline in a single pass; generation inverts it dimension by dimension.
class RqsLayer {
 public:
  RqsLayer() = default;
  RqsLayer(std::size_t dim, std::size_t hidden, Activation act, const SplineConfig& cfg, ParamSet& params, Rng& rng,
           const std::string& name);

  std::size_t dim() const noexcept { return conditioner_.dim(); }
  const SplineConfig& config() const noexcept { return cfg_; }
  const MaskedConditioner& conditioner() const noexcept { return conditioner_; }

  template <class S>
  LayerResult<S> forward(const ParamView<S>& p, std::span<const S> z) const;
  template <class S>
  LayerResult<S> inverse(const ParamView<S>& p, std::span<const S> x) const;

 private:
  SplineConfig cfg_;
  MaskedConditioner conditioner_;
};

/// x_i = shift_i(x_<i) + scale_i(x_<i) z_i with scale = softplus(raw + c) + 1e-3,
/// c chosen so that zero raw output gives unit scale.
class AffineArLayer {
 public:
  static constexpr double kMinScale = 1e-3;

  AffineArLayer() = default;
  AffineArLayer(std::size_t dim, std::size_t hidden, Activation act, ParamSet& params, Rng& rng,
                const std::string& name);

  std::size_t dim() const noexcept { return conditioner_.dim(); }
  const MaskedConditioner& conditioner() const noexcept { return conditioner_; }

  template <class S>
  LayerResult<S> forward(const ParamView<S>& p, std::span<const S> z) const;
  template <class S>
  LayerResult<S> inverse(const ParamView<S>& p, std::span<const S> x) const;

 private:
  MaskedConditioner conditioner_;
};

/// x = P L U z with L unit lower triangular and U upper triangular with
/// diagonal softplus(raw) + 1e-3. Starts at the identity.
class LuLinearLayer {
 public:
  static constexpr double kMinDiagonal = 1e-3;

  LuLinearLayer() = default;
  LuLinearLayer(std::size_t dim, ParamSet& params, const std::string& name, std::vector<std::size_t> permutation = {});

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }

  template <class S>
  LayerResult<S> forward(const ParamView<S>& p, std::span<const S> z) const;
  template <class S>
  LayerResult<S> inverse(const ParamView<S>& p, std::span<const S> x) const;

  /// Dense P L U for the current parameter values (row-major).
  std::vector<double> dense(const ParamView<double>& p) const;

  std::size_t lower_offset() const noexcept { return lower_; }
  std::size_t upper_offset() const noexcept { return upper_; }
  std::size_t diag_offset() const noexcept { return diag_; }

 private:
  std::size_t dim_ = 0;
  std::size_t lower_ = 0;  // strictly lower, row-major packed
  std::size_t upper_ = 0;  // strictly upper, row-major packed
  std::size_t diag_ = 0;
  std::vector<std::size_t> perm_;
};

/// Elementwise tail transform with trainable (mu, sigma, lambda_pos, lambda_neg).
/// sigma and lambda are stored as softplus pre-parameters.
class TailLayer {
 public:
  TailLayer() = default;
  /// `lambdas` gives the initial shape per dimension (both tails); `freeze_lambda`
  /// keeps them fixed during training.
  TailLayer(std::size_t dim, std::span<const double> lambdas, bool freeze_lambda, ParamSet& params,
            const std::string& name);

  std::size_t dim() const noexcept { return dim_; }
  bool lambda_frozen() const noexcept { return frozen_; }

  template <class S>
  ttf::TailParamsT<S> params_for(const ParamView<S>& p, std::size_t i) const;
  std::vector<ttf::TailParams> tail_params(const ParamView<double>& p) const;

  template <class S>
  LayerResult<S> forward(const ParamView<S>& p, std::span<const S> z) const;
  template <class S>
  LayerResult<S> inverse(const ParamView<S>& p, std::span<const S> x) const;

  std::size_t mu_offset() const noexcept { return mu_; }
  std::size_t sigma_offset() const noexcept { return sigma_; }
  std::size_t lambda_pos_offset() const noexcept { return lambda_pos_; }
  std::size_t lambda_neg_offset() const noexcept { return lambda_neg_; }

 private:
  std::size_t dim_ = 0;
  bool frozen_ = false;
  std::size_t mu_ = 0;
  std::size_t sigma_ = 0;
  std::size_t lambda_pos_ = 0;
  std::size_t lambda_neg_ = 0;
};

/// Elementwise logistic followed by fitted marginal quantile functions. Has no
/// trainable parameters. Its log-det is treated as constant in the inputs: the
/// layer only ever sees data (density direction) or detached samples.
class CometLayer {
 public:
  CometLayer() = default;
  explicit CometLayer(std::vector<comet::CometMarginal> marginals) : marginals_(std::move(marginals)) {}

  std::size_t dim() const noexcept { return marginals_.size(); }
  const std::vector<comet::CometMarginal>& marginals() const noexcept { return marginals_; }

  template <class S>
  LayerResult<S> forward(const ParamView<S>& p, std::span<const S> z) const;
  template <class S>
  LayerResult<S> inverse(const ParamView<S>& p, std::span<const S> x) const;

 private:
  std::vector<comet::CometMarginal> marginals_;
};

}  // namespace tailflow::flows
