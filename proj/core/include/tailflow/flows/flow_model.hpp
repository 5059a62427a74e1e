#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tailflow/flows/base_distribution.hpp"
#include "tailflow/flows/layers.hpp"

namespace tailflow::flows {

using Layer = std::variant<RqsLayer, AffineArLayer, LuLinearLayer, TailLayer, CometLayer>;

struct ArchitectureOptions {
  /// Insert an LU linear layer right before the tail (or COMET) layer.
  bool lu_layer = false;
  /// Hidden width of the masked conditioners; 0 means d + 10.
  std::size_t hidden = 0;
  Activation activation = Activation::relu;
  SplineConfig spline;
  /// Fixed tail shapes per dimension for the two-stage variants (TTFfix,
  /// mTAF as nu = 1/shape). Required by those architectures.
  std::vector<double> tail_shapes;
  /// Range for randomly initialized shapes (TTF lambda, gTAF 1/nu).
  double shape_init_lo = 0.05;
  double shape_init_hi = 1.0;
  std::size_t mixture_components = 5;
  double generalized_normal_shape = 2.0;
  std::uint64_t init_seed = 0;
  /// Fitted marginals for COMET.
  std::vector<comet::CometMarginal> comet_marginals;

  std::size_t hidden_width(std::size_t d) const { return hidden ? hidden : d + 10; }
};

class FlowModel {
 public:
  std::string name;
  std::size_t dim = 0;
  ArchitectureOptions options;
  BaseDistribution base;
  /// In generative order: base -> layers[0] -> layers[1] -> ... -> data.
  std::vector<Layer> layers;
  ParamSet params;

  /// x -> z through all layers; log_det = log|det dz/dx|.
  template <class S>
  LayerResult<S> to_base(const ParamView<S>& p, std::span<const S> x) const;
  /// z -> x; log_det = log|det dx/dz|.
  template <class S>
  LayerResult<S> from_base(const ParamView<S>& p, std::span<const S> z) const;

  template <class S>
  S log_prob(const ParamView<S>& p, std::span<const S> x) const;
  double log_prob(std::span<const double> x) const;

  template <class S>
  struct Sample {
    std::vector<S> x;
    S log_q;
  };
  /// Draw x = T(z) together with log q(x) = log q_z(z) - log|det dx/dz|.
  template <class S>
  Sample<S> sample_with_log_prob(const ParamView<S>& p, Rng& rng) const;
  std::vector<double> sample(Rng& rng) const;

  ParamView<double> view() const { return ParamView<double>(params); }

  const TailLayer* tail_layer() const;
  /// Current tail parameters, empty without a tail layer.
  std::vector<ttf::TailParams> tail_params() const;
};

/// Names accepted by build_architecture.
const std::vector<std::string>& architecture_names();

/// Layer stacks:
///   normal      std normal base + RQS + affine
///   m_normal    5-component Gaussian mixture base + RQS + affine
///   g_normal    generalized normal base + RQS + affine
///   mTAF        Student-T base with fixed nu = 1/shape + RQS + affine
///   gTAF        Student-T base with trainable nu + RQS + affine
///   TTF         normal + tail layer with trainable lambda
///   TTFfix      normal + tail layer with lambda fixed to options.tail_shapes
///   TTF_tBase   TTF with a trainable Student-T base
///   COMET       normal + logistic/marginal-quantile layer
/// options.lu_layer inserts an LU layer before the final tail/COMET layer.
FlowModel build_architecture(const std::string& name, std::size_t d, const ArchitectureOptions& options = {});

}  // namespace tailflow::flows
