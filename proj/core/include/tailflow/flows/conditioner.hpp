#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailflow/flows/params.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::flows {

enum class Activation { relu, tanh, sigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Masked autoregressive MLP with two hidden layers. Output block i (of
/// outputs_per_dim values) depends only on inputs 0..i-1; block 0 is constant.
/// Masked connections are not stored, so every parameter is live.
class MaskedConditioner {
 public:
  MaskedConditioner() = default;
  /// `output_bias` gives the initial bias of each output within a block; the
  /// output weights start at zero so the conditioner starts constant.
  MaskedConditioner(std::size_t dim, std::size_t outputs_per_dim, std::size_t hidden, Activation activation,
                    ParamSet& params, Rng& rng, const std::string& name, std::span<const double> output_bias);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t outputs_per_dim() const noexcept { return outputs_per_dim_; }
  std::size_t hidden() const noexcept { return hidden_; }
  Activation activation() const noexcept { return activation_; }

  /// All output blocks; out.size() == dim * outputs_per_dim, block-major.
  template <class S>
  void eval(const ParamView<S>& p, std::span<const S> x, std::span<S> out) const;

  /// Only output block i; cheaper when generating dimension by dimension.
  template <class S>
  void eval_block(const ParamView<S>& p, std::span<const S> x, std::size_t i, std::span<S> out) const;

  /// Whether output block `block` is connected (through some path) to input `input`.
  bool depends_on(std::size_t block, std::size_t input) const;

 private:
  struct Row {
    std::vector<std::uint16_t> inputs;
    std::size_t weight_offset = 0;
    std::size_t bias_index = 0;
  };

  template <class S>
  void hidden_layers(const ParamView<S>& p, std::span<const S> x, std::vector<S>& h2) const;

  std::size_t dim_ = 0;
  std::size_t outputs_per_dim_ = 0;
  std::size_t hidden_ = 0;
  Activation activation_ = Activation::relu;
  std::vector<Row> layer1_;
  std::vector<Row> layer2_;
  std::vector<Row> output_;
};

}  // namespace tailflow::flows
