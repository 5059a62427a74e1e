#include "tailflow/flows/conditioner.hpp"

#include <cmath>
#include <stdexcept>

namespace tailflow::flows {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "relu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

namespace {

struct Act {
  double value;
  double slope;
};

Act activate(Activation a, double s) {
  switch (a) {
    case Activation::relu: return s > 0.0 ? Act{s, 1.0} : Act{0.0, 0.0};
    case Activation::tanh: {
      const double t = std::tanh(s);
      return {t, 1.0 - t * t};
    }
    case Activation::sigmoid: {
      const double g = ad::sigmoid(s);
      return {g, g * (1.0 - g)};
    }
  }
  return {s, 1.0};
}

// One masked row: act(b + sum_j w_j x_{inputs[j]}). The activation is fused
// into the node; an inactive ReLU unit becomes a constant with no edges.
template <class S>
S masked_row(const ParamView<S>& p, std::size_t w_off, std::size_t b_idx, const std::vector<std::uint16_t>& inputs,
             std::span<const S> x, const Activation* act) {
  if constexpr (std::is_same_v<S, double>) {
    double s = p[b_idx];
    for (std::size_t j = 0; j < inputs.size(); ++j) s += p[w_off + j] * x[inputs[j]];
    return act ? activate(*act, s).value : s;
  } else {
    const ad::Var b = p[b_idx];
    double s = b.value;
    for (std::size_t j = 0; j < inputs.size(); ++j) s += p.tape().param(w_off + j).value * x[inputs[j]].value;
    double slope = 1.0;
    double out = s;
    if (act) {
      const Act a = activate(*act, s);
      out = a.value;
      slope = a.slope;
      if (slope == 0.0) return ad::Var(out);
    }
    ad::Tape& tape = p.tape();
    tape.begin_node();
    tape.push_edge(b, slope);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const ad::Var w = p[w_off + j];
      const ad::Var& xi = x[inputs[j]];
      tape.push_edge(w, slope * xi.value);
      tape.push_edge(xi, slope * w.value);
    }
    return tape.finish_node(out);
  }
}

}  // namespace

MaskedConditioner::MaskedConditioner(std::size_t dim, std::size_t outputs_per_dim, std::size_t hidden,
                                     Activation activation, ParamSet& params, Rng& rng, const std::string& name,
                                     std::span<const double> output_bias)
    : dim_(dim), outputs_per_dim_(outputs_per_dim), hidden_(hidden), activation_(activation) {
  if (dim == 0) throw std::invalid_argument("MaskedConditioner: dimension must be positive");
  if (dim > 65535) throw std::invalid_argument("MaskedConditioner: dimension too large");
  if (output_bias.size() != outputs_per_dim) throw std::invalid_argument("MaskedConditioner: output bias size mismatch");

  // Hidden unit degrees cycle through 1..d-1; a unit of degree m sees inputs
  // with index < m, and output block i sees hidden units of degree <= i.
  const std::size_t max_degree = dim > 1 ? dim - 1 : 1;
  std::vector<std::size_t> degree(hidden);
  for (std::size_t k = 0; k < hidden; ++k) degree[k] = k % max_degree + 1;

  auto build = [&](std::vector<Row>& layer, std::size_t rows, auto&& connected, std::size_t fan_in,
                   const std::string& tag, bool zero_init) {
    layer.resize(rows);
    std::size_t total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < fan_in; ++c)
        if (connected(r, c)) layer[r].inputs.push_back(static_cast<std::uint16_t>(c));
      total += layer[r].inputs.size();
    }
    const std::size_t w = params.allocate(name + "." + tag + ".w", total);
    const std::size_t b = params.allocate(name + "." + tag + ".b", rows);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::size_t off = w;
    for (std::size_t r = 0; r < rows; ++r) {
      layer[r].weight_offset = off;
      layer[r].bias_index = b + r;
      for (std::size_t j = 0; j < layer[r].inputs.size(); ++j, ++off)
        params.values[off] = zero_init ? 0.0 : bound * (2.0 * rng.uniform() - 1.0);
      params.values[b + r] = zero_init ? output_bias[r % outputs_per_dim] : bound * (2.0 * rng.uniform() - 1.0);
    }
  };

  build(layer1_, hidden, [&](std::size_t r, std::size_t c) { return c < degree[r]; }, dim, "h1", false);
  build(layer2_, hidden, [&](std::size_t r, std::size_t c) { return degree[c] <= degree[r]; }, hidden, "h2", false);
  build(
      output_, dim * outputs_per_dim,
      [&](std::size_t r, std::size_t c) { return degree[c] <= r / outputs_per_dim; }, hidden, "out", true);
}

template <class S>
void MaskedConditioner::hidden_layers(const ParamView<S>& p, std::span<const S> x, std::vector<S>& h2) const {
  if (x.size() != dim_) throw std::invalid_argument("MaskedConditioner: input dimension mismatch");
  std::vector<S> h1(hidden_);
  for (std::size_t r = 0; r < hidden_; ++r)
    h1[r] = masked_row<S>(p, layer1_[r].weight_offset, layer1_[r].bias_index, layer1_[r].inputs, x, &activation_);
  h2.resize(hidden_);
  const std::span<const S> h1s(h1);
  for (std::size_t r = 0; r < hidden_; ++r)
    h2[r] = masked_row<S>(p, layer2_[r].weight_offset, layer2_[r].bias_index, layer2_[r].inputs, h1s, &activation_);
}

template <class S>
void MaskedConditioner::eval(const ParamView<S>& p, std::span<const S> x, std::span<S> out) const {
  if (out.size() != output_.size()) throw std::invalid_argument("MaskedConditioner: output size mismatch");
  std::vector<S> h2;
  hidden_layers(p, x, h2);
  const std::span<const S> hs(h2);
  for (std::size_t r = 0; r < output_.size(); ++r)
    out[r] = masked_row<S>(p, output_[r].weight_offset, output_[r].bias_index, output_[r].inputs, hs, nullptr);
}

template <class S>
void MaskedConditioner::eval_block(const ParamView<S>& p, std::span<const S> x, std::size_t i,
                                   std::span<S> out) const {
  if (out.size() != outputs_per_dim_) throw std::invalid_argument("MaskedConditioner: block size mismatch");
  if (i >= dim_) throw std::out_of_range("MaskedConditioner: block index out of range");
  const std::size_t first = i * outputs_per_dim_;
  if (i == 0) {
    // Block 0 has no inputs at all; skip the hidden layers.
    for (std::size_t k = 0; k < outputs_per_dim_; ++k) out[k] = p[output_[first + k].bias_index];
    return;
  }
  std::vector<S> h2;
  hidden_layers(p, x, h2);
  const std::span<const S> hs(h2);
  for (std::size_t k = 0; k < outputs_per_dim_; ++k) {
    const Row& row = output_[first + k];
    out[k] = masked_row<S>(p, row.weight_offset, row.bias_index, row.inputs, hs, nullptr);
  }
}

bool MaskedConditioner::depends_on(std::size_t block, std::size_t input) const {
  const std::size_t first = block * outputs_per_dim_;
  std::vector<bool> h1(hidden_, false);
  for (std::size_t r = 0; r < hidden_; ++r)
    for (auto c : layer1_[r].inputs) h1[r] = h1[r] || c == input;
  std::vector<bool> h2(hidden_, false);
  for (std::size_t r = 0; r < hidden_; ++r)
    for (auto c : layer2_[r].inputs) h2[r] = h2[r] || h1[c];
  for (std::size_t k = 0; k < outputs_per_dim_; ++k)
    for (auto c : output_[first + k].inputs)
      if (h2[c]) return true;
  return false;
}

template void MaskedConditioner::eval<double>(const ParamView<double>&, std::span<const double>,
                                              std::span<double>) const;
template void MaskedConditioner::eval<ad::Var>(const ParamView<ad::Var>&, std::span<const ad::Var>,
                                               std::span<ad::Var>) const;
template void MaskedConditioner::eval_block<double>(const ParamView<double>&, std::span<const double>, std::size_t,
                                                    std::span<double>) const;
template void MaskedConditioner::eval_block<ad::Var>(const ParamView<ad::Var>&, std::span<const ad::Var>, std::size_t,
                                                     std::span<ad::Var>) const;

}  // namespace tailflow::flows
