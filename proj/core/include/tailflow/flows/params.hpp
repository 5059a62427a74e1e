#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailflow/autodiff.hpp"

namespace tailflow::flows {

/// Flat parameter vector shared by all layers of a model. Layers keep offsets
/// into it; the optimizer and the tape only ever see the flat vector.
struct ParamSet {
  struct Block {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::vector<double> values;
  std::vector<std::uint8_t> frozen;
  std::vector<Block> blocks;

  std::size_t allocate(std::string name, std::size_t n, double init = 0.0) {
    const std::size_t offset = values.size();
    values.resize(offset + n, init);
    frozen.resize(offset + n, 0);
    blocks.push_back({std::move(name), offset, n});
    return offset;
  }

  void freeze(std::size_t offset, std::size_t n = 1) {
    for (std::size_t i = 0; i < n; ++i) frozen[offset + i] = 1;
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t trainable_count() const noexcept {
    std::size_t n = 0;
    for (auto f : frozen) n += f ? 0 : 1;
    return n;
  }
};

/// Read access to parameter values as scalars of type S.
template <class S>
class ParamView;

template <>
class ParamView<double> {
 public:
  explicit ParamView(std::span<const double> values) : values_(values) {}
  explicit ParamView(const ParamSet& ps) : values_(ps.values) {}
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

 private:
  std::span<const double> values_;
};

/// Frozen parameters are handed out as constants so their gradients are
/// identically zero.
template <>
class ParamView<ad::Var> {
 public:
  ParamView(ad::Tape& tape, std::span<const std::uint8_t> frozen) : tape_(&tape), frozen_(frozen) {}
  ad::Var operator[](std::size_t i) const {
    const ad::Var p = tape_->param(i);
    return frozen_[i] ? ad::Var(p.value) : p;
  }
  ad::Tape& tape() const { return *tape_; }

 private:
  ad::Tape* tape_;
  std::span<const std::uint8_t> frozen_;
};

}  // namespace tailflow::flows
