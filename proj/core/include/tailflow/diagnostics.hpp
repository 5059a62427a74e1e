#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "tailflow/flows/flow_model.hpp"
#include "tailflow/rng.hpp"
#include "tailflow/training.hpp"

namespace tailflow::diag {

/// (sum w)^2 / (n sum w^2). Weights must be nonnegative and not all zero.
double ess_efficiency(std::span<const double> weights);

/// Same quantity from log weights, computed without overflow.
double ess_efficiency_log(std::span<const double> log_weights);

/// GPD shape fitted to the excesses of the largest ceil(min(0.2n, 3 sqrt n))
/// weights over the next largest one. Needs n >= 100. Returns nullopt when
/// the tail is degenerate (all weights equal) or the fit fails.
std::optional<double> khat(std::span<const double> weights);

/// khat from log weights; rescales by the maximum first.
std::optional<double> khat_log(std::span<const double> log_weights);

struct VIDiagnostics {
  std::size_t n = 0;
  /// Draws whose log weight was not finite; they count as zero weight.
  std::size_t non_finite = 0;
  double ess_efficiency = 0.0;
  std::optional<double> khat;
};

/// Importance diagnostics of the flow q against the normalized target p using
/// n independent draws from q.
VIDiagnostics vi_diagnostics(const flows::FlowModel& model, const train::LogTarget& target, std::size_t n, Rng& rng);

}  // namespace tailflow::diag
