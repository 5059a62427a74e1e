#include "tailflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tailflow/tail_estimation.hpp"

namespace tailflow::diag {

double ess_efficiency(std::span<const double> w) {
  if (w.empty()) throw std::invalid_argument("ess_efficiency: no weights");
  const double top = *std::max_element(w.begin(), w.end());
  double s = 0.0, s2 = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("ess_efficiency: weights must be finite and nonnegative");
    // Divide by the maximum so huge weights do not overflow the square.
    const double r = top > 0.0 ? v / top : 0.0;
    s += r;
    s2 += r * r;
  }
  if (!(s2 > 0.0)) throw std::invalid_argument("ess_efficiency: all weights are zero");
  return s * s / (static_cast<double>(w.size()) * s2);
}

double ess_efficiency_log(std::span<const double> lw) {
  if (lw.empty()) throw std::invalid_argument("ess_efficiency_log: no weights");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : lw)
    if (std::isfinite(v)) top = std::max(top, v);
  if (!std::isfinite(top)) throw std::invalid_argument("ess_efficiency_log: no finite log weight");
  std::vector<double> w(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::isfinite(lw[i]) ? std::exp(lw[i] - top) : 0.0;
  return ess_efficiency(w);
}

std::optional<double> khat(std::span<const double> weights) {
  const std::size_t n = weights.size();
  if (n < 100) throw std::invalid_argument("khat: need at least 100 weights");
  std::vector<double> w(weights.begin(), weights.end());
  for (double v : w)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("khat: weights must be finite and nonnegative");
  std::sort(w.begin(), w.end());
  const double nd = static_cast<double>(n);
  const auto m = static_cast<std::size_t>(std::ceil(std::min(0.2 * nd, 3.0 * std::sqrt(nd))));
  const double top = w.back();
  if (!(top > 0.0) || w.front() == top) return std::nullopt;
  const double threshold = w[n - m - 1];
  std::vector<double> excess;
  excess.reserve(m);
  for (std::size_t i = n - m; i < n; ++i) {
    const double e = (w[i] - threshold) / top;
    if (e > 0.0) excess.push_back(e);
  }
  try {
    return tailest::gpd_fit_ml(excess).shape;
  } catch (const tailest::GpdFitError&) {
    return std::nullopt;
  }
}

std::optional<double> khat_log(std::span<const double> lw) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : lw)
    if (std::isfinite(v)) top = std::max(top, v);
  if (!std::isfinite(top)) return std::nullopt;
  std::vector<double> w(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::isfinite(lw[i]) ? std::exp(lw[i] - top) : 0.0;
  return khat(w);
}

VIDiagnostics vi_diagnostics(const flows::FlowModel& model, const train::LogTarget& target, std::size_t n, Rng& rng) {
  if (n < 100) throw std::invalid_argument("vi_diagnostics: need at least 100 draws");
  const flows::ParamView<double> p = model.view();
  std::vector<double> lw(n);
  VIDiagnostics out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = model.sample_with_log_prob<double>(p, rng);
    bool finite = std::isfinite(s.log_q);
    for (double v : s.x) finite = finite && std::isfinite(v);
    lw[i] = finite ? target.value(s.x) - s.log_q : std::nan("");
    // Overflowed draws get zero weight.
    if (!std::isfinite(lw[i])) {
      ++out.non_finite;
      lw[i] = -std::numeric_limits<double>::infinity();
    }
  }
  if (out.non_finite == n) {
    out.ess_efficiency = 0.0;
    return out;
  }
  out.ess_efficiency = ess_efficiency_log(lw);
  out.khat = khat_log(lw);
  return out;
}

}  // namespace tailflow::diag
