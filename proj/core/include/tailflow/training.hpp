#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailflow/autodiff.hpp"
#include "tailflow/flows/flow_model.hpp"
#include "tailflow/matrix.hpp"

namespace tailflow::train {

struct TrainConfig {
  double learning_rate = 5e-3;
  /// 0 means one full pass over the training data per step.
  std::size_t batch_size = 0;
  /// Epochs for density estimation, iterations for VI.
  std::size_t max_epochs = 5000;
  std::size_t patience = 100;
  std::optional<double> clip_norm;
  std::uint64_t seed = 0;
  /// Mean per-observation loss above this marks a run as diverged.
  double divergence_threshold = 1e5;
  int max_retries = 5;
  /// Monte Carlo samples per ELBO gradient estimate.
  std::size_t vi_samples = 100;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
  std::size_t skipped = 0;
};

/// Scales g in place so that its Euclidean norm is at most max_norm. Returns
/// the norm before clipping.
double clip_gradient(std::span<double> g, double max_norm);

/// One Adam update of the unfrozen entries. A non-finite gradient skips the
/// step (parameters and moments untouched), bumps state.skipped and returns false.
bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               std::span<const std::uint8_t> frozen = {}, const AdamOptions& opt = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  std::vector<double> best_params;
  std::vector<EpochRecord> trace;
  bool diverged = false;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  /// Steps that hit a non-finite loss and were rolled back.
  std::size_t rollbacks = 0;
};

/// -sum_i log q(x_i) over the given rows as one differentiable scalar on `tape`.
/// The tape must have been created from model.params.values.
ad::Var de_loss(const flows::FlowModel& model, ad::Tape& tape, const Matrix& batch);

struct LossGradient {
  double loss = 0.0;  // mean negative log-likelihood over the rows
  std::vector<double> gradient;
  bool finite = true;
};

/// Mean NLL and its gradient over `rows` of `data`, building one small graph
/// per observation on `tape` (which is rewound between observations).
LossGradient de_loss_gradient(const flows::FlowModel& model, ad::Tape& tape, const Matrix& data,
                              std::span<const std::size_t> rows);

/// Mean per-observation negative log-likelihood, in double precision.
double mean_nll(const flows::FlowModel& model, const Matrix& data);

/// Adam with early stopping on the validation loss. On return the model holds
/// the parameters of the best validation epoch. Test data is not an input.
TrainResult fit_density(flows::FlowModel& model, const Matrix& train, const Matrix& valid, const TrainConfig& cfg);

/// Unnormalized log target usable with both scalar types.
struct LogTarget {
  std::function<double(std::span<const double>)> value;
  std::function<ad::Var(std::span<const ad::Var>)> var;
};

template <class F>
LogTarget make_log_target(F f) {
  return {[f](std::span<const double> x) { return f(x); }, [f](std::span<const ad::Var> x) { return f(x); }};
}

struct ElboEstimate {
  double elbo = 0.0;             // mean of log p(x) - log q(x) over kept samples
  std::vector<double> gradient;  // gradient of that mean
  std::size_t dropped = 0;
  bool ok = true;  // false when every sample was dropped
};

/// Reparameterized ELBO gradient from M draws x = T(z; theta).
ElboEstimate elbo_gradient(const flows::FlowModel& model, const LogTarget& target, std::size_t samples, Rng& rng,
                           ad::Tape& tape);

/// Runs cfg.max_epochs Adam iterations on -ELBO. The trace records the ELBO
/// estimate as train_loss (valid_loss unused). The model keeps the final parameters.
TrainResult fit_vi(flows::FlowModel& model, const LogTarget& target, const TrainConfig& cfg);

/// Writes epoch,train_loss,valid_loss rows.
void write_trace_csv(const TrainResult& result, const std::string& path);

}  // namespace tailflow::train
