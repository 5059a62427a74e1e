#include "tailflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tailflow/flows/serialization.hpp"

namespace tailflow::train {

using flows::FlowModel;
using flows::ParamView;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be positive");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be at least 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
  if (vi_samples < 1) throw std::invalid_argument("VI sample count must be at least 1");
  if (max_retries < 0) throw std::invalid_argument("retry budget must be non-negative");
}

double clip_gradient(std::span<double> g, double max_norm) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
  return norm;
}

bool adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, double lr,
               std::span<const std::uint8_t> frozen, const AdamOptions& opt) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (!frozen.empty() && frozen.size() != params.size()) throw std::invalid_argument("adam_step: mask size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) {
      ++st.skipped;
      return false;
    }
  }
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
    st.t = 0;
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    st.m[i] = opt.beta1 * st.m[i] + (1.0 - opt.beta1) * grads[i];
    st.v[i] = opt.beta2 * st.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
  return true;
}

namespace {

std::vector<ad::Var> constants(std::span<const double> x) { return {x.begin(), x.end()}; }

}  // namespace

ad::Var de_loss(const FlowModel& model, ad::Tape& tape, const Matrix& batch) {
  if (batch.empty()) throw std::invalid_argument("de_loss: empty batch");
  const ParamView<ad::Var> p(tape, model.params.frozen);
  std::vector<ad::Var> terms;
  terms.reserve(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = constants(batch.row(r));
    terms.push_back(-model.log_prob<ad::Var>(p, std::span<const ad::Var>(x)));
  }
  return ad::sum(std::span<const ad::Var>(terms));
}

LossGradient de_loss_gradient(const FlowModel& model, ad::Tape& tape, const Matrix& data,
                              std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("de_loss_gradient: no rows");
  const ParamView<ad::Var> p(tape, model.params.frozen);
  tape.set_param_values(model.params.values);
  tape.clear_gradients();
  const double scale = 1.0 / static_cast<double>(rows.size());
  LossGradient out;
  double total = 0.0;
  for (std::size_t r : rows) {
    tape.rewind();
    const auto x = constants(data.row(r));
    const ad::Var nll = -model.log_prob<ad::Var>(p, std::span<const ad::Var>(x));
    total += nll.value;
    if (!std::isfinite(nll.value) || tape.poisoned()) {
      out.finite = false;
      break;
    }
    tape.backward(nll, scale);
  }
  tape.rewind();
  out.loss = out.finite ? total * scale : std::numeric_limits<double>::infinity();
  const auto g = tape.gradients();
  out.gradient.assign(g.begin(), g.end());
  for (double v : out.gradient)
    if (!std::isfinite(v)) out.finite = false;
  return out;
}

double mean_nll(const FlowModel& model, const Matrix& data) {
  if (data.empty()) throw std::invalid_argument("mean_nll: empty data");
  const ParamView<double> p = model.view();
  double total = 0.0;
  for (std::size_t r = 0; r < data.rows(); ++r) total -= model.log_prob<double>(p, data.row(r));
  return total / static_cast<double>(data.rows());
}

TrainResult fit_density(FlowModel& model, const Matrix& train, const Matrix& valid, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || valid.empty()) throw std::invalid_argument("fit_density: empty training or validation data");
  if (train.cols() != model.dim || valid.cols() != model.dim)
    throw std::invalid_argument("fit_density: data width does not match the model dimension");

  Rng rng(mix_seed(cfg.seed, 0x7472616eULL));
  ad::Tape tape(model.params.values);
  AdamState adam;
  double lr = cfg.learning_rate;
  int retries = 0;

  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = cfg.batch_size == 0 ? train.rows() : std::min(cfg.batch_size, train.rows());

  TrainResult res;
  res.best_params = model.params.values;
  res.best_valid_loss = std::numeric_limits<double>::infinity();

  std::vector<double> prev_params = model.params.values;
  AdamState prev_adam = adam;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (batch < train.rows()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    bool give_up = false;
    for (std::size_t start = 0; start < train.rows(); start += batch) {
      const std::size_t stop = std::min(start + batch, train.rows());
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      LossGradient lg = de_loss_gradient(model, tape, train, rows);
      if (!lg.finite) {
        // Roll back the step that led here and retry with a smaller rate.
        ++res.rollbacks;
        if (++retries > cfg.max_retries) {
          give_up = true;
          break;
        }
        model.params.values = prev_params;
        adam = prev_adam;
        lr *= 0.5;
        continue;
      }
      epoch_loss += lg.loss * static_cast<double>(rows.size());
      seen += rows.size();
      if (cfg.clip_norm) clip_gradient(lg.gradient, *cfg.clip_norm);
      prev_params = model.params.values;
      prev_adam = adam;
      adam_step(model.params.values, lg.gradient, adam, lr, model.params.frozen);
    }
    if (give_up) {
      res.diverged = true;
      res.epochs_run = epoch;
      break;
    }

    const double v = mean_nll(model, valid);
    res.trace.push_back({epoch, seen ? epoch_loss / static_cast<double>(seen) : std::nan(""), v});
    res.epochs_run = epoch;
    if (std::isfinite(v) && v < res.best_valid_loss) {
      res.best_valid_loss = v;
      res.best_epoch = epoch;
      res.best_params = model.params.values;
    }
    if (epoch - std::max<std::size_t>(res.best_epoch, 1) >= cfg.patience) break;
  }

  model.params.values = res.best_params;
  const double final_train = mean_nll(model, train);
  const double final_valid = mean_nll(model, valid);
  if (!std::isfinite(final_train) || !std::isfinite(final_valid) || final_train > cfg.divergence_threshold ||
      final_valid > cfg.divergence_threshold)
    res.diverged = true;
  return res;
}

ElboEstimate elbo_gradient(const FlowModel& model, const LogTarget& target, std::size_t samples, Rng& rng,
                           ad::Tape& tape) {
  if (samples < 1) throw std::invalid_argument("elbo_gradient: need at least one sample");
  const ParamView<ad::Var> p(tape, model.params.frozen);
  tape.set_param_values(model.params.values);
  ElboEstimate est;
  est.gradient.assign(model.params.size(), 0.0);
  double total = 0.0;
  std::size_t kept = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    tape.rewind();
    tape.clear_gradients();
    const auto draw = model.sample_with_log_prob<ad::Var>(p, rng);
    bool finite = std::isfinite(draw.log_q.value);
    for (const auto& v : draw.x) finite = finite && std::isfinite(v.value);
    if (!finite) {
      ++est.dropped;
      continue;
    }
    const ad::Var term = target.var(std::span<const ad::Var>(draw.x)) - draw.log_q;
    if (!std::isfinite(term.value) || !tape.backward(term).ok) {
      ++est.dropped;
      continue;
    }
    const auto g = tape.gradients();
    if (!std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); })) {
      ++est.dropped;
      continue;
    }
    for (std::size_t i = 0; i < g.size(); ++i) est.gradient[i] += g[i];
    total += term.value;
    ++kept;
  }
  tape.rewind();
  tape.clear_gradients();
  if (kept == 0) {
    est.ok = false;
    est.elbo = -std::numeric_limits<double>::infinity();
    return est;
  }
  est.elbo = total / static_cast<double>(kept);
  for (double& g : est.gradient) g /= static_cast<double>(kept);
  return est;
}

TrainResult fit_vi(FlowModel& model, const LogTarget& target, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x7669ULL));
  ad::Tape tape(model.params.values);
  AdamState adam;
  double lr = cfg.learning_rate;
  int retries = 0;
  TrainResult res;
  std::vector<double> prev_params = model.params.values;
  AdamState prev_adam = adam;

  for (std::size_t it = 1; it <= cfg.max_epochs; ++it) {
    ElboEstimate est = elbo_gradient(model, target, cfg.vi_samples, rng, tape);
    bool finite = est.ok && std::isfinite(est.elbo);
    for (double g : est.gradient) finite = finite && std::isfinite(g);
    if (!finite) {
      ++res.rollbacks;
      if (++retries > cfg.max_retries) {
        res.diverged = true;
        res.epochs_run = it;
        break;
      }
      model.params.values = prev_params;
      adam = prev_adam;
      lr *= 0.5;
      continue;
    }
    for (double& g : est.gradient) g = -g;
    if (cfg.clip_norm) clip_gradient(est.gradient, *cfg.clip_norm);
    prev_params = model.params.values;
    prev_adam = adam;
    adam_step(model.params.values, est.gradient, adam, lr, model.params.frozen);
    res.trace.push_back({it, est.elbo, std::nan("")});
    res.epochs_run = it;
  }
  res.best_params = model.params.values;
  res.best_epoch = res.epochs_run;
  return res;
}

void write_trace_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "epoch,train_loss,valid_loss\n";
  for (const auto& r : result.trace)
    out << r.epoch << ',' << flows::format_double(r.train_loss) << ',' << flows::format_double(r.valid_loss) << '\n';
}

}  // namespace tailflow::train
