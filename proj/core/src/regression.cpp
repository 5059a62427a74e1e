#include "tailflow/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tailflow/special.hpp"
#include "tailflow/training.hpp"

namespace tailflow::regression {

using flows::Activation;

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh: return std::tanh(v);
    case Activation::sigmoid: return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return v;
}

// Derivative expressed through the activation output.
double activate_grad(Activation a, double pre, double out) {
  switch (a) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::sigmoid: return out * (1.0 - out);
  }
  return 1.0;
}

}  // namespace

RegressionData gen_regression(std::size_t d, double nu, std::size_t n, Rng& rng) {
  if (d < 1) throw std::invalid_argument("gen_regression: d must be positive");
  if (!(nu > 0.0)) throw std::invalid_argument("gen_regression: nu must be positive");
  RegressionData out{Matrix(n, d), std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) out.x(r, j) = special::sample_student_t(nu, rng);
    out.y[r] = out.x(r, d - 1) + rng.normal();
  }
  return out;
}

void MlpConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("MLP needs at least one hidden unit");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1 || max_epochs < 1 || patience < 1)
    throw std::invalid_argument("batch size, epochs and patience must be positive");
}

Mlp::Mlp(std::size_t inputs, std::size_t hidden, Activation activation, Rng& rng)
    : in_(inputs), h_(hidden), act_(activation) {
  w1_ = 0;
  b1_ = w1_ + h_ * in_;
  w2_ = b1_ + h_;
  b2_ = w2_ + h_ * h_;
  w3_ = b2_ + h_;
  b3_ = w3_ + h_;
  w_.resize(b3_ + 1);
  auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) w_[off + i] = a * (2.0 * rng.uniform() - 1.0);
  };
  fill(w1_, h_ * in_, in_);
  fill(b1_, h_, in_);
  fill(w2_, h_ * h_, h_);
  fill(b2_, h_, h_);
  fill(w3_, h_, h_);
  fill(b3_, 1, h_);
}

double Mlp::predict(std::span<const double> x) const {
  std::vector<double> a1(h_), a2(h_);
  for (std::size_t i = 0; i < h_; ++i) {
    double s = w_[b1_ + i];
    for (std::size_t j = 0; j < in_; ++j) s += w_[w1_ + i * in_ + j] * x[j];
    a1[i] = activate(act_, s);
  }
  for (std::size_t i = 0; i < h_; ++i) {
    double s = w_[b2_ + i];
    for (std::size_t j = 0; j < h_; ++j) s += w_[w2_ + i * h_ + j] * a1[j];
    a2[i] = activate(act_, s);
  }
  double y = w_[b3_];
  for (std::size_t j = 0; j < h_; ++j) y += w_[w3_ + j] * a2[j];
  return y;
}

double Mlp::mse(const Matrix& x, std::span<const double> y) const {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double e = predict(x.row(r)) - y[r];
    s += e * e;
  }
  return s / static_cast<double>(x.rows());
}

double Mlp::batch_gradient(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                           std::vector<double>& grad) const {
  grad.assign(w_.size(), 0.0);
  std::vector<double> z1(h_), a1(h_), z2(h_), a2(h_), d1(h_), d2(h_);
  const double scale = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t r : rows) {
    const auto xr = x.row(r);
    for (std::size_t i = 0; i < h_; ++i) {
      double s = w_[b1_ + i];
      for (std::size_t j = 0; j < in_; ++j) s += w_[w1_ + i * in_ + j] * xr[j];
      z1[i] = s;
      a1[i] = activate(act_, s);
    }
    for (std::size_t i = 0; i < h_; ++i) {
      double s = w_[b2_ + i];
      for (std::size_t j = 0; j < h_; ++j) s += w_[w2_ + i * h_ + j] * a1[j];
      z2[i] = s;
      a2[i] = activate(act_, s);
    }
    double out = w_[b3_];
    for (std::size_t j = 0; j < h_; ++j) out += w_[w3_ + j] * a2[j];
    const double e = out - y[r];
    loss += e * e * scale;

    const double g = 2.0 * e * scale;
    grad[b3_] += g;
    for (std::size_t j = 0; j < h_; ++j) {
      grad[w3_ + j] += g * a2[j];
      d2[j] = g * w_[w3_ + j] * activate_grad(act_, z2[j], a2[j]);
    }
    std::fill(d1.begin(), d1.end(), 0.0);
    for (std::size_t i = 0; i < h_; ++i) {
      grad[b2_ + i] += d2[i];
      for (std::size_t j = 0; j < h_; ++j) {
        grad[w2_ + i * h_ + j] += d2[i] * a1[j];
        d1[j] += d2[i] * w_[w2_ + i * h_ + j];
      }
    }
    for (std::size_t i = 0; i < h_; ++i) {
      const double di = d1[i] * activate_grad(act_, z1[i], a1[i]);
      grad[b1_ + i] += di;
      for (std::size_t j = 0; j < in_; ++j) grad[w1_ + i * in_ + j] += di * xr[j];
    }
  }
  return loss;
}

RegressionResult fit_mlp_regressor(const RegressionData& train, const RegressionData& valid,
                                   const RegressionData& test, const MlpConfig& cfg) {
  cfg.validate();
  if (train.x.empty() || valid.x.empty() || test.x.empty()) throw std::invalid_argument("fit_mlp_regressor: empty split");
  Rng rng(mix_seed(cfg.seed, 0x6d6c70ULL));
  Mlp net(train.x.cols(), cfg.hidden, cfg.activation, rng);
  train::AdamState adam;
  std::vector<std::size_t> order(train.x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;

  RegressionResult res;
  res.best_valid_mse = std::numeric_limits<double>::infinity();
  std::vector<double> best = net.params();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, order.size());
      net.batch_gradient(train.x, train.y, std::span<const std::size_t>(order.data() + start, stop - start), grad);
      train::adam_step(net.params(), grad, adam, cfg.learning_rate);
    }
    res.epochs_run = epoch;
    const double v = net.mse(valid.x, valid.y);
    if (std::isfinite(v) && v < res.best_valid_mse) {
      res.best_valid_mse = v;
      res.best_epoch = epoch;
      best = net.params();
    }
    if (epoch - std::max<std::size_t>(res.best_epoch, 1) >= cfg.patience) break;
  }
  net.params() = best;
  res.test_mse = net.mse(test.x, test.y);
  return res;
}

}  // namespace tailflow::regression
