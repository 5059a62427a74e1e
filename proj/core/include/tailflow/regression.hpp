#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tailflow/flows/conditioner.hpp"
#include "tailflow/matrix.hpp"
#include "tailflow/rng.hpp"

namespace tailflow::regression {

struct RegressionData {
  Matrix x;
  std::vector<double> y;
};

/// X iid t_nu in every column, y = X_d + N(0, 1).
RegressionData gen_regression(std::size_t d, double nu, std::size_t n, Rng& rng);

struct MlpConfig {
  std::size_t hidden = 50;
  flows::Activation activation = flows::Activation::sigmoid;
  double learning_rate = 1e-3;
  std::size_t batch_size = 100;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fully connected d -> hidden -> hidden -> 1 network.
class Mlp {
 public:
  Mlp(std::size_t inputs, std::size_t hidden, flows::Activation activation, Rng& rng);

  double predict(std::span<const double> x) const;
  /// Mean squared error over all rows.
  double mse(const Matrix& x, std::span<const double> y) const;

  /// Gradient of the mean squared error over `rows`, accumulated into grad.
  /// Returns the mean squared error of the batch.
  double batch_gradient(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                        std::vector<double>& grad) const;

  std::vector<double>& params() noexcept { return w_; }
  const std::vector<double>& params() const noexcept { return w_; }

 private:
  std::size_t in_ = 0, h_ = 0;
  flows::Activation act_;
  // Layout: W1 (h x in), b1, W2 (h x h), b2, w3 (h), b3.
  std::vector<double> w_;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

struct RegressionResult {
  double test_mse = 0.0;
  double best_valid_mse = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
};

/// Adam on squared error with the best validation epoch kept.
RegressionResult fit_mlp_regressor(const RegressionData& train, const RegressionData& valid,
                                   const RegressionData& test, const MlpConfig& cfg);

}  // namespace tailflow::regression
