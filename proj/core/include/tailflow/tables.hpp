#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tailflow/flows/flow_model.hpp"
#include "tailflow/regression.hpp"
#include "tailflow/training.hpp"

namespace tailflow::experiments {

/// One line of the results CSV: flow,d,nu,seed,metric_name,value,diverged.
struct ResultRow {
  std::string flow;
  std::size_t d = 0;
  double nu = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  bool diverged = false;
};

inline constexpr const char* kResultsHeader = "flow,d,nu,seed,metric_name,value,diverged";

void write_results(std::ostream& out, const std::vector<ResultRow>& rows, bool header = true);
std::vector<ResultRow> read_results(std::istream& in);

struct LambdaRow {
  std::string flow;
  std::size_t d = 0;
  double nu = 0.0;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  double lambda_pos = 0.0;
  double lambda_neg = 0.0;
};

void write_lambdas(std::ostream& out, const std::vector<LambdaRow>& rows);

struct DeCellSpec {
  std::string flow = "TTF";
  std::size_t d = 5;
  double nu = 2.0;
  std::uint64_t seed = 0;
  std::size_t n = 5000;
  train::TrainConfig train;
  flows::ArchitectureOptions arch;
};

struct DeCellResult {
  std::vector<ResultRow> rows;
  std::vector<LambdaRow> lambdas;
  double test_nll_per_dim = 0.0;
  double true_nll_per_dim = 0.0;
  bool diverged = false;
  std::string error;
  train::TrainResult training;
  std::optional<flows::FlowModel> model;
};

/// Density estimation on synthetic data. Two-stage flows (TTFfix, mTAF, COMET)
/// use the known tail shape 1/nu. Exceptions are caught and reported as a
/// diverged cell.
DeCellResult run_de_cell(const DeCellSpec& spec);

/// Trains `model` on the given splits and fills the metric rows. Shared by the
/// synthetic and CSV pipelines.
DeCellResult run_de_on_splits(flows::FlowModel model, const Matrix& train, const Matrix& valid, const Matrix& test,
                              const train::TrainConfig& cfg, const std::string& flow, std::size_t d, double nu,
                              std::uint64_t seed);

/// Density estimation on a user dataset: rows are shuffled by seed, split
/// 40/20/40, and standardized with train+validation statistics. Two-stage
/// flows get their tail shapes from estimate_marginal_tails on the training
/// split. Rows report nu = 0.
struct DataCellSpec {
  std::string flow = "TTF";
  std::uint64_t seed = 0;
  train::TrainConfig train;
  flows::ArchitectureOptions arch;
  std::size_t bootstrap_reps = 500;
};

DeCellResult run_de_data_cell(const DataCellSpec& spec, const Matrix& data);

struct NnregCellSpec {
  std::size_t d = 5;
  double nu = 30.0;
  std::uint64_t seed = 0;
  /// Observations in each of the train, validation and test sets.
  std::size_t n = 5000;
  regression::MlpConfig mlp;
};

/// Rows use flow = "mlp_<activation>" and metrics test_mse, epochs, best_epoch.
std::vector<ResultRow> run_nnreg_cell(const NnregCellSpec& spec);

struct ViCellSpec {
  std::string flow = "TTF";
  std::size_t d = 5;
  double nu = 2.0;
  std::uint64_t seed = 0;
  /// max_epochs is the iteration count; vi_samples the draws per step.
  train::TrainConfig train = [] {
    train::TrainConfig c;
    c.learning_rate = 1e-3;
    c.max_epochs = 10000;
    c.vi_samples = 100;
    return c;
  }();
  flows::ArchitectureOptions arch;
  std::size_t diagnostic_samples = 10000;
};

struct ViCellResult {
  std::vector<ResultRow> rows;
  std::vector<LambdaRow> lambdas;
  double ess_efficiency = 0.0;
  std::optional<double> khat;
  double final_elbo = 0.0;
  bool diverged = false;
  std::string error;
  train::TrainResult training;
  std::optional<flows::FlowModel> model;
};

ViCellResult run_vi_cell(const ViCellSpec& spec);

/// Mean and standard error of one metric over the seeds of a cell.
struct CellSummary {
  std::string flow;
  std::size_t d = 0;
  double nu = 0.0;
  std::string metric;
  std::size_t runs = 0;
  std::size_t diverged = 0;
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
  double max = 0.0;

  /// "mean (se)", or "-" when any run diverged.
  std::string display(int precision = 2) const;
};

/// Groups rows by (flow, d, nu, metric) in order of first appearance.
/// Non-finite values are left out of the statistics.
std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows);

/// Runs fn(0..n-1) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace tailflow::experiments
