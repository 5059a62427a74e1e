#include "run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>

#include "tailflow/csv.hpp"
#include "tailflow/flows/serialization.hpp"
#include "tailflow/tables.hpp"
#include "tailflow/tail_estimation.hpp"

#ifndef TAILFLOW_VERSION
#define TAILFLOW_VERSION "unknown"
#endif

namespace tailflow::cli {

namespace fs = std::filesystem;
using experiments::ResultRow;

namespace {

struct Job {
  std::string flow;
  flows::Activation activation = flows::Activation::relu;
  std::uint64_t seed = 0;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return out;
}

void write_metadata(const ExperimentConfig& cfg, const fs::path& dir) {
  auto out = open_out(dir / "metadata.cfg");
  out << "# tailflow " << TAILFLOW_VERSION << ", built with " << __VERSION__ << '\n';
  out << "# rerun with: tailflow " << to_string(cfg.command) << " --config metadata.cfg\n";
  out << to_text(cfg);
}

flows::ArchitectureOptions arch_options(const ExperimentConfig& cfg) {
  flows::ArchitectureOptions o;
  o.activation = cfg.activations.front();
  o.hidden = cfg.hidden;
  o.lu_layer = cfg.lu_layer;
  return o;
}

std::string stem(const Job& j) { return j.flow + "_seed" + std::to_string(j.seed); }

int run_tail_est(const ExperimentConfig& cfg, const fs::path& dir, std::ostream& log) {
  const csv::NumericTable table = csv::read_numeric(cfg.input);
  tailest::DoubleBootstrapOptions bo;
  bo.repetitions = cfg.bootstrap_reps;
  bo.seed = cfg.seeds.front();
  const tailest::TailEstimate est = tailest::estimate_marginal_tails(table.data, bo);
  auto out = open_out(dir / "tails.csv");
  out << "dim,name,shape,k,light_tailed\n";
  for (std::size_t j = 0; j < est.shape.size(); ++j) {
    out << j << ',' << (j < table.header.size() ? table.header[j] : "") << ',' << flows::format_double(est.shape[j])
        << ',' << est.k[j] << ',' << (est.light_tailed[j] ? 1 : 0) << '\n';
    char buf[160];
    std::snprintf(buf, sizeof buf, "dim %zu: shape %.4f  k %zu%s\n", j, est.shape[j], est.k[j],
                  est.light_tailed[j] ? "  (light tailed)" : "");
    log << buf;
  }
  return 0;
}

}  // namespace

int run(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_metadata(cfg, dir);
  if (cfg.command == Command::tail_est) return run_tail_est(cfg, dir, log);

  std::optional<Matrix> data;
  if (cfg.command == Command::de_csv) data = csv::read_numeric(cfg.input).data;

  std::vector<Job> jobs;
  if (cfg.command == Command::nnreg) {
    for (auto a : cfg.activations)
      for (auto s : cfg.seeds) jobs.push_back({"", a, s});
  } else {
    for (const auto& f : cfg.flows)
      for (auto s : cfg.seeds) jobs.push_back({f, cfg.activations.front(), s});
  }
  if (cfg.trace) fs::create_directories(dir / "traces");
  if (cfg.save_models) fs::create_directories(dir / "models");

  std::vector<std::vector<ResultRow>> rows(jobs.size());
  std::vector<std::vector<experiments::LambdaRow>> lambdas(jobs.size());
  std::mutex log_mu;
  std::size_t failures = 0;

  experiments::parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    std::string error;
    bool diverged = false;
    std::optional<flows::FlowModel> model;
    std::optional<train::TrainResult> training;
    std::string label = job.flow;
    switch (cfg.command) {
      case Command::de_synth: {
        experiments::DeCellSpec s;
        s.flow = job.flow;
        s.d = cfg.d;
        s.nu = cfg.nu;
        s.seed = job.seed;
        s.n = cfg.n;
        s.train = cfg.train;
        s.arch = arch_options(cfg);
        auto r = experiments::run_de_cell(s);
        rows[i] = std::move(r.rows);
        lambdas[i] = std::move(r.lambdas);
        error = r.error;
        diverged = r.diverged;
        model = std::move(r.model);
        training = std::move(r.training);
        break;
      }
      case Command::de_csv: {
        experiments::DataCellSpec s;
        s.flow = job.flow;
        s.seed = job.seed;
        s.train = cfg.train;
        s.arch = arch_options(cfg);
        s.bootstrap_reps = cfg.bootstrap_reps;
        auto r = experiments::run_de_data_cell(s, *data);
        rows[i] = std::move(r.rows);
        lambdas[i] = std::move(r.lambdas);
        error = r.error;
        diverged = r.diverged;
        model = std::move(r.model);
        training = std::move(r.training);
        break;
      }
      case Command::vi_synth: {
        experiments::ViCellSpec s;
        s.flow = job.flow;
        s.d = cfg.d;
        s.nu = cfg.nu;
        s.seed = job.seed;
        s.train = cfg.train;
        s.arch = arch_options(cfg);
        s.diagnostic_samples = cfg.diagnostic_samples;
        auto r = experiments::run_vi_cell(s);
        rows[i] = std::move(r.rows);
        lambdas[i] = std::move(r.lambdas);
        error = r.error;
        diverged = r.diverged;
        model = std::move(r.model);
        training = std::move(r.training);
        break;
      }
      case Command::nnreg: {
        experiments::NnregCellSpec s;
        s.d = cfg.d;
        s.nu = cfg.nu;
        s.seed = job.seed;
        s.n = cfg.n;
        s.mlp.activation = job.activation;
        s.mlp.hidden = cfg.hidden ? cfg.hidden : 50;
        s.mlp.learning_rate = cfg.train.learning_rate;
        s.mlp.batch_size = cfg.train.batch_size;
        s.mlp.max_epochs = cfg.train.max_epochs;
        s.mlp.patience = cfg.train.patience;
        rows[i] = experiments::run_nnreg_cell(s);
        label = rows[i].front().flow;
        diverged = rows[i].front().diverged;
        break;
      }
      case Command::tail_est:
        break;
    }
    const Job named{label, job.activation, job.seed};
    if (cfg.trace && training) train::write_trace_csv(*training, (dir / "traces" / (stem(named) + ".csv")).string());
    if (cfg.save_models && model) flows::save_model(*model, (dir / "models" / (stem(named) + ".model")).string());

    std::lock_guard lock(log_mu);
    const ResultRow& head = rows[i].front();
    log << label << " seed " << job.seed << ": " << head.metric << " = " << flows::format_double(head.value)
        << (diverged ? "  [diverged]" : "");
    if (!error.empty()) {
      log << "  error: " << error;
      ++failures;
    }
    log << '\n';
  });

  std::vector<ResultRow> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  {
    auto out = open_out(dir / "results.csv");
    experiments::write_results(out, all);
  }
  std::vector<experiments::LambdaRow> all_lambdas;
  for (auto& l : lambdas) all_lambdas.insert(all_lambdas.end(), l.begin(), l.end());
  if (!all_lambdas.empty()) {
    auto out = open_out(dir / "lambdas.csv");
    experiments::write_lambdas(out, all_lambdas);
  }

  auto out = open_out(dir / "summary.csv");
  out << "flow,d,nu,metric_name,runs,diverged,mean,se,median,max\n";
  log << "\nsummary\n";
  for (const auto& c : experiments::aggregate(all)) {
    out << c.flow << ',' << c.d << ',' << flows::format_double(c.nu) << ',' << c.metric << ',' << c.runs << ','
        << c.diverged << ',' << flows::format_double(c.mean) << ',' << flows::format_double(c.se) << ','
        << flows::format_double(c.median) << ',' << flows::format_double(c.max) << '\n';
    char buf[200];
    std::snprintf(buf, sizeof buf, "  %-14s %-18s %s  median %.4g  max %.4g  (%zu runs, %zu diverged)\n",
                  c.flow.c_str(), c.metric.c_str(), c.display(4).c_str(), c.median, c.max, c.runs, c.diverged);
    log << buf;
  }
  return failures == 0 ? 0 : 2;
}

}  // namespace tailflow::cli
