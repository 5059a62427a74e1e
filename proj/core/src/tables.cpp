#include "tailflow/tables.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tailflow/comet.hpp"
#include "tailflow/csv.hpp"
#include "tailflow/diagnostics.hpp"
#include "tailflow/flows/serialization.hpp"
#include "tailflow/synthetic.hpp"
#include "tailflow/tail_estimation.hpp"

namespace tailflow::experiments {

using flows::format_double;

void write_results(std::ostream& out, const std::vector<ResultRow>& rows, bool header) {
  if (header) out << kResultsHeader << '\n';
  for (const auto& r : rows)
    out << r.flow << ',' << r.d << ',' << format_double(r.nu) << ',' << r.seed << ',' << r.metric << ','
        << format_double(r.value) << ',' << (r.diverged ? 1 : 0) << '\n';
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = csv::split_line(line);
    if (c.size() != 7) throw std::runtime_error("results csv: bad line '" + line + "'");
    ResultRow r;
    r.flow = c[0];
    r.d = std::stoul(c[1]);
    r.nu = flows::parse_double(c[2]);
    r.seed = std::stoull(c[3]);
    r.metric = c[4];
    r.value = flows::parse_double(c[5]);
    r.diverged = c[6] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_lambdas(std::ostream& out, const std::vector<LambdaRow>& rows) {
  out << "flow,d,nu,seed,dim,lambda_pos,lambda_neg\n";
  for (const auto& r : rows)
    out << r.flow << ',' << r.d << ',' << format_double(r.nu) << ',' << r.seed << ',' << r.dim << ','
        << format_double(r.lambda_pos) << ',' << format_double(r.lambda_neg) << '\n';
}

namespace {

std::vector<LambdaRow> lambda_rows(const flows::FlowModel& m, const std::string& flow, std::size_t d, double nu,
                                   std::uint64_t seed) {
  std::vector<LambdaRow> out;
  const auto tp = m.tail_params();
  for (std::size_t j = 0; j < tp.size(); ++j) out.push_back({flow, d, nu, seed, j, tp[j].lambda_pos, tp[j].lambda_neg});
  return out;
}

bool needs_known_tails(const std::string& flow) { return flow == "TTFfix" || flow == "mTAF"; }

}  // namespace

DeCellResult run_de_on_splits(flows::FlowModel model, const Matrix& train, const Matrix& valid, const Matrix& test,
                              const train::TrainConfig& cfg, const std::string& flow, std::size_t d, double nu,
                              std::uint64_t seed) {
  DeCellResult res;
  res.training = train::fit_density(model, train, valid, cfg);
  const double test_nll = train::mean_nll(model, test);
  res.test_nll_per_dim = test_nll / static_cast<double>(d);
  res.diverged = res.training.diverged || !std::isfinite(test_nll) || test_nll > cfg.divergence_threshold;
  auto row = [&](const char* metric, double v) { res.rows.push_back({flow, d, nu, seed, metric, v, res.diverged}); };
  row("test_nll_per_dim", res.test_nll_per_dim);
  row("epochs", static_cast<double>(res.training.epochs_run));
  row("best_epoch", static_cast<double>(res.training.best_epoch));
  res.lambdas = lambda_rows(model, flow, d, nu, seed);
  res.model = std::move(model);
  return res;
}

DeCellResult run_de_cell(const DeCellSpec& spec) {
  try {
    SyntheticDeSpec s;
    s.d = spec.d;
    s.nu = spec.nu;
    s.n = spec.n;
    s.seed = spec.seed;
    const Splits data = gen_synthetic_de(s);

    flows::ArchitectureOptions opt = spec.arch;
    opt.init_seed = mix_seed(spec.seed, 0x696e6974ULL);
    const double shape = 1.0 / spec.nu;
    if (needs_known_tails(spec.flow)) opt.tail_shapes.assign(spec.d, shape);
    if (spec.flow == "COMET") {
      opt.comet_marginals.clear();
      for (std::size_t j = 0; j < spec.d; ++j)
        opt.comet_marginals.push_back(comet::CometMarginal::fit(data.train.column(j), 0.05, shape));
    }
    flows::FlowModel model = flows::build_architecture(spec.flow, spec.d, opt);
    train::TrainConfig cfg = spec.train;
    cfg.seed = mix_seed(spec.seed, 0x66697444ULL);
    DeCellResult res = run_de_on_splits(std::move(model), data.train, data.valid, data.test, cfg, spec.flow, spec.d,
                                        spec.nu, spec.seed);

    double true_nll = 0.0;
    for (std::size_t r = 0; r < data.test.rows(); ++r)
      true_nll -= synthetic_log_density<double>(data.test.row(r), spec.nu);
    res.true_nll_per_dim = true_nll / static_cast<double>(data.test.rows() * spec.d);
    res.rows.push_back({spec.flow, spec.d, spec.nu, spec.seed, "true_nll_per_dim", res.true_nll_per_dim, res.diverged});
    return res;
  } catch (const std::exception& e) {
    DeCellResult res;
    res.diverged = true;
    res.error = e.what();
    res.test_nll_per_dim = std::nan("");
    res.rows.push_back({spec.flow, spec.d, spec.nu, spec.seed, "test_nll_per_dim", res.test_nll_per_dim, true});
    return res;
  }
}

DeCellResult run_de_data_cell(const DataCellSpec& spec, const Matrix& data) {
  const std::size_t d = data.cols();
  try {
    if (data.rows() < 10) throw std::invalid_argument("dataset needs at least 10 rows");
    std::vector<std::size_t> order(data.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(spec.seed, 0x73706c74ULL));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const std::size_t n_train = (data.rows() * 2) / 5;
    const std::size_t n_valid = data.rows() / 5;
    auto take = [&](std::size_t from, std::size_t to) {
      Matrix m(to - from, d);
      for (std::size_t r = from; r < to; ++r)
        for (std::size_t j = 0; j < d; ++j) m(r - from, j) = data(order[r], j);
      return m;
    };
    Matrix train = take(0, n_train), valid = take(n_train, n_train + n_valid), test = take(n_train + n_valid, data.rows());
    const Standardizer st = Standardizer::fit(train, valid);
    st.apply(train);
    st.apply(valid);
    st.apply(test);

    flows::ArchitectureOptions opt = spec.arch;
    opt.init_seed = mix_seed(spec.seed, 0x696e6974ULL);
    if (needs_known_tails(spec.flow) || spec.flow == "COMET") {
      tailest::DoubleBootstrapOptions bo;
      bo.repetitions = spec.bootstrap_reps;
      bo.seed = mix_seed(spec.seed, 0x7461696cULL);
      const tailest::TailEstimate est = tailest::estimate_marginal_tails(train, bo);
      if (spec.flow == "COMET") {
        opt.comet_marginals.clear();
        for (std::size_t j = 0; j < d; ++j)
          opt.comet_marginals.push_back(comet::CometMarginal::fit(train.column(j), 0.05, est.shape[j]));
      } else {
        opt.tail_shapes = est.shape;
      }
    }
    flows::FlowModel model = flows::build_architecture(spec.flow, d, opt);
    train::TrainConfig cfg = spec.train;
    cfg.seed = mix_seed(spec.seed, 0x66697444ULL);
    return run_de_on_splits(std::move(model), train, valid, test, cfg, spec.flow, d, 0.0, spec.seed);
  } catch (const std::exception& e) {
    DeCellResult res;
    res.diverged = true;
    res.error = e.what();
    res.test_nll_per_dim = std::nan("");
    res.rows.push_back({spec.flow, d, 0.0, spec.seed, "test_nll_per_dim", res.test_nll_per_dim, true});
    return res;
  }
}

std::vector<ResultRow> run_nnreg_cell(const NnregCellSpec& spec) {
  const std::string flow = std::string("mlp_") + flows::to_string(spec.mlp.activation);
  Rng rng(mix_seed(spec.seed, 0x6e6e7267ULL));
  const auto train = regression::gen_regression(spec.d, spec.nu, spec.n, rng);
  const auto valid = regression::gen_regression(spec.d, spec.nu, spec.n, rng);
  const auto test = regression::gen_regression(spec.d, spec.nu, spec.n, rng);
  regression::MlpConfig cfg = spec.mlp;
  cfg.seed = mix_seed(spec.seed, 0x6d6c70ULL);
  const auto r = regression::fit_mlp_regressor(train, valid, test, cfg);
  const bool bad = !std::isfinite(r.test_mse);
  return {{flow, spec.d, spec.nu, spec.seed, "test_mse", r.test_mse, bad},
          {flow, spec.d, spec.nu, spec.seed, "epochs", static_cast<double>(r.epochs_run), bad},
          {flow, spec.d, spec.nu, spec.seed, "best_epoch", static_cast<double>(r.best_epoch), bad}};
}

ViCellResult run_vi_cell(const ViCellSpec& spec) {
  ViCellResult res;
  auto row = [&](const char* metric, double v) {
    res.rows.push_back({spec.flow, spec.d, spec.nu, spec.seed, metric, v, res.diverged});
  };
  try {
    flows::ArchitectureOptions opt = spec.arch;
    opt.init_seed = mix_seed(spec.seed, 0x696e6974ULL);
    if (needs_known_tails(spec.flow)) opt.tail_shapes.assign(spec.d, 1.0 / spec.nu);
    if (spec.flow == "COMET") throw std::invalid_argument("COMET needs data and has no VI variant");
    flows::FlowModel model = flows::build_architecture(spec.flow, spec.d, opt);
    const train::LogTarget target = synthetic_target(spec.d, spec.nu);
    train::TrainConfig cfg = spec.train;
    cfg.seed = mix_seed(spec.seed, 0x66697456ULL);
    res.training = train::fit_vi(model, target, cfg);
    res.final_elbo = res.training.trace.empty() ? std::nan("") : res.training.trace.back().train_loss;

    Rng rng(mix_seed(spec.seed, 0x64696167ULL));
    const diag::VIDiagnostics dg = diag::vi_diagnostics(model, target, spec.diagnostic_samples, rng);
    res.ess_efficiency = dg.ess_efficiency;
    res.khat = dg.khat;
    res.diverged = res.training.diverged || !std::isfinite(res.final_elbo);
    row("ess_e", res.ess_efficiency);
    row("khat", res.khat ? *res.khat : std::nan(""));
    row("elbo", res.final_elbo);
    res.lambdas = lambda_rows(model, spec.flow, spec.d, spec.nu, spec.seed);
    res.model = std::move(model);
  } catch (const std::exception& e) {
    res.diverged = true;
    res.error = e.what();
    res.rows.clear();
    row("ess_e", std::nan(""));
    row("khat", std::nan(""));
  }
  return res;
}

std::string CellSummary::display(int precision) const {
  if (diverged > 0 || runs == 0) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f (%.*f)", precision, mean, precision, se);
  return buf;
}

std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<CellSummary> out;
  std::vector<std::vector<double>> values;
  std::map<std::tuple<std::string, std::size_t, double, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.flow, r.d, r.nu, r.metric);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.flow, r.d, r.nu, r.metric});
      values.emplace_back();
    }
    CellSummary& c = out[it->second];
    ++c.runs;
    if (r.diverged) ++c.diverged;
    if (std::isfinite(r.value)) values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& v = values[i];
    CellSummary& c = out[i];
    if (v.empty()) {
      c.mean = c.se = c.median = c.max = std::nan("");
      continue;
    }
    double s = 0.0;
    for (double x : v) s += x;
    c.mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - c.mean) * (x - c.mean);
    c.se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    c.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    c.max = v.back();
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tailflow::experiments
