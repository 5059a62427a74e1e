#include <benchmark/benchmark.h>

#include <vector>

#include "tailflow/diagnostics.hpp"
#include "tailflow/flows/flow_model.hpp"
#include "tailflow/synthetic.hpp"
#include "tailflow/tail_estimation.hpp"
#include "tailflow/tail_transform.hpp"
#include "tailflow/training.hpp"

using namespace tailflow;

namespace {

const ttf::TailParams kParams{0.3, 1.2, 0.7, 0.4};

void BM_TtfForward(benchmark::State& st) {
  double z = -6.0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(ttf::forward(z, kParams));
    z = z > 6.0 ? -6.0 : z + 0.001;
  }
}
BENCHMARK(BM_TtfForward);

void BM_TtfInverse(benchmark::State& st) {
  std::vector<double> xs;
  for (double z = -6.0; z <= 6.0; z += 0.01) xs.push_back(ttf::forward(z, kParams));
  std::size_t i = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(ttf::inverse(xs[i], kParams));
    i = (i + 1) % xs.size();
  }
}
BENCHMARK(BM_TtfInverse);

flows::FlowModel model_for(const std::string& name, std::size_t d) {
  flows::ArchitectureOptions o;
  o.tail_shapes.assign(d, 0.5);
  return flows::build_architecture(name, d, o);
}

void BM_LogProb(benchmark::State& st) {
  const std::size_t d = static_cast<std::size_t>(st.range(0));
  const flows::FlowModel m = model_for("TTF", d);
  Rng rng(1);
  const Matrix x = experiments::sample_synthetic(d, 2.0, 256, rng);
  std::size_t r = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(m.log_prob(x.row(r)));
    r = (r + 1) % x.rows();
  }
}
BENCHMARK(BM_LogProb)->Arg(2)->Arg(5)->Arg(10);

void BM_DensityGradient(benchmark::State& st) {
  const std::size_t d = static_cast<std::size_t>(st.range(0));
  const flows::FlowModel m = model_for("TTF", d);
  Rng rng(2);
  const Matrix x = experiments::sample_synthetic(d, 2.0, 100, rng);
  std::vector<std::size_t> rows(x.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  ad::Tape tape(m.params.values);
  for (auto _ : st) benchmark::DoNotOptimize(train::de_loss_gradient(m, tape, x, rows).loss);
  st.SetItemsProcessed(st.iterations() * static_cast<long>(rows.size()));
}
BENCHMARK(BM_DensityGradient)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_ElboGradient(benchmark::State& st) {
  const flows::FlowModel m = model_for("TTFfix", 5);
  const auto target = experiments::synthetic_target(5, 2.0);
  Rng rng(3);
  ad::Tape tape(m.params.values);
  for (auto _ : st) benchmark::DoNotOptimize(train::elbo_gradient(m, target, 100, rng, tape).elbo);
}
BENCHMARK(BM_ElboGradient)->Unit(benchmark::kMillisecond);

void BM_Khat(benchmark::State& st) {
  Rng rng(4);
  std::vector<double> w(10000);
  for (double& v : w) v = std::exp(rng.normal());
  for (auto _ : st) benchmark::DoNotOptimize(diag::khat(w));
}
BENCHMARK(BM_Khat)->Unit(benchmark::kMillisecond);

void BM_HillDoubleBootstrap(benchmark::State& st) {
  Rng rng(5);
  std::vector<double> x(5000);
  for (double& v : x) v = std::abs(rng.normal()) / std::max(1e-300, std::abs(rng.normal()));
  tailest::DoubleBootstrapOptions o;
  o.repetitions = 100;
  for (auto _ : st) benchmark::DoNotOptimize(tailest::hill_double_bootstrap(x, o).shape);
}
BENCHMARK(BM_HillDoubleBootstrap)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
