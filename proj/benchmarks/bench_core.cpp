#include <benchmark/benchmark.h>

#include "fmlp/data.hpp"
#include "fmlp/rng.hpp"
#include "fmlp/train.hpp"

using namespace fmlp;

namespace {

LabeledDataset waveform_sample(int per_class) {
  WaveSpec spec;
  spec.n_per_class = per_class;
  spec.seed = 1;
  return gen_waveform(spec);
}

MlpParams bench_net(int k, int d, int o) {
  Rng rng(7);
  MlpParams net;
  net.hidden_w = Eigen::MatrixXd::NullaryExpr(k, d, [&](int) { return rng.uniform(-1, 1); });
  net.hidden_b = Eigen::VectorXd::NullaryExpr(k, [&](int) { return rng.uniform(-1, 1); });
  net.output_w = Eigen::MatrixXd::NullaryExpr(o, k, [&](int) { return rng.uniform(-1, 1); });
  net.output_b = Eigen::VectorXd::NullaryExpr(o, [&](int) { return rng.uniform(-1, 1); });
  return net;
}

void BM_EvalBasis(benchmark::State& state) {
  const BSplineBasis basis = make_basis(static_cast<int>(state.range(0)), 4, {1.0, 21.0});
  Rng rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(basis.eval(rng.uniform(1.0, 21.0)));
  }
}
BENCHMARK(BM_EvalBasis)->Arg(5)->Arg(20);

void BM_FitCoefficients(benchmark::State& state) {
  const BSplineBasis basis = make_basis(static_cast<int>(state.range(0)), 4, {1.0, 21.0});
  const LabeledDataset ds = waveform_sample(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_coefficients(basis, ds.functions[0]));
  }
}
BENCHMARK(BM_FitCoefficients)->Arg(5)->Arg(20);

void BM_GramMatrix(benchmark::State& state) {
  const BSplineBasis basis = make_basis(static_cast<int>(state.range(0)), 4, {1.0, 21.0});
  const Measure mu = Measure::uniform(basis.domain());
  for (auto _ : state) {
    benchmark::DoNotOptimize(gram_matrix(basis, mu));
  }
}
BENCHMARK(BM_GramMatrix)->Arg(5)->Arg(20);

void BM_ForwardFmlp(benchmark::State& state) {
  const BSplineBasis basis = make_basis(7, 4, {1.0, 21.0});
  const FunctionalMLP model{basis, bench_net(3, 7, 3), 0};
  const LabeledDataset ds = waveform_sample(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_fmlp(model, ds.functions[0]));
  }
}
BENCHMARK(BM_ForwardFmlp);

void BM_MomentFeatures(benchmark::State& state) {
  const BSplineBasis basis = make_basis(7, 4, {1.0, 21.0});
  const LabeledDataset ds = waveform_sample(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(moment_features(basis, ds.functions[0]));
  }
}
BENCHMARK(BM_MomentFeatures);

// Loss + gradient on a waveform-sized training fold: the inner loop of
// everything else.
void BM_LossGradient(benchmark::State& state) {
  const BSplineBasis basis = make_basis(7, 4, {1.0, 21.0});
  const LabeledDataset ds = waveform_sample(120);
  const Eigen::MatrixXd features = feature_matrix(Variant::fmlp, &basis, ds);
  const int k = static_cast<int>(state.range(0));
  Rng rng(11);
  Eigen::VectorXd x = init_parameters(k, 7, 3, 1.0, rng);
  Eigen::VectorXd grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(core_objective(features, ds.targets, 1e-3, k, x, &grad));
  }
  state.SetItemsProcessed(state.iterations() * ds.size());
}
BENCHMARK(BM_LossGradient)->Arg(2)->Arg(4);

void BM_TrainSmall(benchmark::State& state) {
  const BSplineBasis basis = make_basis(5, 4, {1.0, 21.0});
  const LabeledDataset ds = waveform_sample(30);
  VariantSpec spec{Variant::fmlp, 2, basis};
  TrainConfig config;
  config.restarts = 2;
  config.max_iters = 100;
  config.seed = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(spec, ds, config));
  }
}
BENCHMARK(BM_TrainSmall)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
