#include <benchmark/benchmark.h>

#include "../tests/fixtures.hpp"
#include "rehabxai/explain.hpp"

namespace rx = rehabxai;
using rx::Exec;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::kParallel : Exec::kSerial; }

void BM_DistancesTo(benchmark::State& state) {
  const auto pts = rx::testing::random_matrix(static_cast<std::size_t>(state.range(1)), 256, 1);
  const auto q = rx::testing::random_vector(256, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rx::kernels::distances_to(q, pts, rx::Metric::kEuclidean, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_DistancesTo)->ArgsProduct({{0, 1}, {300, 3000}});

void BM_PairwiseDistances(benchmark::State& state) {
  const auto pts = rx::testing::random_matrix(300, 64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rx::kernels::pairwise_distances(pts, rx::Metric::kCosine, exec_of(state)));
  }
}
BENCHMARK(BM_PairwiseDistances)->Arg(0)->Arg(1);

void BM_TsneGradient(benchmark::State& state) {
  const auto pts = rx::testing::random_matrix(300, 32, 4);
  const auto P = rx::kernels::tsne_affinities(pts, 30.0, Exec::kSerial);
  const auto Y = rx::testing::random_matrix(300, 2, 5);
  rx::Matrix grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rx::kernels::tsne_gradient(P, Y, 1.0, grad, exec_of(state)));
  }
}
BENCHMARK(BM_TsneGradient)->Arg(0)->Arg(1);

void BM_FirstHiddenActivations(benchmark::State& state) {
  const auto model = rx::testing::random_network(44, 3, 256, 6);
  const auto rows = rx::testing::random_matrix(300, 44, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rx::kernels::first_hidden_activations(model, rows, exec_of(state)));
  }
}
BENCHMARK(BM_FirstHiddenActivations)->Arg(0)->Arg(1);

void BM_ShapleyExact(benchmark::State& state) {
  const auto model = rx::testing::random_network(11, 3, 64, 8);
  const auto x = rx::testing::random_vector(11, 9);
  const std::vector<double> b(11, 0.0);
  rx::ShapleyOptions opts;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(rx::shapley_attribution(model, x, b, opts));
}
BENCHMARK(BM_ShapleyExact)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ShapleySampled(benchmark::State& state) {
  const auto model = rx::testing::random_network(44, 3, 256, 10);
  const auto x = rx::testing::random_vector(44, 11);
  const std::vector<double> b(44, 0.0);
  rx::ShapleyOptions opts;
  opts.mode = rx::ShapleyMode::kSampled;
  opts.n_samples = 256;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(rx::shapley_attribution(model, x, b, opts));
}
BENCHMARK(BM_ShapleySampled)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FeatureExtraction(benchmark::State& state) {
  const auto d = rx::generate_synthetic(rx::SynthConfig{}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(rx::extract_table(d, rx::Component::kRom, exec_of(state)));
}
BENCHMARK(BM_FeatureExtraction)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LosoSmallCohort(benchmark::State& state) {
  const auto d = rx::generate_synthetic(rx::testing::small_config(), 13);
  const auto table = rx::extract_table(d, rx::Component::kComp);
  const auto cfg = rx::ModelConfig::defaults(rx::Component::kComp);
  for (auto _ : state) benchmark::DoNotOptimize(rx::evaluate_loso(table, cfg, exec_of(state)));
}
BENCHMARK(BM_LosoSmallCohort)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
