#include <map>

#include <benchmark/benchmark.h>

#include "ieoml/dataset.hpp"
#include "ieoml/models.hpp"
#include "ieoml/outliers.hpp"
#include "ieoml/tuning.hpp"

namespace {

struct Fixture {
  ieo::EncodedMatrix x;
  std::vector<double> y;
};

const Fixture& data(std::size_t n) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  ieo::SynthConfig cfg;
  cfg.n = n;
  cfg.seed = 3;
  cfg.sigma = 0.8;
  cfg.noise_features = 4;
  cfg.effects = {{"incident_type", "fire", 1.0, std::nullopt}, {"lanes_affected", std::nullopt, 0.3, std::nullopt}};
  const auto ds = ieo::synthesize(cfg);
  return cache.emplace(n, Fixture{ieo::encode(ds), ds.durations()}).first->second;
}

void BM_TreeFit(benchmark::State& state) {
  const auto& d = data(state.range(0));
  const auto params = ieo::default_params(ieo::ModelKind::Tree);
  for (auto _ : state) benchmark::DoNotOptimize(ieo::fit_tree(d.x, d.y, params));
}
BENCHMARK(BM_TreeFit)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);

void BM_GbtFit(benchmark::State& state) {
  const auto& d = data(state.range(0));
  auto params = ieo::default_params(ieo::ModelKind::Gbt);
  params.n_rounds = 50;
  for (auto _ : state)
    benchmark::DoNotOptimize(ieo::fit_gbt(d.x, d.y, params, ieo::BoostingVariant::FirstOrder));
}
BENCHMARK(BM_GbtFit)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_IsolationForest(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ieo::isolation_forest_scores(d.x, 100, 256, 1));
}
BENCHMARK(BM_IsolationForest)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_Lof(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ieo::lof_scores(d.x, 20));
}
BENCHMARK(BM_Lof)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_KnnPredict(benchmark::State& state) {
  const auto& d = data(state.range(0));
  const auto model = ieo::fit_knn(d.x, d.y, ieo::default_params(ieo::ModelKind::Knn));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(d.x));
}
BENCHMARK(BM_KnnPredict)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_IeoDraw(benchmark::State& state) {
  const auto& d = data(2000);
  ieo::CvPlan plan;
  plan.folds = 5;
  plan.mode = static_cast<ieo::OrmMode>(state.range(0));
  plan.transform = ieo::TargetTransform::Log1p;
  const ieo::HyperSpace space;
  const auto draw = ieo::sample_draw(space, plan.mode, plan.folds, 9, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(ieo::evaluate_draw(d.x, d.y, ieo::ModelKind::Tree, plan, draw, ieo::Metric::Mape));
}
BENCHMARK(BM_IeoDraw)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
