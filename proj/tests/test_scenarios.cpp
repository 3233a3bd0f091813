#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ieoml/labeling.hpp"
#include "ieoml/scenarios.hpp"
#include "ieoml/tuning.hpp"
#include "support.hpp"

using namespace ieo;

namespace {

struct Data {
  EncodedMatrix x;
  std::vector<double> y;
};

Data synthetic(std::size_t n, std::uint64_t seed, bool leak = false) {
  SynthConfig c;
  c.n = n;
  c.seed = seed;
  c.leak_duration = leak;
  c.effects = {{"incident_type", std::string("fire"), 1.0, std::nullopt},
               {"lanes_affected", std::nullopt, 0.4, std::nullopt},
               {"hour", std::nullopt, 0.3, std::nullopt}};
  const auto d = synthesize(c);
  return {encode(d), d.durations()};
}

ModelSpec spec(ModelKind kind) { return {kind, default_params(kind)}; }

EncodedMatrix only_column(const EncodedMatrix& x, const std::string& name) {
  const auto it = std::find(x.feature_names.begin(), x.feature_names.end(), name);
  REQUIRE(it != x.feature_names.end());
  EncodedMatrix out;
  out.values = Matrix(x.rows(), 1);
  out.feature_names = {name};
  out.row_index = x.row_index;
  const auto c = static_cast<std::size_t>(it - x.feature_names.begin());
  for (std::size_t r = 0; r < x.rows(); ++r) out.values(r, 0) = x.values(r, c);
  return out;
}

bool disjoint(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return both.empty();
}

}  // namespace

TEST_CASE("split_ab") {
  const auto s = split_ab(std::vector<double>{10, 45, 50}, 45);
  CHECK(s.a == std::vector<std::size_t>{0, 1});
  CHECK(s.b == std::vector<std::size_t>{2});
  const auto high = split_ab(std::vector<double>{10, 45, 50}, 1000);
  CHECK(high.b_empty());
  CHECK_FALSE(high.a_empty());
  CHECK(scenario_from_string("AlltoB") == Scenario::AlltoB);
  CHECK(all_scenarios().size() == 7);
}

TEST_CASE("scenario index sets") {
  const auto data = synthetic(400, 1);
  const auto split = split_ab(data.y, 40);
  for (auto scenario : all_scenarios()) {
    const auto r = run_scenario(data.x, data.y, {scenario, 40, spec(ModelKind::Tree), 5, {}});
    CAPTURE(to_string(scenario));
    for (const auto& f : r.folds) CHECK(disjoint(f.train, f.test));
    CHECK(std::is_sorted(r.test_indices.begin(), r.test_indices.end()));
    CHECK(r.predictions.size() == r.test_indices.size());
    switch (scenario) {
      case Scenario::AtoB:
        REQUIRE(r.folds.size() == 1);
        CHECK(r.folds[0].train == split.a);
        CHECK(r.test_indices == split.b);
        break;
      case Scenario::BtoA: CHECK(r.test_indices == split.a); break;
      case Scenario::AtoA:
      case Scenario::AlltoA: CHECK(r.test_indices == split.a); break;
      case Scenario::BtoB:
      case Scenario::AlltoB: CHECK(r.test_indices == split.b); break;
      case Scenario::AlltoAll: CHECK(r.test_indices.size() == 400); break;
    }
    if (scenario == Scenario::AtoA)
      for (const auto& f : r.folds)
        for (auto i : f.train) CHECK(data.y[i] <= 40);
  }
}

TEST_CASE("scenarios refuse empty subsets") {
  const auto data = synthetic(100, 2);
  CHECK_THROWS_AS(run_scenario(data.x, data.y, {Scenario::AtoB, 1e6, spec(ModelKind::Tree), 5, {}}), EmptySubsetError);
  CHECK_NOTHROW(run_scenario(data.x, data.y, {Scenario::AtoA, 1e6, spec(ModelKind::Tree), 5, {}}));
  const std::vector<ModelSpec> models{spec(ModelKind::Tree)};
  const auto scenarios = all_scenarios();
  const auto table = run_scenarios(data.x, data.y, 1e6, models, scenarios, 5, {});
  for (const auto& cell : table.cells) {
    const bool needs_b = cell.scenario == Scenario::AtoB || cell.scenario == Scenario::BtoA ||
                         cell.scenario == Scenario::BtoB || cell.scenario == Scenario::AlltoB;
    CHECK(needs_b == !cell.result.has_value());
    if (needs_b) CHECK(cell.error.find(to_string(cell.scenario)) != std::string::npos);
  }
  const auto csv = to_csv(table);
  CHECK(csv.rfind("scenario,tree\nAlltoAll,", 0) == 0);
}

TEST_CASE("leaked duration gives near-zero error in every scenario") {
  const auto data = synthetic(600, 3, true);
  const auto x = only_column(data.x, "leaked_duration");
  ModelSpec linear{ModelKind::Linear, default_params(ModelKind::Linear)};
  linear.params.ridge = 0.0;
  for (auto scenario : all_scenarios()) {
    const auto r = run_scenario(x, data.y, {scenario, 40, linear, 10, {}});
    CAPTURE(to_string(scenario));
    CHECK(r.mape.value < 1e-6);
  }
}

TEST_CASE("quantiled time folding") {
  const auto data = synthetic(503, 4);
  const auto rows = quantiled_time_folding(data.x, data.y, 10, spec(ModelKind::Gbt));
  REQUIRE(rows.size() == 10);
  std::size_t total = 0, lo = 1000, hi = 0;
  for (const auto& r : rows) {
    total += r.size;
    lo = std::min(lo, r.size);
    hi = std::max(hi, r.size);
  }
  CHECK(total == 503);
  CHECK(hi - lo <= 1);
  for (std::size_t g = 1; g < rows.size(); ++g) CHECK(rows[g].min_duration >= rows[g - 1].max_duration);
  const auto worst = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.rmse < b.rmse; });
  CHECK(worst->group == 9);

  const std::vector<double> flat(100, 30.0);
  for (const auto& r : quantiled_time_folding(data.x.select_rows(iota_indices(100)), flat, 10, spec(ModelKind::Tree)))
    CHECK(r.rmse == 0.0);
  CHECK_THROWS_AS(quantiled_time_folding(data.x, data.y, 1000, spec(ModelKind::Tree)), PreconditionError);
}

TEST_CASE("pipeline routing") {
  const auto data = synthetic(500, 5);
  const auto config = default_fusion_config();
  const auto pipeline = fit_pipeline(data.x, data.y, config, 40);
  const auto classes = pipeline.predict_classes(data.x);
  CHECK(pipeline.predict(data.x) == pipeline.predict_routed(data.x, classes));
  const auto as_a = pipeline.predict_routed(data.x, std::vector<double>(500, 0.0));
  const auto as_b = pipeline.predict_routed(data.x, std::vector<double>(500, 1.0));
  const auto routed = pipeline.predict(data.x);
  for (std::size_t i = 0; i < 500; ++i) CHECK(routed[i] == (classes[i] == 0.0 ? as_a[i] : as_b[i]));

  // oracle routing on the training rows mixes the two subset errors
  const auto split = split_ab(data.y, 40);
  const auto truth = binary_labels(data.y, 40);
  const auto oracle = pipeline.predict_routed(data.x, truth);
  double sa = 0, sb = 0;
  for (auto i : split.a) sa += (as_a[i] - data.y[i]) * (as_a[i] - data.y[i]);
  for (auto i : split.b) sb += (as_b[i] - data.y[i]) * (as_b[i] - data.y[i]);
  CHECK(rmse(data.y, oracle) == doctest::Approx(std::sqrt((sa + sb) / 500.0)).epsilon(1e-12));

  CHECK_THROWS_AS(fit_pipeline(data.x, data.y, config, 1e6), EmptySubsetError);
}

TEST_CASE("fusion meta-features") {
  auto data = synthetic(400, 6);
  auto config = default_fusion_config();
  config.meta_folds = 4;
  const auto meta = out_of_fold_meta_features(data.x, data.y, config, 40);
  CHECK(meta.cols() == kMetaFeatureCount);
  CHECK(meta.rows() == 400);

  // meta-features of a meta fold do not see that fold's targets
  const auto fold0 = fold_indexes(400, 4, 0);
  for (auto i : fold0.test) data.y[i] = data.y[i] * 3.0 + 1.0;
  const auto meta2 = out_of_fold_meta_features(data.x, data.y, config, 40);
  for (auto i : fold0.test)
    for (std::size_t c = 0; c < kMetaFeatureCount; ++c) CHECK(meta2.values(i, c) == meta.values(i, c));

  const auto fusion = fit_fusion(data.x, data.y, config, 40);
  CHECK(fusion.meta_features(data.x).cols() == 4);
  CHECK(fusion.predict(data.x).size() == 400);
}

TEST_CASE("meta-regressor given a perfect all-data column tracks it") {
  const auto data = synthetic(300, 7);
  auto rng = make_rng(7, {});
  std::vector<double> cls(300), a(300), b(300);
  for (std::size_t i = 0; i < 300; ++i) {
    cls[i] = static_cast<double>(uniform_index(rng, 2));
    a[i] = data.y[i] + 20 * standard_normal(rng);
    b[i] = data.y[i] + 40 * standard_normal(rng);
  }
  const auto features = build_meta_features(cls, a, b, data.y);
  const auto config = default_fusion_config();
  const auto meta = fit_meta(features, data.y, config.meta);
  const double sd = rmse(data.y, std::vector<double>(300, mean(data.y)));
  CHECK(rmse(data.y, meta.predict(features)) <= 0.01 * sd);
  CHECK_THROWS_AS(build_meta_features(cls, a, b, std::vector<double>(3)), PreconditionError);
}

TEST_CASE("fusion is not worse than the single model") {
  std::vector<double> single, fused;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto data = synthetic(800, 100 + seed);
    auto config = default_fusion_config();
    for (auto* s : {&config.classifier, &config.regressor_a, &config.regressor_b, &config.regressor_all})
      s->params.n_rounds = 40;
    const auto folds = evaluate_composites(data.x, data.y, config, 40, 5);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
      single.push_back(f.single_rmse);
      fused.push_back(f.fusion_rmse);
    }
  }
  CHECK(testing::median_of(fused) <= testing::median_of(single) * 1.05);
}
