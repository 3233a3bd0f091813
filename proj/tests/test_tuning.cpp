#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ieoml/tuning.hpp"
#include "support.hpp"

using namespace ieo;

namespace {

struct Data {
  EncodedMatrix x;
  std::vector<double> y;
};

Data synthetic(std::size_t n, std::uint64_t seed, double corrupt = 0.0) {
  SynthConfig c;
  c.n = n;
  c.seed = seed;
  c.corrupt_fraction = corrupt;
  c.effects = {{"incident_type", std::string("crash"), 0.5, std::nullopt}, {"lanes_affected", std::nullopt, 0.3, std::nullopt}};
  const auto d = synthesize(c);
  return {encode(d), d.durations()};
}

HyperSpace small_space() {
  HyperSpace s;
  s.model.max_depth = {2, 4};
  s.model.n_rounds = {10, 30};
  s.model.n_trees = {10, 20};
  s.orm.n_trees = {20, 40};
  s.orm.subsample_size = {32, 64};
  return s;
}

}  // namespace

TEST_CASE("fold_indexes") {
  auto f0 = fold_indexes(500, 5, 0);
  CHECK(f0.test.front() == 0);
  CHECK(f0.test.back() == 99);
  CHECK(f0.test.size() == 100);
  auto f1 = fold_indexes(500, 5, 1);
  CHECK(f1.test.front() == 100);
  CHECK(f1.test.back() == 199);
  CHECK(f1.train.size() == 400);
  CHECK(f1.train[99] == 99);
  CHECK(f1.train[100] == 200);
  for (std::size_t k = 0; k < 7; ++k) CHECK(fold_indexes(7, 7, k).test == std::vector<std::size_t>{k});

  std::vector<int> seen(103, 0);
  for (std::size_t k = 0; k < 10; ++k)
    for (auto i : fold_indexes(103, 10, k).test) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(fold_indexes(3, 4, 0), PreconditionError);
  CHECK_THROWS_AS(fold_indexes(10, 5, 5), PreconditionError);
}

TEST_CASE("sample_draw is deterministic and inside its ranges") {
  const auto space = small_space();
  for (std::size_t i = 0; i < 50; ++i) {
    const auto a = sample_draw(space, OrmMode::Intra, 5, 42, i);
    const auto b = sample_draw(space, OrmMode::Intra, 5, 42, i);
    CHECK(a.model_params == b.model_params);
    CHECK(a.orm_params == b.orm_params);
    CHECK(a.model_params.learning_rate >= 0.01);
    CHECK(a.model_params.learning_rate <= 0.3);
    CHECK(a.model_params.max_depth >= 2);
    CHECK(a.model_params.max_depth <= 4);
    CHECK(a.model_params.ridge >= 1e-6);
    CHECK(a.model_params.ridge <= 10.0);
    CHECK(a.orm_params.percent_removed <= 0.05 + 1e-15);
    const auto grid = intra_percent_grid(5);
    CHECK(std::find(grid.begin(), grid.end(), a.orm_params.percent_removed) != grid.end());
    // model parameters do not depend on the outlier mode
    CHECK(sample_draw(space, OrmMode::Extra, 5, 42, i).model_params == a.model_params);
    CHECK(sample_draw(space, OrmMode::None, 5, 42, i).orm_params.percent_removed == 0.0);
  }

  HyperSpace point;
  point.model.max_depth = {3, 3};
  point.model.learning_rate = {0.07, 0.07, true};
  point.model.ridge = {0.5, 0.5, true};
  point.orm.extra_percent_grid = {0.02};
  const auto d = sample_draw(point, OrmMode::Extra, 5, 1, 9);
  CHECK(d.model_params.max_depth == 3);
  CHECK(d.model_params.learning_rate == 0.07);
  CHECK(d.model_params.ridge == 0.5);
  CHECK(d.orm_params.percent_removed == 0.02);

  const auto grid = intra_percent_grid(5);
  REQUIRE(grid.size() == 6);
  for (std::size_t j = 0; j < 6; ++j) CHECK(grid[j] == doctest::Approx(0.01 * static_cast<double>(j)).epsilon(1e-12));
  nlohmann::json j = space;
  const auto back = j.get<HyperSpace>();
  CHECK(sample_draw(back, OrmMode::Intra, 5, 42, 3).model_params == sample_draw(space, OrmMode::Intra, 5, 42, 3).model_params);
}

TEST_CASE("extra mode at zero percent reproduces plain cross-validation") {
  const auto data = synthetic(300, 3);
  CvPlan plan;
  plan.mode = OrmMode::Extra;
  plan.iterations = 1;
  plan.seed = 5;
  auto draw = sample_draw(small_space(), OrmMode::Extra, plan.folds, plan.seed, 0);
  draw.orm_params.percent_removed = 0.0;
  for (auto kind : {ModelKind::Gbt, ModelKind::RandomForest, ModelKind::Knn}) {
    const auto result = run_ieo_with_draws(data.x, data.y, kind, plan, {draw}, Metric::Mape);
    const auto part = data.x.select_rows(result.part_indices);
    const std::vector<double> part_y(data.y.begin(), data.y.begin() + static_cast<long>(result.part_indices.size()));
    const auto plain = cross_val_predict(part, part_y, kind, draw.model_params, plan.folds, {});
    CHECK(result.oof_predictions == plain);
  }
}

TEST_CASE("intra and extra remove comparable counts") {
  const auto data = synthetic(400, 4);
  for (std::size_t folds : {3u, 5u, 10u}) {
    for (std::size_t level = 0; level <= folds; ++level) {
      CvPlan plan;
      plan.folds = folds;
      plan.seed = 8;
      auto draw = sample_draw(small_space(), OrmMode::Intra, folds, plan.seed, level);
      draw.model_params.n_rounds = 5;
      draw.orm_params.percent_removed = intra_percent_grid(folds)[level];
      plan.mode = OrmMode::Intra;
      const auto intra = evaluate_draw(data.x, data.y, ModelKind::Gbt, plan, draw, Metric::Mape);
      plan.mode = OrmMode::Extra;
      const auto extra = evaluate_draw(data.x, data.y, ModelKind::Gbt, plan, draw, Metric::Mape);
      const auto diff = static_cast<long>(intra.removed_total) - static_cast<long>(extra.removed_total);
      CAPTURE(folds);
      CAPTURE(level);
      CHECK(std::abs(diff) <= static_cast<long>(folds));
      CHECK(extra.removed_total == removal_count(draw.orm_params.percent_removed, 400));
    }
  }
}

TEST_CASE("intra mode never lets a test fold influence its own predictions") {
  auto data = synthetic(250, 6);
  CvPlan plan;
  plan.mode = OrmMode::Intra;
  plan.seed = 12;
  auto draw = sample_draw(small_space(), OrmMode::Intra, 5, 12, 0);
  draw.orm_params.percent_removed = 0.05;
  const auto before = evaluate_draw(data.x, data.y, ModelKind::Gbt, plan, draw, Metric::Mape);
  const auto fold0 = fold_indexes(250, 5, 0);
  for (auto i : fold0.test) data.y[i] *= 50.0;
  const auto after = evaluate_draw(data.x, data.y, ModelKind::Gbt, plan, draw, Metric::Mape);
  for (auto i : fold0.test) CHECK(after.predictions[i] == before.predictions[i]);
  // the same edit does reach the other folds' predictions through training
  bool changed = false;
  for (auto i : fold0.train) changed |= after.predictions[i] != before.predictions[i];
  CHECK(changed);
}

TEST_CASE("run_ieo bookkeeping, selection and determinism") {
  const auto data = synthetic(300, 7);
  CvPlan plan;
  plan.mode = OrmMode::Intra;
  plan.iterations = 6;
  plan.seed = 21;
  const auto r1 = run_ieo(data.x, data.y, ModelKind::Gbt, plan, small_space(), Metric::Mape);
  CHECK(r1.part_indices.size() == 240);
  CHECK(r1.validation_indices.size() == 60);
  CHECK(r1.oof_predictions.size() == 240);
  CHECK(r1.trace.size() == 6);
  REQUIRE(r1.validation_metric.has_value());
  double best = r1.trace[0].metric;
  std::size_t arg = 0;
  for (std::size_t i = 1; i < r1.trace.size(); ++i)
    if (r1.trace[i].metric < best) {
      best = r1.trace[i].metric;
      arg = i;
    }
  CHECK(r1.best_metric == best);
  CHECK(r1.best.draw_index == arg);

  plan.workers = 3;
  const auto r2 = run_ieo(data.x, data.y, ModelKind::Gbt, plan, small_space(), Metric::Mape);
  CHECK(r2.oof_predictions == r1.oof_predictions);
  CHECK(r2.validation_predictions == r1.validation_predictions);
  CHECK(to_json(r2).dump() == to_json(r1).dump());
  CHECK(trace_to_csv(r2) == trace_to_csv(r1));
}

TEST_CASE("ties go to the lower draw and failed draws are not fatal") {
  const auto data = synthetic(120, 9);
  CvPlan plan;
  plan.iterations = 3;
  auto good = sample_draw(small_space(), OrmMode::None, 5, 1, 0);
  auto bad = good;
  bad.model_params.learning_rate = 0.0;
  bad.draw_index = 0;
  good.draw_index = 1;
  auto twin = good;
  twin.draw_index = 2;
  const auto r = run_ieo_with_draws(data.x, data.y, ModelKind::Gbt, plan, {bad, good, twin}, Metric::Rmse);
  CHECK(r.trace[0].failed);
  CHECK(std::isinf(r.trace[0].metric));
  CHECK(r.trace[1].metric == r.trace[2].metric);
  CHECK(r.best.draw_index == 1);

  const auto f1 = run_ieo_with_draws(data.x, std::vector<double>(120, 0.0), ModelKind::Gbt,
                                     CvPlan{5, OrmMode::None, 1, 0, {}, Task::Classification}, {bad}, Metric::F1);
  CHECK(f1.trace[0].failed);
  CHECK(f1.best_metric == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(run_ieo_with_draws(data.x, data.y, ModelKind::Gbt, plan, {good}, Metric::F1), PreconditionError);
}

TEST_CASE("log1p on a constant target returns the constant") {
  const auto data = synthetic(100, 10);
  const std::vector<double> y(100, 42.0);
  CvPlan plan;
  plan.transform = TargetTransform::Log1p;
  plan.iterations = 2;
  plan.mode = OrmMode::Extra;
  const auto r = run_ieo(data.x, y, ModelKind::Gbt, plan, small_space(), Metric::Rmse);
  for (double v : r.oof_predictions) CHECK(std::abs(v - 42.0) < 1e-9);
  for (double v : r.validation_predictions) CHECK(std::abs(v - 42.0) < 1e-9);
}

TEST_CASE("iteration curve") {
  CHECK(default_iteration_counts().size() == 10);
  CHECK(default_iteration_counts().front() == 25);
  CHECK(default_iteration_counts().back() == 250);
  const auto data = synthetic(120, 11);
  CvPlan plan;
  plan.seed = 3;
  const std::vector<ModelKind> kinds{ModelKind::Tree, ModelKind::Knn};
  const std::vector<std::size_t> counts{2, 4, 6, 8};
  const auto curve = iteration_curve(data.x, data.y, kinds, counts, plan, Metric::Mape);
  REQUIRE(curve.size() == 8);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].kind != curve[i - 1].kind) continue;
    CHECK(curve[i].best_metric <= curve[i - 1].best_metric);
    CHECK(curve[i].seconds > curve[i - 1].seconds);
  }
  for (const auto& p : curve) CHECK(p.seconds > 0.0);
}
