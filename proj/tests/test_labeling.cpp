#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ieoml/labeling.hpp"
#include "support.hpp"

using namespace ieo;

namespace {

Dataset leaked(std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.n = n;
  c.seed = seed;
  c.leak_duration = true;
  return synthesize(c);
}

std::vector<ClassifierSpec> tree_only() {
  const std::vector<ModelKind> kinds{ModelKind::Tree};
  return default_specs(kinds);
}

}  // namespace

TEST_CASE("binary labels follow the inclusive-left rule") {
  CHECK(binary_labels(std::vector<double>{10, 45, 50}, 45) == std::vector<double>{0, 0, 1});
  CHECK(binary_labels(std::vector<double>{1, 2, 3}, 3) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(binary_labels(std::vector<double>{1}, 0.0), PreconditionError);

  SynthConfig c;
  c.n = 3000;
  c.seed = 2;
  const auto d = synthesize(c);
  const auto labels = binary_labels(d.durations(), 40);
  const auto zeros = std::count(labels.begin(), labels.end(), 0.0);
  CHECK(static_cast<double>(zeros) / 3000.0 == ecdf_at(d.durations(), 40));
}

TEST_CASE("multiclass labels and boundaries") {
  const MultiClassThresholds t{24, 44};
  CHECK(multiclass_labels(std::vector<double>{24, 24.5, 43.9, 44, 700}, t) == std::vector<double>{0, 1, 1, 2, 2});
  CHECK_THROWS_AS(multiclass_labels(std::vector<double>{1}, {44, 24}), PreconditionError);

  auto rng = make_rng(4, {});
  std::vector<double> y(300);
  for (auto& v : y) v = std::exp(3.5 + standard_normal(rng));
  const auto labels = multiclass_labels(y, {quantile(y, 1.0 / 3.0), quantile(y, 2.0 / 3.0)});
  for (double c : {0.0, 1.0, 2.0}) {
    const auto n = std::count(labels.begin(), labels.end(), c);
    CHECK(std::abs(static_cast<double>(n) - 100.0) <= 1.0);
  }
}

TEST_CASE("labels are monotone in duration") {
  auto rng = make_rng(8, {});
  for (int trial = 0; trial < 200; ++trial) {
    const double a = 200 * uniform01(rng), b = a + 200 * uniform01(rng);
    const double t1 = 1 + 100 * uniform01(rng), t2 = t1 + 1 + 100 * uniform01(rng);
    const std::vector<double> pair{a, b};
    const auto bl = binary_labels(pair, t1);
    const auto ml = multiclass_labels(pair, {t1, t2});
    CHECK(bl[0] <= bl[1]);
    CHECK(ml[0] <= ml[1]);
  }
}

TEST_CASE("MUTCD classes") {
  const auto c = mutcd_labels(std::vector<double>{25, 29.9, 30, 120, 120.5, 500});
  CHECK(c == std::vector<MutcdClass>{MutcdClass::Minor, MutcdClass::Minor, MutcdClass::Intermediate,
                                     MutcdClass::Intermediate, MutcdClass::Major, MutcdClass::Major});
  CHECK(to_string(MutcdClass::Major) == "major");
}

TEST_CASE("threshold sweep shape, class balance and leakage sanity") {
  const auto d = leaked(1200, 3);
  const auto report = threshold_sweep(d, tree_only());
  REQUIRE(report.rows.size() == 11);
  std::vector<double> tcs;
  for (const auto& r : report.rows) {
    tcs.push_back(r.tc);
    CHECK(r.evaluable);
    CHECK(r.class_balance == ecdf_at(d.durations(), r.tc));
    CHECK(r.f1 == 1.0);
    CHECK_FALSE(r.below_min_f1);
  }
  CHECK(tcs == default_tc_values());
  const auto csv = to_csv(report);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
  CHECK(to_json(report).at("rows").size() == 11);
}

TEST_CASE("threshold sweep flags unevaluable cells") {
  const auto d = leaked(200, 5);
  SweepOptions o;
  o.tc_values = {1e6, 40};
  const auto report = threshold_sweep(d, tree_only(), o);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].tc == 40);
  CHECK(report.rows[1].tc == 1e6);
  CHECK_FALSE(report.rows[1].evaluable);
  CHECK(report.best()->tc == 40);
}

TEST_CASE("quantile grid") {
  const auto d = leaked(1000, 6);
  const auto grid = quantile_grid(d, tree_only().front());
  REQUIRE(grid.cells.size() == 36);
  for (std::size_t i = 1; i < grid.cells.size(); ++i) {
    const auto& a = grid.cells[i - 1];
    const auto& b = grid.cells[i];
    CHECK((a.q1 < b.q1 || (a.q1 == b.q1 && a.q2 < b.q2)));
  }
  for (const auto& c : grid.cells) {
    CHECK(c.q1 < c.q2);
    if (c.evaluable) CHECK(c.f1_macro >= 0.98);
    CHECK(c.class_counts[0] + c.class_counts[1] + c.class_counts[2] == 1000);
  }
  CHECK(grid.best().has_value());
  CHECK(std::count_if(grid.cells.begin(), grid.cells.end(), [](const GridCell& c) { return c.evaluable; }) >= 30);
}

TEST_CASE("low-duration trimming sweep") {
  SynthConfig c;
  c.n = 1500;
  c.seed = 7;
  c.short_fraction = 0.15;
  const auto d = synthesize(c);
  LdoSweepOptions o;
  o.tc = 40;
  const std::vector<double> thresholds{0, 2, 60};
  const auto r = ldo_hdo_sweep(d, tree_only(), thresholds, o);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].remaining_fraction == 1.0);
  CHECK(r.rows[1].remaining_fraction == doctest::Approx(0.85).epsilon(0.03));
  CHECK(r.rows[2].over_half_removed);
  CHECK_FALSE(r.rows[0].over_half_removed);
  CHECK(r.rows[0].best_kind == ModelKind::Tree);

  LdoSweepOptions high = o;
  high.side = TrimSide::High;
  const auto h = ldo_hdo_sweep(d, tree_only(), std::vector<double>{360}, high);
  CHECK(h.rows[0].remaining_fraction > 0.95);

  const std::vector<double> descending{5, 1};
  CHECK_THROWS_AS(ldo_hdo_sweep(d, tree_only(), descending, o), PreconditionError);
  CHECK(to_csv(r).find("threshold,side,tc") == 0);
}

TEST_CASE("multiclass presets") {
  const auto d = leaked(900, 8);
  const auto x = encode(d);
  const auto scores = multiclass_presets(x, d.durations(), tree_only());
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].preset == MulticlassPreset::EqualSplit);
  CHECK(scores[1].preset == MulticlassPreset::Mutcd);
  for (const auto& s : scores) {
    CHECK(s.class_counts[0] + s.class_counts[1] + s.class_counts[2] == 900);
    if (s.evaluable) CHECK(s.f1_macro >= 0.98);
  }
  const auto labels = mutcd_labels(d.durations());
  CHECK(scores[1].class_counts[0] ==
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), MutcdClass::Minor)));
  const auto csv = to_csv(scores);
  CHECK(csv.rfind("preset,model,t1,t2,f1_macro", 0) == 0);
}
