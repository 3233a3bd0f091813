#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ieoml/common.hpp"
#include "ieoml/metrics.hpp"

using namespace ieo;

namespace {

// Builds label vectors realising the given confusion counts (positive = 1).
std::pair<std::vector<double>, std::vector<double>> from_counts(std::size_t tp, std::size_t fp, std::size_t fn,
                                                                std::size_t tn) {
  std::vector<double> a, p;
  auto add = [&](std::size_t n, double av, double pv) {
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(av);
      p.push_back(pv);
    }
  };
  add(tp, 1, 1);
  add(fp, 0, 1);
  add(fn, 1, 0);
  add(tn, 0, 0);
  return {a, p};
}

}  // namespace

TEST_CASE("classification metrics on hand-computed cases") {
  const std::vector<double> y{0, 1, 1, 0, 1};
  const auto perfect = classification_metrics(y, y, 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto [a, p] = from_counts(2, 1, 3, 4);
  const auto c = confusion(a, p, 1.0);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 3);
  CHECK(c.tn == 4);
  const auto m = classification_metrics(a, p, 1.0);
  CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.accuracy == doctest::Approx(0.6).epsilon(1e-12));

  const std::vector<double> zeros{0, 0, 0};
  const auto none = classification_metrics(zeros, zeros, 1.0);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 1.0);
}

TEST_CASE("f1_macro") {
  const std::vector<double> classes3{0, 1, 2};
  const std::vector<double> y3{0, 1, 2, 2, 1, 0};
  CHECK(f1_macro(y3, y3, classes3) == 1.0);

  const auto [a, p] = from_counts(3, 3, 3, 3);
  const std::vector<double> classes2{0, 1};
  CHECK(classification_metrics(a, p, 0.0).f1 == doctest::Approx(0.5));
  CHECK(classification_metrics(a, p, 1.0).f1 == doctest::Approx(0.5));
  CHECK(f1_macro(a, p, classes2) == doctest::Approx(0.5).epsilon(1e-12));

  const std::vector<double> balanced{0, 0, 1, 1, 2, 2};
  const std::vector<double> all_zero(6, 0.0);
  CHECK(f1_macro(balanced, all_zero, classes3) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK_THROWS_AS(f1_macro(balanced, all_zero, std::vector<double>{}), PreconditionError);
}

TEST_CASE("mape") {
  CHECK(mape(std::vector<double>{100}, std::vector<double>{110}) == doctest::Approx(10.0).epsilon(1e-12));
  const std::vector<double> a{5, 7, 9};
  CHECK(mape(a, a) == 0.0);
  CHECK(mape(std::vector<double>{50, 200}, std::vector<double>{100, 100}) == doctest::Approx(75.0).epsilon(1e-12));
  CHECK_THROWS_AS(mape(std::vector<double>{0, 1}, std::vector<double>{1, 1}), PreconditionError);

  const auto r = mape_excluding_nonpositive(std::vector<double>{0, 100, 0}, std::vector<double>{3, 110, 2});
  CHECK(r.excluded == 2);
  CHECK(r.evaluated == 1);
  CHECK(r.value == doctest::Approx(10.0));
}

TEST_CASE("rmse") {
  const std::vector<double> a{1, 2, 3};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(rmse(std::vector<double>{10}, std::vector<double>{13}) == doctest::Approx(3.0));
  CHECK_THROWS_AS(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), PreconditionError);
}

TEST_CASE("metric properties: permutation and scale invariance, harmonic mean") {
  auto rng = make_rng(3, {});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(40), p(40), la(40), lp(40);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = 1.0 + 100.0 * uniform01(rng);
      p[i] = 1.0 + 100.0 * uniform01(rng);
      la[i] = static_cast<double>(uniform_index(rng, 2));
      lp[i] = static_cast<double>(uniform_index(rng, 2));
    }
    auto order = iota_indices(a.size());
    std::reverse(order.begin(), order.end());
    std::swap(order[3], order[17]);
    std::vector<double> ap, pp, lap, lpp;
    for (auto i : order) {
      ap.push_back(a[i]);
      pp.push_back(p[i]);
      lap.push_back(la[i]);
      lpp.push_back(lp[i]);
    }
    CHECK(mape(a, p) == doctest::Approx(mape(ap, pp)).epsilon(1e-12));
    CHECK(rmse(a, p) == doctest::Approx(rmse(ap, pp)).epsilon(1e-12));
    const auto m1 = classification_metrics(la, lp, 1.0), m2 = classification_metrics(lap, lpp, 1.0);
    CHECK(m1.f1 == m2.f1);
    CHECK(m1.accuracy == m2.accuracy);

    std::vector<double> as(a), ps(p);
    for (auto& v : as) v *= 7.5;
    for (auto& v : ps) v *= 7.5;
    CHECK(mape(as, ps) == doctest::Approx(mape(a, p)).epsilon(1e-12));

    const auto c = confusion(la, lp, 1.0);
    CHECK(m1.accuracy == static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()));
    if (m1.precision > 0 && m1.recall > 0)
      CHECK(m1.f1 == doctest::Approx(2 * m1.precision * m1.recall / (m1.precision + m1.recall)).epsilon(1e-12));
  }
}

TEST_CASE("evaluate dispatch") {
  CHECK(evaluate(Metric::Rmse, std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(std::sqrt(12.5)));
  CHECK(evaluate(Metric::Mape, std::vector<double>{0, 100}, std::vector<double>{9, 110}) == doctest::Approx(10.0));
  CHECK(evaluate(Metric::F1, std::vector<double>{0, 1, 1}, std::vector<double>{0, 1, 0}) ==
        doctest::Approx(2.0 / 3.0));
  CHECK(metric_from_string(to_string(Metric::F1)) == Metric::F1);
  CHECK(higher_is_better(Metric::F1));
  CHECK_FALSE(higher_is_better(Metric::Mape));
}
