#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ieoml/outliers.hpp"
#include "lof_oracle.hpp"
#include "support.hpp"

using namespace ieo;

namespace {

Matrix permuted(const Matrix& x, const std::vector<std::size_t>& order) { return x.select_rows(order); }

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  auto order = iota_indices(n);
  auto rng = make_rng(seed, {0x5f});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> ranks(const std::vector<double>& v) {
  auto order = iota_indices(v.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
  return r;
}

}  // namespace

TEST_CASE("average path length") {
  CHECK(average_path_length(1) == 0.0);
  CHECK(average_path_length(2) == 1.0);
  CHECK(average_path_length(256) == doctest::Approx(2.0 * (std::log(255.0) + 0.5772156649015329) - 2.0 * 255.0 / 256.0));
  double h = 0;
  for (int i = 1; i <= 255; ++i) h += 1.0 / i;
  CHECK(average_path_length(256) == doctest::Approx(2.0 * h - 2.0 * 255.0 / 256.0).epsilon(1e-3));
}

TEST_CASE("isolation forest: symmetric and duplicate inputs") {
  const auto two = isolation_forest_scores(testing::from_rows({{0, 0}, {3, 1}}).values, 50, 256, 1);
  CHECK(two.scores[0] == two.scores[1]);

  auto m = testing::gaussian_matrix(60, 2, 3);
  for (std::size_t c = 0; c < 2; ++c) m(7, c) = m(21, c);
  const auto s = isolation_forest_scores(m, 100, 256, 9);
  CHECK(s.scores[7] == s.scores[21]);
  for (double v : s.scores) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("isolation forest and LOF flag a far point") {
  auto m = testing::gaussian_matrix(501, 2, 4);
  m(500, 0) = 100;
  m(500, 1) = 100;
  const auto s = isolation_forest_scores(m, 200, 256, 4);
  CHECK(std::max_element(s.scores.begin(), s.scores.end()) - s.scores.begin() == 500);
  const auto l = lof_scores(m, 20);
  CHECK(std::max_element(l.scores.begin(), l.scores.end()) - l.scores.begin() == 500);
}

TEST_CASE("LOF on hand-checkable inputs") {
  std::vector<std::vector<double>> grid;
  for (int i = 0; i < 11; ++i) grid.push_back({static_cast<double>(i)});
  const auto g = lof_scores(testing::from_rows(grid).values, 2);
  for (int i = 3; i <= 7; ++i) CHECK(g.scores[static_cast<std::size_t>(i)] == doctest::Approx(1.0).epsilon(1e-9));

  const auto s = lof_scores(testing::from_rows({{0}, {1}, {2}, {50}}).values, 2);
  CHECK(std::max_element(s.scores.begin(), s.scores.end()) - s.scores.begin() == 3);
  CHECK(s.scores[3] > 1.0);
  // k-distances 2, 1, 2, 49; lrd(1) = 1/2, lrd(2) = 2/3, lrd(50) = 1/48.5
  CHECK(s.scores[3] == doctest::Approx((2.0 / 3.0 + 0.5) / 2.0 * 48.5).epsilon(1e-12));

  CHECK_THROWS_AS(lof_scores(testing::from_rows({{0}, {1}}).values, 2), PreconditionError);
  CHECK_THROWS_AS(lof_scores(testing::from_rows({{0}, {1}, {2}}).values, 1), PreconditionError);
}

TEST_CASE("LOF matches the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_rng(seed, {0x10f});
    const std::size_t n = 10 + uniform_index(rng, 120);
    const std::size_t d = 1 + uniform_index(rng, 3);
    const int k = static_cast<int>(2 + uniform_index(rng, std::min<std::size_t>(15, n - 3)));
    const auto x = testing::gaussian_matrix(n, d, seed + 1000);
    const auto got = lof_scores(x, k).scores;
    const auto want = testing::brute_lof(x, k);
    for (std::size_t i = 0; i < n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
  }
}

TEST_CASE("LOF caps densities of coincident neighbourhoods") {
  const auto x = testing::from_rows({{0}, {0}, {0}, {5}, {6}, {9}}).values;
  const auto s = lof_scores(x, 2);
  CHECK(s.capped_densities == 3);
  for (double v : s.scores) CHECK(std::isfinite(v));
}

TEST_CASE("scores are permutation-equivariant") {
  const auto x = testing::gaussian_matrix(120, 3, 17);
  const auto order = shuffled_order(120, 17);
  const auto px = permuted(x, order);
  const auto a = isolation_forest_scores(x, 50, 64, 5).scores;
  const auto b = isolation_forest_scores(px, 50, 64, 5).scores;
  const auto la = lof_scores(x, 10).scores;
  const auto lb = lof_scores(px, 10).scores;
  for (std::size_t i = 0; i < order.size(); ++i) {
    CHECK(b[i] == a[order[i]]);
    CHECK(lb[i] == doctest::Approx(la[order[i]]).epsilon(1e-12));
  }
}

TEST_CASE("isolation forest ranks are stable under scaling") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = testing::gaussian_matrix(200, 3, seed);
    Matrix scaled = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) scaled(r, c) = 10.0 * x(r, c);
    const auto a = isolation_forest_scores(x, 100, 128, seed).scores;
    const auto b = isolation_forest_scores(scaled, 100, 128, seed).scores;
    CHECK(pearson(ranks(a), ranks(b)) >= 0.99);
  }
}

TEST_CASE("remove_top_percent and remove_top_count") {
  AnomalyScores s;
  s.scores = {0.9, 0.1, 0.5};
  CHECK(remove_top_percent(s, 1.0 / 3.0) == std::vector<std::size_t>{1, 2});
  CHECK(remove_top_percent(s, 0.0) == std::vector<std::size_t>{0, 1, 2});
  AnomalyScores tie;
  tie.scores = {0.5, 0.7, 0.5, 0.5};
  CHECK(remove_top_count(tie, 2) == std::vector<std::size_t>{2, 3});
  AnomalyScores big;
  big.scores.resize(1000);
  for (std::size_t i = 0; i < 1000; ++i) big.scores[i] = std::sin(static_cast<double>(i));
  CHECK(remove_top_percent(big, 0.05).size() == 950);
  CHECK_THROWS_AS(remove_top_percent(s, 1.5), PreconditionError);
}

TEST_CASE("removed records are scattered across duration quartiles") {
  SynthConfig c;
  c.n = 1000;
  c.seed = 23;
  const auto d = synthesize(c);
  const auto x = encode(d);
  const auto& y = d.durations();
  const auto scores = isolation_forest_scores(orm_input(x.values, y, OrmMethod::IsolationForest), 100, 256, 23);
  const auto kept = remove_top_percent(scores, 0.10);
  std::vector<char> keep(y.size(), 0);
  for (auto i : kept) keep[i] = 1;
  const double q[] = {quantile(y, 0.25), quantile(y, 0.5), quantile(y, 0.75)};
  bool hit[4] = {false, false, false, false};
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (keep[i]) continue;
    const int bin = y[i] <= q[0] ? 0 : y[i] <= q[1] ? 1 : y[i] <= q[2] ? 2 : 3;
    hit[bin] = true;
  }
  CHECK(hit[0] + hit[1] + hit[2] + hit[3] >= 3);
}

TEST_CASE("apply_orm honours the count and is deterministic") {
  const auto x = testing::gaussian_matrix(200, 3, 31);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 10 + x(i, 0);
  for (auto method : {OrmMethod::IsolationForest, OrmMethod::Lof}) {
    OrmParams p;
    p.method = method;
    p.percent_removed = 0.05;
    const auto kept = apply_orm(x, y, p, 10, 99);
    CHECK(kept.size() == 190);
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    CHECK(kept == apply_orm(x, y, p, 10, 99));
    CHECK(apply_orm(x, y, p, 0, 99).size() == 200);
  }
  OrmParams bad;
  bad.percent_removed = 0.06;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  CHECK(orm_method_from_string("if") == OrmMethod::IsolationForest);
  nlohmann::json j = OrmParams{};
  CHECK(j.get<OrmParams>() == OrmParams{});
}
