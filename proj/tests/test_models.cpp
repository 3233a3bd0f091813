#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ieoml/models.hpp"
#include "ieoml/tree.hpp"
#include "support.hpp"

using namespace ieo;

namespace {

ModelParams depth(int d) {
  ModelParams p;
  p.max_depth = d;
  return p;
}

std::vector<double> noisy_target(const Matrix& x, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x7a});
  std::vector<double> y(x.rows());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = 3.0 * x(i, 0) - 2.0 * x(i, 1) * x(i, 1) + std::sin(3.0 * x(i, 2)) + 0.5 * standard_normal(rng);
  return y;
}

double max_abs_leaf(const TrainedModel& m) {
  double worst = 0.0;
  for (const auto& round : std::get<BoostedModel>(m.body()).rounds)
    for (const auto& tree : round)
      for (const auto& node : tree.nodes)
        if (node.is_leaf()) worst = std::max(worst, std::abs(node.value.at(0)));
  return worst;
}

}  // namespace

TEST_CASE("tree: perfect single split") {
  const auto x = testing::from_rows({{0}, {1}});
  const std::vector<double> y{0, 10};
  const auto m = fit_tree(x, y, depth(1));
  const auto p = m.predict_values(testing::from_rows({{-1}, {0}, {0.49}, {0.5}, {1}, {3}}).values);
  CHECK(p == std::vector<double>{0, 0, 0, 10, 10, 10});
  const auto& tree = std::get<TreeModel>(m.body()).tree;
  CHECK(tree.nodes[0].threshold == 0.5);
}

TEST_CASE("tree: constant target gives a single leaf") {
  const auto x = testing::encoded(testing::gaussian_matrix(30, 3, 1));
  const std::vector<double> y(30, 7.25);
  const auto m = fit_tree(x, y, depth(5));
  CHECK(std::get<TreeModel>(m.body()).tree.depth() == 0);
  for (double v : m.predict(x)) CHECK(v == 7.25);
}

TEST_CASE("tree: four plateaus at depth 2 are fitted exactly") {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  const double levels[] = {0, 2, 10, 12};
  for (int i = 0; i < 40; ++i) {
    rows.push_back({static_cast<double>(i)});
    y.push_back(levels[i / 10]);
  }
  const auto x = testing::from_rows(rows);
  const auto m = fit_tree(x, y, depth(2));
  const auto p = m.predict(x);
  double sse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) sse += (p[i] - y[i]) * (p[i] - y[i]);
  CHECK(sse == 0.0);
}

TEST_CASE("tree: classification leaves hold class distributions and min_samples_leaf holds") {
  const auto xm = testing::gaussian_matrix(200, 2, 4);
  std::vector<double> y(200);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xm(i, 0) > 0.3 ? 1.0 : 0.0;
  ModelParams p = depth(4);
  p.min_samples_leaf = 15;
  const auto x = testing::encoded(xm);
  const auto m = fit_tree(x, y, p, {Task::Classification, {}});
  const auto proba = m.predict_proba(xm);
  for (std::size_t i = 0; i < proba.rows(); ++i) CHECK(proba(i, 0) + proba(i, 1) == doctest::Approx(1.0));
  // every leaf has at least 15 training rows
  const auto& tree = std::get<TreeModel>(m.body()).tree;
  std::vector<int> counts(tree.nodes.size(), 0);
  for (std::size_t i = 0; i < xm.rows(); ++i) {
    int node = 0;
    while (!tree.nodes[node].is_leaf())
      node = xm(i, tree.nodes[node].feature) < tree.nodes[node].threshold ? tree.nodes[node].left : tree.nodes[node].right;
    ++counts[node];
  }
  for (std::size_t n = 0; n < tree.nodes.size(); ++n)
    if (tree.nodes[n].is_leaf()) CHECK(counts[n] >= 15);
}

TEST_CASE("gbt: one round at depth 0 with unit rate predicts the mean") {
  const auto x = testing::encoded(testing::gaussian_matrix(50, 3, 2));
  const auto y = noisy_target(x.values, 2);
  ModelParams p;
  p.n_rounds = 1;
  p.max_depth = 0;
  p.learning_rate = 1.0;
  const double mu = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  for (auto kind : {ModelKind::Gbt, ModelKind::GbtReg}) {
    ModelParams q = p;
    q.lambda = 0.0;
    for (double v : fit_model(kind, x, y, q).predict(x)) CHECK(v == doctest::Approx(mu).epsilon(1e-12));
  }
}

TEST_CASE("gbt: training error is non-increasing over rounds") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = testing::encoded(testing::gaussian_matrix(150, 4, seed));
    const auto y = noisy_target(x.values, seed);
    ModelParams p;
    p.n_rounds = 100;
    p.max_depth = 3;
    p.learning_rate = 0.2;
    const auto curve = boosting_training_curve(x, y, p, BoostingVariant::FirstOrder);
    REQUIRE(curve.size() == 100);
    for (std::size_t t = 1; t < curve.size(); ++t) CHECK(curve[t] <= curve[t - 1] + 1e-12);
  }
}

TEST_CASE("gbt-reg: huge lambda shrinks every leaf to zero") {
  const auto x = testing::encoded(testing::gaussian_matrix(120, 3, 8));
  const auto y = noisy_target(x.values, 8);
  ModelParams p;
  p.n_rounds = 20;
  p.max_depth = 3;
  p.lambda = 1e9;
  const auto m = fit_gbt(x, y, p, BoostingVariant::SecondOrderRegularised);
  CHECK(max_abs_leaf(m) < 1e-6);
  const double base = std::get<BoostedModel>(m.body()).base[0];
  for (double v : m.predict(x)) CHECK(v == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("gbt-reg: gamma suppresses low-gain splits") {
  const auto x = testing::encoded(testing::gaussian_matrix(100, 3, 9));
  const auto y = noisy_target(x.values, 9);
  ModelParams p;
  p.n_rounds = 5;
  p.max_depth = 4;
  p.gamma = 1e12;
  const auto m = fit_gbt(x, y, p, BoostingVariant::SecondOrderRegularised);
  for (const auto& round : std::get<BoostedModel>(m.body()).rounds) CHECK(round[0].depth() == 0);
}

TEST_CASE("gbt: classification, GOSS and subsampling are deterministic") {
  const auto xm = testing::gaussian_matrix(300, 4, 12);
  std::vector<double> y(300), y3(300);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = xm(i, 0) + 0.5 * xm(i, 1) > 0 ? 1.0 : 0.0;
    y3[i] = xm(i, 0) < -0.5 ? 0.0 : (xm(i, 0) < 0.5 ? 1.0 : 2.0);
  }
  const auto x = testing::encoded(xm);
  ModelParams p;
  p.n_rounds = 30;
  p.max_depth = 3;
  p.subsample = 0.7;
  p.colsample = 0.75;
  p.goss = GossParams{0.2, 0.2};
  p.seed = 77;
  for (auto kind : {ModelKind::Gbt, ModelKind::GbtReg}) {
    const auto a = fit_model(kind, x, y, p, {Task::Classification, {}});
    const auto b = fit_model(kind, x, y, p, {Task::Classification, {}});
    CHECK(a.predict(x) == b.predict(x));
    const auto pred = a.predict(x);
    std::size_t right = 0;
    for (std::size_t i = 0; i < y.size(); ++i) right += pred[i] == y[i];
    CHECK(right > 250);
    const auto multi = fit_model(kind, x, y3, p, {Task::Classification, {}});
    CHECK(multi.num_classes() == 3);
    const auto mp = multi.predict(x);
    right = 0;
    for (std::size_t i = 0; i < y3.size(); ++i) right += mp[i] == y3[i];
    CHECK(right > 250);
  }
}

TEST_CASE("forest: one unbootstrapped tree equals the single tree") {
  const auto x = testing::encoded(testing::gaussian_matrix(80, 3, 3));
  const auto y = noisy_target(x.values, 3);
  ModelParams p = depth(5);
  p.n_trees = 1;
  p.bootstrap = false;
  p.bootstrap_fraction = 1.0;
  p.feature_fraction = 1.0;
  const auto forest = fit_random_forest(x, y, p);
  const auto tree = fit_tree(x, y, p);
  const auto q = testing::gaussian_matrix(40, 3, 33);
  CHECK(forest.predict_values(q) == tree.predict_values(q));
}

TEST_CASE("forest: prediction variance over seeds falls with more trees") {
  const auto x = testing::encoded(testing::gaussian_matrix(120, 3, 21));
  const auto y = noisy_target(x.values, 21);
  const auto q = testing::gaussian_matrix(20, 3, 22);
  auto spread = [&](int trees) {
    std::vector<std::vector<double>> preds;
    for (std::uint64_t s = 0; s < 12; ++s) {
      ModelParams p = depth(6);
      p.n_trees = trees;
      p.feature_fraction = 0.6;
      p.seed = s;
      preds.push_back(fit_random_forest(x, y, p).predict_values(q));
    }
    double total = 0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
      double m = 0, v = 0;
      for (const auto& pr : preds) m += pr[i];
      m /= static_cast<double>(preds.size());
      for (const auto& pr : preds) v += (pr[i] - m) * (pr[i] - m);
      total += v;
    }
    return total;
  };
  const double v1 = spread(1), v10 = spread(10), v60 = spread(60);
  CHECK(v10 < v1);
  CHECK(v60 < v10);
}

TEST_CASE("forest: tied binary vote returns class 0") {
  const auto x = testing::from_rows({{0}, {1}, {2}, {3}});
  const std::vector<double> y{0, 0, 1, 1};
  ModelParams p = depth(1);
  p.n_trees = 2;
  auto j = fit_random_forest(x, y, p, {Task::Classification, {}}).to_json();
  j["trees"] = nlohmann::json::array({{{"leaf", {0.9, 0.1}}}, {{"leaf", {0.2, 0.8}}}});
  const auto m = TrainedModel::from_json(j);
  CHECK(m.predict(x) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("knn: exact neighbours, k = N and errors") {
  const auto x = testing::encoded(testing::gaussian_matrix(25, 2, 5));
  std::vector<double> y(25);
  std::iota(y.begin(), y.end(), 1.0);
  ModelParams p;
  p.k = 1;
  const auto one = fit_knn(x, y, p);
  CHECK(one.predict(x) == y);
  p.k = 25;
  const auto all = fit_knn(x, y, p);
  for (double v : all.predict_values(testing::gaussian_matrix(5, 2, 6))) CHECK(v == doctest::Approx(13.0));
  p.k = 26;
  CHECK_THROWS_AS(fit_knn(x, y, p), PreconditionError);
}

TEST_CASE("knn matches a brute-force scan with index tie-breaks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_rng(seed, {0x11});
    const std::size_t n = 20 + uniform_index(rng, 180), d = 1 + uniform_index(rng, 4);
    Matrix xm(n, d);
    // coarse grid values force many exact distance ties
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) xm(i, c) = static_cast<double>(uniform_index(rng, 5));
    std::vector<double> y(n);
    for (auto& v : y) v = standard_normal(rng);
    ModelParams p;
    p.k = static_cast<int>(1 + uniform_index(rng, 9));
    const auto m = fit_knn(testing::encoded(xm), y, p);

    std::vector<double> center(d), scale(d);
    for (std::size_t c = 0; c < d; ++c) {
      const auto col = xm.column(c);
      center[c] = mean(col);
      double var = 0;
      for (double v : col) var += (v - center[c]) * (v - center[c]);
      scale[c] = std::sqrt(var / static_cast<double>(n));
      if (scale[c] == 0) scale[c] = 1;
    }
    const auto q = testing::gaussian_matrix(30, d, seed + 100, 2.0);
    const auto got = m.predict_values(q);
    for (std::size_t r = 0; r < q.rows(); ++r) {
      std::vector<std::pair<double, std::size_t>> dist;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = (q(r, c) - center[c]) / scale[c] - (xm(i, c) - center[c]) / scale[c];
          s += diff * diff;
        }
        dist.push_back({s, i});
      }
      std::sort(dist.begin(), dist.end());
      double sum = 0;
      for (int k = 0; k < p.k; ++k) sum += y[dist[static_cast<std::size_t>(k)].second];
      CHECK(got[r] == doctest::Approx(sum / p.k).epsilon(1e-12));
    }
  }
}

TEST_CASE("linear least squares") {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({static_cast<double>(i) * 0.37 - 2.0});
    y.push_back(2.0 * rows.back()[0]);
  }
  ModelParams p;
  p.ridge = 0.0;
  const auto m = fit_linear(testing::from_rows(rows), y, p);
  const auto& w = std::get<LinearModel>(m.body()).weights[0];
  CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(w[0]) < 1e-9);

  // target orthogonal to a centred feature
  const auto x2 = testing::from_rows({{-1}, {1}, {-1}, {1}});
  const std::vector<double> y2{3, 3, 5, 5};
  const auto m2 = fit_linear(x2, y2, p);
  const auto& w2 = std::get<LinearModel>(m2.body()).weights[0];
  CHECK(std::abs(w2[1]) < 1e-9);
  CHECK(w2[0] == doctest::Approx(4.0));

  const auto dup = testing::from_rows({{1, 1}, {2, 2}, {3, 3}});
  CHECK_THROWS_AS(fit_linear(dup, std::vector<double>{1, 2, 3}, p), PreconditionError);
  p.ridge = 1e-3;
  CHECK_NOTHROW(fit_linear(dup, std::vector<double>{1, 2, 3}, p));
}

TEST_CASE("logistic regression separates two points and matches finite differences") {
  const auto x = testing::from_rows({{-1.0}, {1.0}});
  ModelParams p;
  p.ridge = 0.1;
  const auto m = fit_linear(x, std::vector<double>{0, 1}, p, {Task::Classification, {}});
  const auto proba = m.predict_proba(x.values);
  CHECK(proba(0, 1) < 0.5);
  CHECK(proba(1, 1) > 0.5);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = make_rng(seed, {0x10});
    const auto xm = testing::gaussian_matrix(15, 3, seed);
    std::vector<double> y(15), w(4);
    for (auto& v : y) v = static_cast<double>(uniform_index(rng, 2));
    for (auto& v : w) v = standard_normal(rng);
    std::vector<double> grad;
    logistic_objective(xm, y, w, 0.3, &grad);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double h = 1e-6;
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (logistic_objective(xm, y, wp, 0.3, nullptr) - logistic_objective(xm, y, wm, 0.3, nullptr)) / (2 * h);
      CHECK(std::abs(fd - grad[j]) <= 1e-5 * std::max(1.0, std::abs(grad[j])));
    }
  }
}

TEST_CASE("log1p transform round-trips zero and constants") {
  const auto x = testing::encoded(testing::gaussian_matrix(30, 2, 14));
  for (auto kind : {ModelKind::Tree, ModelKind::Gbt, ModelKind::GbtReg, ModelKind::RandomForest, ModelKind::Knn,
                    ModelKind::Linear}) {
    for (double c : {0.0, 37.0}) {
      const std::vector<double> y(30, c);
      ModelParams p = default_params(kind);
      p.ridge = 1e-3;
      const auto m = fit_model(kind, x, y, p, {Task::Regression, TargetTransform::Log1p});
      for (double v : m.predict(x)) CHECK(std::abs(v - c) < 1e-9);
    }
  }
}

TEST_CASE("predict is pure, checks feature names and survives JSON") {
  const auto xm = testing::gaussian_matrix(60, 3, 15);
  const auto x = testing::encoded(xm);
  const auto y = noisy_target(xm, 15);
  std::vector<double> labels(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) labels[i] = y[i] > 0 ? 1.0 : 0.0;
  for (auto kind : {ModelKind::Tree, ModelKind::Gbt, ModelKind::GbtReg, ModelKind::RandomForest, ModelKind::Knn,
                    ModelKind::Linear}) {
    for (auto task : {Task::Regression, Task::Classification}) {
      ModelParams p = default_params(kind);
      p.n_rounds = 10;
      p.n_trees = 10;
      const auto& target = task == Task::Regression ? y : labels;
      const auto m = fit_model(kind, x, target, p, {task, {}});
      const auto first = m.predict(x);
      CHECK(first == m.predict(x));
      CHECK(first == fit_model(kind, x, target, p, {task, {}}).predict(x));
      const auto back = TrainedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
      CHECK(back.predict(x) == first);
      auto renamed = x;
      renamed.feature_names[0] = "other";
      CHECK_THROWS_AS(m.predict(renamed), PreconditionError);
    }
  }
}

TEST_CASE("params validation") {
  ModelParams p;
  p.learning_rate = 0.0;
  CHECK_THROWS_AS(p.validate(ModelKind::Gbt), PreconditionError);
  p = {};
  p.lambda = -1;
  CHECK_THROWS_AS(p.validate(ModelKind::GbtReg), PreconditionError);
  p = {};
  p.n_trees = 0;
  CHECK_THROWS_AS(p.validate(ModelKind::RandomForest), PreconditionError);
  p = {};
  nlohmann::json j = p;
  CHECK(j.get<ModelParams>() == p);
  CHECK(model_kind_from_string("gbt-reg") == ModelKind::GbtReg);
  CHECK_THROWS(model_kind_from_string("svm"));
}
