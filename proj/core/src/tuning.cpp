#include "ieoml/tuning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace ieo {

FoldSplit fold_indexes(std::size_t n, std::size_t folds, std::size_t k) {
  if (folds == 0 || folds > n) throw PreconditionError("fold_indexes: need 1 <= folds <= n");
  if (k >= folds) throw PreconditionError("fold_indexes: fold id out of range");
  const std::size_t begin = k * n / folds;
  const std::size_t end = (k + 1) * n / folds;
  FoldSplit split;
  split.test.reserve(end - begin);
  split.train.reserve(n - (end - begin));
  for (std::size_t i = 0; i < n; ++i) (i >= begin && i < end ? split.test : split.train).push_back(i);
  return split;
}

ModelParams fold_params(const ModelParams& params, std::size_t fold, std::size_t train_rows, ModelKind kind) {
  ModelParams p = params;
  p.seed = stream_seed(params.seed, {static_cast<std::uint64_t>(fold)});
  if (kind == ModelKind::Knn) p.k = std::max(1, std::min(p.k, static_cast<int>(train_rows)));
  return p;
}

namespace {

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

double worst_value(Metric metric) {
  return higher_is_better(metric) ? -std::numeric_limits<double>::infinity()
                                  : std::numeric_limits<double>::infinity();
}

bool better(Metric metric, double a, double b) { return higher_is_better(metric) ? a > b : a < b; }

int draw_int(Rng& rng, IntRange r) {
  if (r.hi <= r.lo) return r.lo;
  return r.lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(r.hi - r.lo) + 1));
}

double draw_real(Rng& rng, RealRange r) {
  const double u = uniform01(rng);
  if (r.hi <= r.lo) return r.lo;
  if (r.log_scale && r.lo > 0.0) {
    const double a = std::log(r.lo), b = std::log(r.hi);
    return std::clamp(std::exp(a + u * (b - a)), r.lo, r.hi);
  }
  return r.lo + u * (r.hi - r.lo);
}

nlohmann::json range_json(const RealRange& r) { return {{"lo", r.lo}, {"hi", r.hi}, {"log_scale", r.log_scale}}; }
nlohmann::json range_json(const IntRange& r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

void read_range(const nlohmann::json& j, const char* key, RealRange& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  r.lo = v.value("lo", r.lo);
  r.hi = v.value("hi", r.hi);
  r.log_scale = v.value("log_scale", r.log_scale);
}

void read_range(const nlohmann::json& j, const char* key, IntRange& r) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  r.lo = v.value("lo", r.lo);
  r.hi = v.value("hi", r.hi);
}

}  // namespace

std::vector<double> cross_val_predict(const EncodedMatrix& x, std::span<const double> y, ModelKind kind,
                                      const ModelParams& params, std::size_t folds, const FitOptions& options) {
  if (x.rows() != y.size()) throw PreconditionError("cross_val_predict: X rows and y length differ");
  std::vector<double> predictions(y.size(), 0.0);
  for (std::size_t k = 0; k < folds; ++k) {
    const auto split = fold_indexes(y.size(), folds, k);
    const auto train_y = gather(y, split.train);
    const auto model =
        fit_model(kind, x.select_rows(split.train), train_y, fold_params(params, k, split.train.size(), kind), options);
    const auto pred = model.predict(x.select_rows(split.test));
    for (std::size_t i = 0; i < split.test.size(); ++i) predictions[split.test[i]] = pred[i];
  }
  return predictions;
}

ModelSpace default_model_space(ModelKind kind) {
  ModelSpace space;
  if (kind == ModelKind::Tree) space.max_depth = {2, 12};
  if (kind == ModelKind::RandomForest) space.max_depth = {4, 14};
  return space;
}

std::vector<double> intra_percent_grid(std::size_t folds) {
  std::vector<double> grid;
  for (std::size_t j = 0; j <= folds; ++j)
    grid.push_back(kMaxRemovedFraction * static_cast<double>(j) / static_cast<double>(folds));
  return grid;
}

std::string to_string(OrmMode mode) {
  switch (mode) {
    case OrmMode::None: return "none";
    case OrmMode::Intra: return "intra";
    case OrmMode::Extra: return "extra";
  }
  return "none";
}

OrmMode orm_mode_from_string(const std::string& text) {
  if (text == "none") return OrmMode::None;
  if (text == "intra") return OrmMode::Intra;
  if (text == "extra") return OrmMode::Extra;
  throw PreconditionError("unknown outlier mode '" + text + "'");
}

void to_json(nlohmann::json& j, const HyperSpace& space) {
  const auto& m = space.model;
  j["model"] = {{"max_depth", range_json(m.max_depth)},
                {"min_samples_leaf", range_json(m.min_samples_leaf)},
                {"n_rounds", range_json(m.n_rounds)},
                {"learning_rate", range_json(m.learning_rate)},
                {"subsample", range_json(m.subsample)},
                {"colsample", range_json(m.colsample)},
                {"lambda", range_json(m.lambda)},
                {"gamma", range_json(m.gamma)},
                {"min_child_weight", range_json(m.min_child_weight)},
                {"n_trees", range_json(m.n_trees)},
                {"bootstrap_fraction", range_json(m.bootstrap_fraction)},
                {"feature_fraction", range_json(m.feature_fraction)},
                {"k", range_json(m.k)},
                {"ridge", range_json(m.ridge)}};
  if (m.goss) j["model"]["goss"] = {{"top_fraction", range_json(m.goss->first)}, {"other_fraction", range_json(m.goss->second)}};
  auto methods = nlohmann::json::array();
  for (auto method : space.orm.methods) methods.push_back(to_string(method));
  j["orm"] = {{"methods", methods},
              {"extra_percent_grid", space.orm.extra_percent_grid},
              {"intra_percent_grid", space.orm.intra_percent_grid},
              {"n_trees", range_json(space.orm.n_trees)},
              {"subsample_size", range_json(space.orm.subsample_size)},
              {"k", range_json(space.orm.k)}};
}

void from_json(const nlohmann::json& j, HyperSpace& space) {
  if (j.contains("model")) {
    const auto& mj = j.at("model");
    auto& m = space.model;
    read_range(mj, "max_depth", m.max_depth);
    read_range(mj, "min_samples_leaf", m.min_samples_leaf);
    read_range(mj, "n_rounds", m.n_rounds);
    read_range(mj, "learning_rate", m.learning_rate);
    read_range(mj, "subsample", m.subsample);
    read_range(mj, "colsample", m.colsample);
    read_range(mj, "lambda", m.lambda);
    read_range(mj, "gamma", m.gamma);
    read_range(mj, "min_child_weight", m.min_child_weight);
    read_range(mj, "n_trees", m.n_trees);
    read_range(mj, "bootstrap_fraction", m.bootstrap_fraction);
    read_range(mj, "feature_fraction", m.feature_fraction);
    read_range(mj, "k", m.k);
    read_range(mj, "ridge", m.ridge);
    if (mj.contains("goss")) {
      std::pair<RealRange, RealRange> g{{0.1, 0.3}, {0.05, 0.2}};
      read_range(mj.at("goss"), "top_fraction", g.first);
      read_range(mj.at("goss"), "other_fraction", g.second);
      m.goss = g;
    }
  }
  if (j.contains("orm")) {
    const auto& oj = j.at("orm");
    auto& o = space.orm;
    if (oj.contains("methods")) {
      o.methods.clear();
      for (const auto& mtext : oj.at("methods")) o.methods.push_back(orm_method_from_string(mtext.get<std::string>()));
    }
    if (oj.contains("extra_percent_grid")) o.extra_percent_grid = oj.at("extra_percent_grid").get<std::vector<double>>();
    if (oj.contains("intra_percent_grid")) o.intra_percent_grid = oj.at("intra_percent_grid").get<std::vector<double>>();
    read_range(oj, "n_trees", o.n_trees);
    read_range(oj, "subsample_size", o.subsample_size);
    read_range(oj, "k", o.k);
  }
}

void to_json(nlohmann::json& j, const HyperDraw& draw) {
  j = nlohmann::json{{"draw_index", draw.draw_index}, {"model_params", draw.model_params}, {"orm_params", draw.orm_params}};
}

HyperDraw sample_draw(const HyperSpace& space, OrmMode mode, std::size_t folds, std::uint64_t seed,
                      std::size_t draw_index) {
  const auto& m = space.model;
  const auto& o = space.orm;
  if (o.methods.empty()) throw PreconditionError("sample_draw: no outlier methods in the space");
  const auto intra_grid = o.intra_percent_grid.empty() ? intra_percent_grid(folds) : o.intra_percent_grid;
  const auto& grid = mode == OrmMode::Intra ? intra_grid : o.extra_percent_grid;
  if (grid.empty()) throw PreconditionError("sample_draw: empty percent grid");

  HyperDraw draw;
  draw.draw_index = draw_index;
  Rng mr = make_rng(seed, {static_cast<std::uint64_t>(draw_index), 0xA1});
  auto& p = draw.model_params;
  p.max_depth = draw_int(mr, m.max_depth);
  p.min_samples_leaf = draw_int(mr, m.min_samples_leaf);
  p.n_rounds = draw_int(mr, m.n_rounds);
  p.learning_rate = draw_real(mr, m.learning_rate);
  p.subsample = draw_real(mr, m.subsample);
  p.colsample = draw_real(mr, m.colsample);
  p.lambda = draw_real(mr, m.lambda);
  p.gamma = draw_real(mr, m.gamma);
  p.min_child_weight = draw_real(mr, m.min_child_weight);
  p.n_trees = draw_int(mr, m.n_trees);
  p.bootstrap_fraction = draw_real(mr, m.bootstrap_fraction);
  p.feature_fraction = draw_real(mr, m.feature_fraction);
  p.k = draw_int(mr, m.k);
  p.ridge = draw_real(mr, m.ridge);
  if (m.goss) {
    GossParams g{draw_real(mr, m.goss->first), draw_real(mr, m.goss->second)};
    if (g.top_fraction + g.other_fraction > 1.0) g.other_fraction = 1.0 - g.top_fraction;
    p.goss = g;
  }
  p.seed = stream_seed(seed, {static_cast<std::uint64_t>(draw_index), 0xA2});

  Rng orng = make_rng(seed, {static_cast<std::uint64_t>(draw_index), 0xB1});
  auto& orm = draw.orm_params;
  orm.method = o.methods[uniform_index(orng, o.methods.size())];
  const std::size_t level = uniform_index(orng, grid.size());
  orm.percent_removed = mode == OrmMode::None ? 0.0 : grid[level];
  orm.n_trees = draw_int(orng, o.n_trees);
  orm.subsample_size = static_cast<std::size_t>(std::max(2, draw_int(orng, o.subsample_size)));
  orm.k = std::max(2, draw_int(orng, o.k));
  return draw;
}

void CvPlan::validate() const {
  if (folds < 2) throw PreconditionError("cv plan: folds must be >= 2");
  if (iterations < 1) throw PreconditionError("cv plan: iterations must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw PreconditionError("cv plan: validation_fraction must lie in [0, 1)");
}

std::size_t removal_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

DrawOutcome evaluate_draw(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                          const HyperDraw& draw, Metric metric) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = y.size();
  const std::size_t folds = plan.folds;
  const FitOptions options{plan.task, plan.transform};
  const double percent = plan.mode == OrmMode::None ? 0.0 : draw.orm_params.percent_removed;
  const auto draw_key = static_cast<std::uint64_t>(draw.draw_index);

  DrawOutcome out;
  out.draw_index = draw.draw_index;
  out.predictions.assign(n, 0.0);
  out.removed_per_fold.assign(folds, 0);

  std::vector<char> excluded(n, 0);
  if (plan.mode == OrmMode::Extra && percent > 0.0) {
    const auto kept = apply_orm(x.values, y, draw.orm_params, removal_count(percent, n),
                                stream_seed(plan.seed, {draw_key, 0xE0}));
    std::fill(excluded.begin(), excluded.end(), 1);
    for (auto i : kept) excluded[i] = 0;
    out.removed_total = n - kept.size();
  }

  try {
    for (std::size_t k = 0; k < folds; ++k) {
      const auto split = fold_indexes(n, folds, k);
      std::vector<std::size_t> train;
      train.reserve(split.train.size());
      for (auto i : split.train)
        if (!excluded[i]) train.push_back(i);
      if (plan.mode == OrmMode::Intra && percent > 0.0) {
        // the fold's share of the draw's total removal budget
        const std::size_t count = removal_count(percent / static_cast<double>(folds), n);
        const auto ytrain = gather(y, train);
        const auto kept = apply_orm(x.values.select_rows(train), ytrain, draw.orm_params, count,
                                    stream_seed(plan.seed, {draw_key, static_cast<std::uint64_t>(k), 0x1A}));
        std::vector<std::size_t> filtered;
        filtered.reserve(kept.size());
        for (auto j : kept) filtered.push_back(train[j]);
        out.removed_per_fold[k] = train.size() - filtered.size();
        out.removed_total += out.removed_per_fold[k];
        train = std::move(filtered);
      } else {
        out.removed_per_fold[k] = split.train.size() - train.size();
      }
      if (train.size() < 2) {
        out.failed = true;
        break;
      }
      const auto ytrain = gather(y, train);
      const auto model = fit_model(kind, x.select_rows(train), ytrain,
                                   fold_params(draw.model_params, k, train.size(), kind), options);
      const auto pred = model.predict(x.select_rows(split.test));
      for (std::size_t i = 0; i < split.test.size(); ++i) out.predictions[split.test[i]] = pred[i];
    }
  } catch (const PreconditionError&) {
    out.failed = true;
  }

  if (!out.failed) {
    out.metric = evaluate(metric, y, out.predictions);
    if (!std::isfinite(out.metric)) out.failed = true;
  }
  if (out.failed) out.metric = worst_value(metric);
  const auto elapsed = std::chrono::steady_clock::now() - started;
  out.seconds = std::max(1e-9, std::chrono::duration<double>(elapsed).count());
  return out;
}

IeoResult run_ieo_with_draws(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                             const std::vector<HyperDraw>& draws, Metric metric) {
  plan.validate();
  if (x.rows() != y.size()) throw PreconditionError("run_ieo: X rows and y length differ");
  if (draws.empty()) throw PreconditionError("run_ieo: no draws");
  if (metric == Metric::F1 && plan.task != Task::Classification)
    throw PreconditionError("run_ieo: f1 needs a classification task");
  if (metric != Metric::F1 && plan.task != Task::Regression)
    throw PreconditionError("run_ieo: mape/rmse need a regression task");

  const std::size_t n = y.size();
  const auto held_out = static_cast<std::size_t>(std::floor(plan.validation_fraction * static_cast<double>(n)));
  const std::size_t part_size = n - held_out;
  if (part_size < plan.folds) throw PreconditionError("run_ieo: train/test part smaller than the fold count");

  IeoResult result;
  result.metric = metric;
  result.mode = plan.mode;
  result.part_indices = iota_indices(part_size);
  for (std::size_t i = part_size; i < n; ++i) result.validation_indices.push_back(i);
  const EncodedMatrix part_x = x.select_rows(result.part_indices);
  const std::vector<double> part_y(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(part_size));

  result.trace.resize(draws.size());
  parallel_for(draws.size(), plan.workers, [&](std::size_t i) {
    result.trace[i] = evaluate_draw(part_x, part_y, kind, plan, draws[i], metric);
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    if (better(metric, result.trace[i].metric, result.trace[best].metric)) best = i;
  result.best = draws[best];
  result.best_metric = result.trace[best].metric;
  result.oof_predictions = result.trace[best].predictions;
  for (std::size_t i = 0; i < result.trace.size(); ++i)
    if (i != best) result.trace[i].predictions.clear();

  if (!result.validation_indices.empty() && !result.trace[best].failed) {
    const double percent = plan.mode == OrmMode::None ? 0.0 : result.best.orm_params.percent_removed;
    std::vector<std::size_t> kept = result.part_indices;
    if (percent > 0.0) {
      kept = apply_orm(part_x.values, part_y, result.best.orm_params, removal_count(percent, part_size),
                       stream_seed(plan.seed, {static_cast<std::uint64_t>(result.best.draw_index), 0xF0}));
    }
    result.final_removed = part_size - kept.size();
    const auto model = fit_model(kind, part_x.select_rows(kept), gather(part_y, kept),
                                 fold_params(result.best.model_params, plan.folds, kept.size(), kind),
                                 FitOptions{plan.task, plan.transform});
    result.validation_predictions = model.predict(x.select_rows(result.validation_indices));
    const auto val_y = gather(y, result.validation_indices);
    result.validation_metric = evaluate(metric, val_y, result.validation_predictions);
  }
  return result;
}

IeoResult run_ieo(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                  const HyperSpace& space, Metric metric) {
  plan.validate();
  std::vector<HyperDraw> draws;
  draws.reserve(plan.iterations);
  for (std::size_t i = 0; i < plan.iterations; ++i) draws.push_back(sample_draw(space, plan.mode, plan.folds, plan.seed, i));
  return run_ieo_with_draws(x, y, kind, plan, draws, metric);
}

nlohmann::json to_json(const IeoResult& r) {
  nlohmann::json j;
  j["metric"] = to_string(r.metric);
  j["mode"] = to_string(r.mode);
  j["best_draw"] = r.best;
  j["best_metric"] = r.best_metric;
  auto trace = nlohmann::json::array();
  for (const auto& d : r.trace) {
    trace.push_back({{"draw_index", d.draw_index},
                     {"metric", std::isfinite(d.metric) ? nlohmann::json(d.metric) : nlohmann::json()},
                     {"failed", d.failed},
                     {"removed_total", d.removed_total},
                     {"removed_per_fold", d.removed_per_fold}});
  }
  j["trace"] = std::move(trace);
  j["oof_predictions"] = r.oof_predictions;
  j["part_size"] = r.part_indices.size();
  j["validation_size"] = r.validation_indices.size();
  j["validation_predictions"] = r.validation_predictions;
  j["validation_metric"] = r.validation_metric ? nlohmann::json(*r.validation_metric) : nlohmann::json();
  j["final_removed"] = r.final_removed;
  return j;
}

std::string trace_to_csv(const IeoResult& r) {
  std::string out = "draw_index,metric,failed,removed_total\n";
  for (const auto& d : r.trace)
    out += std::to_string(d.draw_index) + ',' + format_number(d.metric) + ',' + (d.failed ? "1" : "0") + ',' +
           std::to_string(d.removed_total) + '\n';
  return out;
}

std::vector<std::size_t> default_iteration_counts() {
  std::vector<std::size_t> counts;
  for (std::size_t c = 25; c <= 250; c += 25) counts.push_back(c);
  return counts;
}

std::vector<CurvePoint> iteration_curve(const EncodedMatrix& x, std::span<const double> y,
                                        std::span<const ModelKind> kinds, std::span<const std::size_t> counts,
                                        const CvPlan& plan, Metric metric) {
  if (counts.empty()) throw PreconditionError("iteration_curve: no checkpoints");
  std::vector<std::size_t> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CurvePoint> out;
  for (auto kind : kinds) {
    CvPlan search = plan;
    search.mode = OrmMode::None;
    search.iterations = sorted.back();
    const auto result = run_ieo(x, y, kind, search, HyperSpace{default_model_space(kind), {}}, metric);
    double best = worst_value(metric);
    double seconds = 0.0;
    std::size_t next = 0;
    for (std::size_t i = 0; i < result.trace.size() && next < sorted.size(); ++i) {
      if (better(metric, result.trace[i].metric, best)) best = result.trace[i].metric;
      seconds += result.trace[i].seconds;
      while (next < sorted.size() && sorted[next] == i + 1) out.push_back({kind, sorted[next++], best, seconds});
    }
  }
  return out;
}

}  // namespace ieo
