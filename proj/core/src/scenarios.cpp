#include "ieoml/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ieoml/common.hpp"
#include "ieoml/labeling.hpp"
#include "ieoml/tuning.hpp"

namespace ieo {

namespace {

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::size_t> map_indices(std::span<const std::size_t> population, std::span<const std::size_t> local) {
  std::vector<std::size_t> out;
  out.reserve(local.size());
  for (auto i : local) out.push_back(population[i]);
  return out;
}

std::string tc_text(double tc) { return format_number(tc); }

TrainedModel fit_on(const EncodedMatrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                    const ModelSpec& spec, const ModelParams& params, const FitOptions& options) {
  return fit_model(spec.kind, x.select_rows(rows), gather(y, rows), params, options);
}

}  // namespace

AbSplit split_ab(std::span<const double> durations, double tc) {
  BinaryThreshold{tc}.validate();
  AbSplit s;
  s.tc = tc;
  for (std::size_t i = 0; i < durations.size(); ++i) (durations[i] <= tc ? s.a : s.b).push_back(i);
  return s;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::AlltoAll: return "AlltoAll";
    case Scenario::AtoA: return "AtoA";
    case Scenario::AtoB: return "AtoB";
    case Scenario::BtoA: return "BtoA";
    case Scenario::BtoB: return "BtoB";
    case Scenario::AlltoA: return "AlltoA";
    case Scenario::AlltoB: return "AlltoB";
  }
  return "AlltoAll";
}

Scenario scenario_from_string(const std::string& text) {
  for (auto s : all_scenarios())
    if (to_string(s) == text) return s;
  throw PreconditionError("unknown scenario '" + text + "'");
}

std::vector<Scenario> all_scenarios() {
  return {Scenario::AlltoAll, Scenario::AtoA, Scenario::AtoB, Scenario::BtoA,
          Scenario::BtoB,     Scenario::AlltoA, Scenario::AlltoB};
}

ScenarioResult run_scenario(const EncodedMatrix& x, std::span<const double> durations, const ScenarioSpec& spec) {
  if (x.rows() != durations.size()) throw PreconditionError("run_scenario: X rows and durations differ");
  spec.model.params.validate(spec.model.kind);
  if (spec.folds < 2) throw PreconditionError("run_scenario: folds must be >= 2");
  const auto split = split_ab(durations, spec.tc);
  const std::string name = to_string(spec.scenario);
  auto need = [&](const std::vector<std::size_t>& subset, const char* label) -> const std::vector<std::size_t>& {
    if (subset.empty())
      throw EmptySubsetError(name + ": subset " + label + " is empty at tc=" + tc_text(spec.tc));
    return subset;
  };
  const FitOptions options{Task::Regression, spec.transform};
  const auto all = iota_indices(durations.size());

  ScenarioResult result;
  result.scenario = spec.scenario;
  result.kind = spec.model.kind;
  std::vector<double> pred(durations.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> scored(durations.size(), 0);

  auto cross_subset = [&](const std::vector<std::size_t>& source, const std::vector<std::size_t>& target) {
    const auto model = fit_on(x, durations, source, spec.model, spec.model.params, options);
    const auto p = model.predict(x.select_rows(target));
    for (std::size_t i = 0; i < target.size(); ++i) {
      pred[target[i]] = p[i];
      scored[target[i]] = 1;
    }
    result.folds.push_back({source, target});
  };

  // CV over `population`; only records in `target_mask` (or all, if null) are scored
  auto cv = [&](const std::vector<std::size_t>& population, const std::vector<char>* target_mask) {
    if (population.size() < spec.folds)
      throw PreconditionError(name + ": population of " + std::to_string(population.size()) +
                              " records is smaller than the fold count");
    for (std::size_t k = 0; k < spec.folds; ++k) {
      const auto fs = fold_indexes(population.size(), spec.folds, k);
      const auto train = map_indices(population, fs.train);
      const auto test = map_indices(population, fs.test);
      const auto model = fit_on(x, durations, train, spec.model,
                                fold_params(spec.model.params, k, train.size(), spec.model.kind), options);
      const auto p = model.predict(x.select_rows(test));
      ScenarioFold fold{train, {}};
      for (std::size_t i = 0; i < test.size(); ++i) {
        if (target_mask && !(*target_mask)[test[i]]) continue;
        pred[test[i]] = p[i];
        scored[test[i]] = 1;
        fold.test.push_back(test[i]);
      }
      result.folds.push_back(std::move(fold));
    }
  };

  switch (spec.scenario) {
    case Scenario::AlltoAll: cv(all, nullptr); break;
    case Scenario::AtoA: cv(need(split.a, "A"), nullptr); break;
    case Scenario::BtoB: cv(need(split.b, "B"), nullptr); break;
    case Scenario::AtoB: cross_subset(need(split.a, "A"), need(split.b, "B")); break;
    case Scenario::BtoA: cross_subset(need(split.b, "B"), need(split.a, "A")); break;
    case Scenario::AlltoA:
    case Scenario::AlltoB: {
      const bool to_a = spec.scenario == Scenario::AlltoA;
      const auto& target = to_a ? need(split.a, "A") : need(split.b, "B");
      std::vector<char> mask(durations.size(), 0);
      for (auto i : target) mask[i] = 1;
      cv(all, &mask);
      break;
    }
  }

  std::vector<double> actual;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (!scored[i]) continue;
    result.test_indices.push_back(i);
    result.predictions.push_back(pred[i]);
    actual.push_back(durations[i]);
  }
  result.mape = mape_excluding_nonpositive(actual, result.predictions);
  result.rmse = rmse(actual, result.predictions);
  return result;
}

ScenarioTable run_scenarios(const EncodedMatrix& x, std::span<const double> durations, double tc,
                            std::span<const ModelSpec> models, std::span<const Scenario> scenarios, std::size_t folds,
                            TargetTransform transform, int workers) {
  if (models.empty() || scenarios.empty()) throw PreconditionError("run_scenarios: no models or scenarios");
  ScenarioTable table;
  table.tc = tc;
  table.scenarios.assign(scenarios.begin(), scenarios.end());
  for (const auto& m : models) table.kinds.push_back(m.kind);
  table.cells.resize(scenarios.size() * models.size());
  parallel_for(table.cells.size(), workers, [&](std::size_t c) {
    auto& cell = table.cells[c];
    cell.scenario = scenarios[c / models.size()];
    cell.kind = models[c % models.size()].kind;
    try {
      cell.result = run_scenario(x, durations, {cell.scenario, tc, models[c % models.size()], folds, transform});
    } catch (const EmptySubsetError& e) {
      cell.error = e.what();
    }
  });
  return table;
}

std::string to_csv(const ScenarioTable& table) {
  std::ostringstream out;
  out << "scenario";
  for (auto k : table.kinds) out << ',' << to_string(k);
  out << '\n';
  for (std::size_t s = 0; s < table.scenarios.size(); ++s) {
    out << to_string(table.scenarios[s]);
    for (std::size_t m = 0; m < table.kinds.size(); ++m) {
      const auto& cell = table.at(s, m);
      out << ',';
      if (cell.result) out << format_number(cell.result->mape.value);
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const ScenarioTable& table) {
  auto cells = nlohmann::json::array();
  for (const auto& c : table.cells) {
    nlohmann::json j{{"scenario", to_string(c.scenario)}, {"model", to_string(c.kind)}};
    if (c.result) {
      j["mape"] = c.result->mape.value;
      j["mape_evaluated"] = c.result->mape.evaluated;
      j["mape_excluded"] = c.result->mape.excluded;
      j["rmse"] = c.result->rmse;
      j["test_records"] = c.result->test_indices.size();
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  return {{"tc", table.tc}, {"cells", cells}};
}

std::vector<TimeFoldRow> quantiled_time_folding(const EncodedMatrix& x, std::span<const double> durations,
                                                std::size_t n_groups, const ModelSpec& model,
                                                TargetTransform transform) {
  if (x.rows() != durations.size()) throw PreconditionError("quantiled_time_folding: X rows and durations differ");
  if (n_groups < 2 || durations.size() < n_groups)
    throw PreconditionError("quantiled_time_folding: need 2 <= n_groups <= records");
  model.params.validate(model.kind);
  auto order = iota_indices(durations.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return durations[a] < durations[b]; });

  std::vector<TimeFoldRow> rows;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const auto fs = fold_indexes(order.size(), n_groups, g);
    auto train = map_indices(order, fs.train);
    auto test = map_indices(order, fs.test);
    const auto actual = gather(durations, test);
    std::sort(train.begin(), train.end());
    const auto fitted = fit_on(x, durations, train, model, fold_params(model.params, g, train.size(), model.kind),
                               FitOptions{Task::Regression, transform});
    const auto pred = fitted.predict(x.select_rows(test));
    TimeFoldRow row;
    row.group = g;
    row.size = test.size();
    row.min_duration = *std::min_element(actual.begin(), actual.end());
    row.max_duration = *std::max_element(actual.begin(), actual.end());
    row.rmse = rmse(actual, pred);
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<TimeFoldRow>& rows) {
  std::ostringstream out;
  out << "group,size,min_duration,max_duration,rmse\n";
  for (const auto& r : rows)
    out << r.group << ',' << r.size << ',' << format_number(r.min_duration) << ',' << format_number(r.max_duration)
        << ',' << format_number(r.rmse) << '\n';
  return out.str();
}

FusionConfig default_fusion_config() {
  FusionConfig c;
  c.classifier = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
  c.regressor_a = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
  c.regressor_b = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
  c.regressor_all = {ModelKind::Gbt, default_params(ModelKind::Gbt)};
  c.meta = {ModelKind::Linear, default_params(ModelKind::Linear)};
  c.meta.params.ridge = 1e-6;
  c.classifier.params.seed = 1;
  c.regressor_a.params.seed = 2;
  c.regressor_b.params.seed = 3;
  c.regressor_all.params.seed = 4;
  return c;
}

PipelineModel::PipelineModel(double tc, TrainedModel classifier, TrainedModel regressor_a, TrainedModel regressor_b)
    : tc_(tc), classifier_(std::move(classifier)), regressor_a_(std::move(regressor_a)),
      regressor_b_(std::move(regressor_b)) {}

std::vector<double> PipelineModel::predict_classes(const EncodedMatrix& x) const { return classifier_.predict(x); }

std::vector<double> PipelineModel::predict(const EncodedMatrix& x) const {
  return predict_routed(x, predict_classes(x));
}

std::vector<double> PipelineModel::predict_routed(const EncodedMatrix& x, std::span<const double> classes) const {
  if (classes.size() != x.rows()) throw PreconditionError("pipeline: one class per record required");
  const auto pa = regressor_a_.predict(x);
  const auto pb = regressor_b_.predict(x);
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = classes[i] == 0.0 ? pa[i] : pb[i];
  return out;
}

PipelineModel fit_pipeline(const EncodedMatrix& x, std::span<const double> durations, const FusionConfig& config,
                           double tc) {
  if (x.rows() != durations.size()) throw PreconditionError("fit_pipeline: X rows and durations differ");
  const auto split = split_ab(durations, tc);
  if (split.a_empty()) throw EmptySubsetError("pipeline: subset A is empty at tc=" + tc_text(tc));
  if (split.b_empty()) throw EmptySubsetError("pipeline: subset B is empty at tc=" + tc_text(tc));
  const FitOptions reg{Task::Regression, config.transform};
  auto classifier = fit_model(config.classifier.kind, x, binary_labels(durations, tc), config.classifier.params,
                              FitOptions{Task::Classification, {}});
  auto reg_a = fit_on(x, durations, split.a, config.regressor_a, config.regressor_a.params, reg);
  auto reg_b = fit_on(x, durations, split.b, config.regressor_b, config.regressor_b.params, reg);
  return PipelineModel(tc, std::move(classifier), std::move(reg_a), std::move(reg_b));
}

EncodedMatrix build_meta_features(std::span<const double> classes, std::span<const double> reg_a,
                                  std::span<const double> reg_b, std::span<const double> reg_all) {
  const std::size_t n = classes.size();
  if (reg_a.size() != n || reg_b.size() != n || reg_all.size() != n)
    throw PreconditionError("build_meta_features: column lengths differ");
  EncodedMatrix m;
  m.values = Matrix(n, kMetaFeatureCount);
  m.feature_names = {"predicted_class", "regression_a", "regression_b", "regression_all"};
  m.row_index = iota_indices(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.values(i, 0) = classes[i];
    m.values(i, 1) = reg_a[i];
    m.values(i, 2) = reg_b[i];
    m.values(i, 3) = reg_all[i];
  }
  return m;
}

TrainedModel fit_meta(const EncodedMatrix& meta_features, std::span<const double> durations, const ModelSpec& meta,
                      TargetTransform transform) {
  if (meta_features.cols() != kMetaFeatureCount) throw PreconditionError("fit_meta: expected 4 meta-features");
  return fit_model(meta.kind, meta_features, durations, meta.params, FitOptions{Task::Regression, transform});
}

FusionModel::FusionModel(PipelineModel pipeline, TrainedModel regressor_all, TrainedModel meta)
    : pipeline_(std::move(pipeline)), regressor_all_(std::move(regressor_all)), meta_(std::move(meta)) {}

namespace {

EncodedMatrix meta_for(const PipelineModel& pipeline, const TrainedModel& regressor_all, const EncodedMatrix& x) {
  const auto classes = pipeline.predict_classes(x);
  const auto routed_a = pipeline.predict_routed(x, std::vector<double>(x.rows(), 0.0));
  const auto routed_b = pipeline.predict_routed(x, std::vector<double>(x.rows(), 1.0));
  return build_meta_features(classes, routed_a, routed_b, regressor_all.predict(x));
}

}  // namespace

EncodedMatrix FusionModel::meta_features(const EncodedMatrix& x) const { return meta_for(pipeline_, regressor_all_, x); }

std::vector<double> FusionModel::predict(const EncodedMatrix& x) const { return meta_.predict(meta_features(x)); }

EncodedMatrix out_of_fold_meta_features(const EncodedMatrix& x, std::span<const double> durations,
                                        const FusionConfig& config, double tc) {
  const std::size_t n = durations.size();
  if (config.meta_folds < 2 || config.meta_folds > n) throw PreconditionError("fusion: bad meta fold count");
  std::vector<double> classes(n), pa(n), pb(n), pall(n);
  for (std::size_t k = 0; k < config.meta_folds; ++k) {
    const auto fs = fold_indexes(n, config.meta_folds, k);
    const auto xt = x.select_rows(fs.train);
    const auto yt = gather(durations, fs.train);
    FusionConfig fold_config = config;
    for (auto* spec : {&fold_config.classifier, &fold_config.regressor_a, &fold_config.regressor_b,
                       &fold_config.regressor_all})
      spec->params = fold_params(spec->params, k, fs.train.size(), spec->kind);
    const auto pipeline = fit_pipeline(xt, yt, fold_config, tc);
    const auto reg_all = fit_model(fold_config.regressor_all.kind, xt, yt, fold_config.regressor_all.params,
                                   FitOptions{Task::Regression, config.transform});
    const auto meta = meta_for(pipeline, reg_all, x.select_rows(fs.test));
    for (std::size_t i = 0; i < fs.test.size(); ++i) {
      const auto r = fs.test[i];
      classes[r] = meta.values(i, 0);
      pa[r] = meta.values(i, 1);
      pb[r] = meta.values(i, 2);
      pall[r] = meta.values(i, 3);
    }
  }
  return build_meta_features(classes, pa, pb, pall);
}

FusionModel fit_fusion(const EncodedMatrix& x, std::span<const double> durations, const FusionConfig& config,
                       double tc) {
  auto pipeline = fit_pipeline(x, durations, config, tc);
  auto reg_all = fit_model(config.regressor_all.kind, x, durations, config.regressor_all.params,
                           FitOptions{Task::Regression, config.transform});
  auto meta = fit_meta(out_of_fold_meta_features(x, durations, config, tc), durations, config.meta);
  return FusionModel(std::move(pipeline), std::move(reg_all), std::move(meta));
}

std::vector<CompositeFold> evaluate_composites(const EncodedMatrix& x, std::span<const double> durations,
                                               const FusionConfig& config, double tc, std::size_t folds,
                                               int workers) {
  if (x.rows() != durations.size()) throw PreconditionError("evaluate_composites: X rows and durations differ");
  if (folds < 2 || folds > durations.size()) throw PreconditionError("evaluate_composites: bad fold count");
  std::vector<CompositeFold> out(folds);
  parallel_for(folds, workers, [&](std::size_t k) {
    const auto fs = fold_indexes(durations.size(), folds, k);
    FusionConfig fold_config = config;
    for (auto* spec : {&fold_config.classifier, &fold_config.regressor_a, &fold_config.regressor_b,
                       &fold_config.regressor_all, &fold_config.meta})
      spec->params.seed = stream_seed(spec->params.seed, {static_cast<std::uint64_t>(k), 0x51});
    const auto fusion = fit_fusion(x.select_rows(fs.train), gather(durations, fs.train), fold_config, tc);
    const auto xt = x.select_rows(fs.test);
    const auto actual = gather(durations, fs.test);
    const auto meta = fusion.meta_features(xt);
    std::vector<double> single(actual.size()), pipe(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
      single[i] = meta.values(i, 3);
      pipe[i] = meta.values(i, 0) == 0.0 ? meta.values(i, 1) : meta.values(i, 2);
    }
    const auto fused = fusion.predict(xt);
    CompositeFold& f = out[k];
    f.fold = k;
    f.single_rmse = rmse(actual, single);
    f.pipeline_rmse = rmse(actual, pipe);
    f.fusion_rmse = rmse(actual, fused);
    f.single_mape = mape_excluding_nonpositive(actual, single).value;
    f.pipeline_mape = mape_excluding_nonpositive(actual, pipe).value;
    f.fusion_mape = mape_excluding_nonpositive(actual, fused).value;
  });
  return out;
}

std::string to_csv(const std::vector<CompositeFold>& folds) {
  std::ostringstream out;
  out << "fold,single_rmse,pipeline_rmse,fusion_rmse,single_mape,pipeline_mape,fusion_mape\n";
  for (const auto& f : folds)
    out << f.fold << ',' << format_number(f.single_rmse) << ',' << format_number(f.pipeline_rmse) << ','
        << format_number(f.fusion_rmse) << ',' << format_number(f.single_mape) << ','
        << format_number(f.pipeline_mape) << ',' << format_number(f.fusion_mape) << '\n';
  return out.str();
}

}  // namespace ieo
