#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/dataset.hpp"
#include "ieoml/metrics.hpp"
#include "ieoml/models.hpp"

namespace ieo {

struct AbSplit {
  double tc = 0.0;
  std::vector<std::size_t> a;  ///< durations <= tc
  std::vector<std::size_t> b;  ///< durations > tc
  bool a_empty() const noexcept { return a.empty(); }
  bool b_empty() const noexcept { return b.empty(); }
};

AbSplit split_ab(std::span<const double> durations, double tc);

enum class Scenario { AlltoAll, AtoA, AtoB, BtoA, BtoB, AlltoA, AlltoB };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& text);
std::vector<Scenario> all_scenarios();

/// Thrown when a scenario needs a subset that is empty.
class EmptySubsetError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct ScenarioSpec {
  Scenario scenario = Scenario::AlltoAll;
  double tc = 45.0;
  ModelSpec model;
  std::size_t folds = 10;
  TargetTransform transform = TargetTransform::None;
};

struct ScenarioFold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;  ///< records scored in this fold
};

struct ScenarioResult {
  Scenario scenario = Scenario::AlltoAll;
  ModelKind kind = ModelKind::Gbt;
  MapeResult mape;
  double rmse = 0.0;
  std::vector<std::size_t> test_indices;  ///< ascending
  std::vector<double> predictions;        ///< aligned with test_indices
  std::vector<ScenarioFold> folds;
};

/// Cross-subset scenarios fit once on the whole source subset. Same-subset
/// and AlltoAll run sequential k-fold CV inside the population. AlltoA and
/// AlltoB run k-fold CV over all data and score only target-subset records.
ScenarioResult run_scenario(const EncodedMatrix& x, std::span<const double> durations, const ScenarioSpec& spec);

struct ScenarioCell {
  Scenario scenario = Scenario::AlltoAll;
  ModelKind kind = ModelKind::Gbt;
  std::optional<ScenarioResult> result;
  std::string error;  ///< set when the scenario refused to run
};

struct ScenarioTable {
  double tc = 0.0;
  std::vector<Scenario> scenarios;
  std::vector<ModelKind> kinds;
  std::vector<ScenarioCell> cells;  ///< scenario-major

  const ScenarioCell& at(std::size_t scenario, std::size_t model) const { return cells[scenario * kinds.size() + model]; }
};

ScenarioTable run_scenarios(const EncodedMatrix& x, std::span<const double> durations, double tc,
                            std::span<const ModelSpec> models, std::span<const Scenario> scenarios, std::size_t folds,
                            TargetTransform transform, int workers = 1);

/// Rows = scenarios, columns = models, cells = MAPE (empty when refused).
std::string to_csv(const ScenarioTable& table);
nlohmann::json to_json(const ScenarioTable& table);

struct TimeFoldRow {
  std::size_t group = 0;
  std::size_t size = 0;
  double min_duration = 0.0;
  double max_duration = 0.0;
  double rmse = 0.0;
};

/// Sorts records by duration (ties by index), cuts them into equal contiguous
/// groups and scores each group with a model fitted on all other groups.
std::vector<TimeFoldRow> quantiled_time_folding(const EncodedMatrix& x, std::span<const double> durations,
                                                std::size_t n_groups, const ModelSpec& model,
                                                TargetTransform transform = TargetTransform::None);
std::string to_csv(const std::vector<TimeFoldRow>& rows);

struct FusionConfig {
  ModelSpec classifier;
  ModelSpec regressor_a;
  ModelSpec regressor_b;
  ModelSpec regressor_all;
  ModelSpec meta;
  std::size_t meta_folds = 5;
  TargetTransform transform = TargetTransform::None;
};

/// Gradient boosting for the base models and a lightly ridged linear
/// meta-regressor.
FusionConfig default_fusion_config();

class PipelineModel {
 public:
  PipelineModel(double tc, TrainedModel classifier, TrainedModel regressor_a, TrainedModel regressor_b);

  double tc() const noexcept { return tc_; }
  std::vector<double> predict_classes(const EncodedMatrix& x) const;
  std::vector<double> predict(const EncodedMatrix& x) const;
  /// Routes through the supplied classes instead of the classifier.
  std::vector<double> predict_routed(const EncodedMatrix& x, std::span<const double> classes) const;

 private:
  double tc_;
  TrainedModel classifier_;
  TrainedModel regressor_a_;
  TrainedModel regressor_b_;
};

PipelineModel fit_pipeline(const EncodedMatrix& x, std::span<const double> durations, const FusionConfig& config,
                           double tc);

inline constexpr std::size_t kMetaFeatureCount = 4;

/// Columns: predicted class, subset-A regression, subset-B regression,
/// all-data regression.
EncodedMatrix build_meta_features(std::span<const double> classes, std::span<const double> reg_a,
                                  std::span<const double> reg_b, std::span<const double> reg_all);

TrainedModel fit_meta(const EncodedMatrix& meta_features, std::span<const double> durations, const ModelSpec& meta,
                      TargetTransform transform = TargetTransform::None);

class FusionModel {
 public:
  FusionModel(PipelineModel pipeline, TrainedModel regressor_all, TrainedModel meta);

  const PipelineModel& pipeline() const noexcept { return pipeline_; }
  const TrainedModel& regressor_all() const noexcept { return regressor_all_; }
  EncodedMatrix meta_features(const EncodedMatrix& x) const;
  std::vector<double> predict(const EncodedMatrix& x) const;

 private:
  PipelineModel pipeline_;
  TrainedModel regressor_all_;
  TrainedModel meta_;
};

/// Meta-features for the training rows come from base models fitted on the
/// other meta folds only.
EncodedMatrix out_of_fold_meta_features(const EncodedMatrix& x, std::span<const double> durations,
                                        const FusionConfig& config, double tc);

FusionModel fit_fusion(const EncodedMatrix& x, std::span<const double> durations, const FusionConfig& config,
                       double tc);

struct CompositeFold {
  std::size_t fold = 0;
  double single_rmse = 0.0;  ///< the all-data regressor alone
  double pipeline_rmse = 0.0;
  double fusion_rmse = 0.0;
  double single_mape = 0.0;
  double pipeline_mape = 0.0;
  double fusion_mape = 0.0;
};

/// Outer sequential k-fold comparison of single, pipeline and fusion models.
std::vector<CompositeFold> evaluate_composites(const EncodedMatrix& x, std::span<const double> durations,
                                               const FusionConfig& config, double tc, std::size_t folds,
                                               int workers = 1);
std::string to_csv(const std::vector<CompositeFold>& folds);

}  // namespace ieo
