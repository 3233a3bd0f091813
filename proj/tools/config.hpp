#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/dataset.hpp"
#include "ieoml/importance.hpp"
#include "ieoml/labeling.hpp"
#include "ieoml/models.hpp"
#include "ieoml/scenarios.hpp"
#include "ieoml/tuning.hpp"

namespace ieo::cli {

/// Schema violation; what() starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct CsvSource {
  std::string path;
  FeatureSchema schema;
  std::map<std::string, std::string> column_map;
  CsvOptions options;
};

struct DatasetSource {
  std::optional<CsvSource> csv;
  std::optional<SynthConfig> synth;
};

struct ProfileBlock {
  std::size_t histogram_bins = 30;
};

struct SweepBlock {
  std::vector<double> tc_values = default_tc_values();
  std::vector<ModelSpec> models;
  std::size_t folds = 5;
  std::size_t min_per_class = 2;
};

struct MulticlassBlock {
  std::vector<ModelSpec> models;
  std::vector<double> q1_values = QuantileGridOptions{}.q1_values;
  std::vector<double> q2_values = QuantileGridOptions{}.q2_values;
  std::size_t folds = 5;
  std::size_t min_per_class = 2;
};

struct LdoBlock {
  std::vector<double> thresholds{0, 1, 2, 3, 4, 5, 10, 15, 20};
  TrimSide side = TrimSide::Low;
  std::optional<double> tc;
  std::vector<ModelSpec> models;
  std::size_t folds = 5;
  std::size_t min_per_class = 2;
};

struct ScenariosBlock {
  double tc = 45.0;
  std::vector<ModelSpec> models;
  std::vector<Scenario> scenarios = all_scenarios();
  std::size_t folds = 10;
  TargetTransform transform = TargetTransform::None;
  std::size_t time_groups = 10;
  ModelSpec time_model;
};

struct IeoBlock {
  std::vector<ModelKind> models{ModelKind::Gbt};
  std::vector<OrmMode> modes{OrmMode::None, OrmMode::Intra, OrmMode::Extra};
  std::size_t folds = 10;
  std::size_t iterations = 25;
  Metric metric = Metric::Mape;
  TargetTransform transform = TargetTransform::Log1p;
  Task task = Task::Regression;
  double tc = 45.0;  ///< binary threshold when task is classification
  double validation_fraction = 0.2;
  /// Replaces the per-kind default model space for every model when set.
  std::optional<ModelSpace> model_space;
  OrmSpace orm_space;
};

struct FusionBlock {
  double tc = 45.0;
  std::size_t folds = 5;
  std::size_t meta_folds = 5;
  TargetTransform transform = TargetTransform::None;
};

struct ImportanceBlock {
  double tc = 45.0;
  ModelSpec model;
  SubsetImportanceOptions options;
};

struct TimingBlock {
  std::vector<ModelKind> models{ModelKind::Gbt, ModelKind::RandomForest, ModelKind::Knn, ModelKind::Linear};
  std::vector<std::size_t> counts = default_iteration_counts();
  std::size_t folds = 10;
  Metric metric = Metric::Mape;
  TargetTransform transform = TargetTransform::Log1p;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSource dataset;
  std::optional<std::string> output_dir;
  ProfileBlock profile;
  SweepBlock sweep;
  MulticlassBlock multiclass;
  LdoBlock ldo_sweep;
  ScenariosBlock scenarios;
  IeoBlock ieo;
  FusionBlock fusion;
  ImportanceBlock importance;
  TimingBlock timing;
  nlohmann::json document;  ///< the validated input, for hashing
};

/// Validates and converts a configuration document. Unknown keys are errors.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::string& path);

}  // namespace ieo::cli
