#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/dataset.hpp"
#include "ieoml/metrics.hpp"
#include "ieoml/models.hpp"

namespace ieo {

enum class ImportanceMethod { Permutation, ShapleySampling };

std::string to_string(ImportanceMethod method);
ImportanceMethod importance_method_from_string(const std::string& text);

struct FeatureScore {
  std::string name;
  double score = 0.0;
  std::size_t rank = 0;  ///< 1 = most important
};

struct ImportanceReport {
  ImportanceMethod method = ImportanceMethod::Permutation;
  std::string subset = "all";
  std::vector<FeatureScore> features;  ///< in column order
  double baseline = 0.0;               ///< metric of the unperturbed model (permutation only)
  std::size_t records = 0;
  bool flagged = false;
  std::string note;

  double score_of(const std::string& name) const;
  std::size_t rank_of(const std::string& name) const;
};

/// Ranks by descending score. Columns that are constant in `x` go last;
/// remaining ties are broken by larger column variance, then lower index.
void assign_ranks(ImportanceReport& report, const Matrix& x);

/// score_j = mean over repeats of the metric degradation when column j is
/// shuffled (shuffled - baseline for error metrics, baseline - shuffled for
/// F1).
ImportanceReport permutation_importance(const TrainedModel& model, const EncodedMatrix& x, std::span<const double> y,
                                        Metric metric, std::size_t n_repeats, std::uint64_t seed, int workers = 1);

using PredictFn = std::function<std::vector<double>(const Matrix&)>;

struct ShapleyOptions {
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  /// Every permutation of the features against every background row.
  bool exhaustive = false;
  int workers = 1;
};

inline constexpr std::size_t kMaxExhaustiveFeatures = 8;

struct ShapleyResult {
  std::vector<std::string> names;
  std::vector<double> contributions;
  double prediction = 0.0;       ///< f(record)
  double background_mean = 0.0;  ///< mean f over the background rows
  std::size_t evaluations = 0;
};

/// Monte-Carlo Shapley values. Sample s draws a feature permutation from its
/// own stream and hides features with background row s mod |background|.
ShapleyResult shapley_sampling(const PredictFn& f, const std::vector<std::string>& names, const Matrix& background,
                               std::span<const double> record, const ShapleyOptions& options);
ShapleyResult shapley_sampling(const TrainedModel& model, const EncodedMatrix& background,
                               std::span<const double> record, const ShapleyOptions& options);

/// Up to `size` distinct rows drawn without replacement (ascending order).
std::vector<std::size_t> background_rows(std::size_t n, std::size_t size, std::uint64_t seed);

/// Mean |contribution| over explained records, as an ImportanceReport.
ImportanceReport shapley_importance(const TrainedModel& model, const EncodedMatrix& x, std::size_t n_records,
                                    std::size_t background_size, const ShapleyOptions& options);

struct SubsetImportanceOptions {
  ImportanceMethod method = ImportanceMethod::Permutation;
  Metric metric = Metric::Rmse;
  std::size_t n_repeats = 5;
  std::size_t shapley_records = 50;
  std::size_t background_size = 100;
  std::size_t shapley_samples = 200;
  std::size_t min_records = 20;
  TargetTransform transform = TargetTransform::None;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct SubsetImportance {
  ImportanceReport all;
  ImportanceReport a;
  ImportanceReport b;
};

SubsetImportance subset_importance(const EncodedMatrix& x, std::span<const double> durations, double tc,
                                   const ModelSpec& model, const SubsetImportanceOptions& options = {});

/// feature,score,rank,subset,method
std::string to_csv(std::span<const ImportanceReport> reports);
nlohmann::json to_json(const ImportanceReport& report);

/// Spearman correlation between the ranks of two reports over shared names.
double rank_correlation(const ImportanceReport& a, const ImportanceReport& b);

}  // namespace ieo
