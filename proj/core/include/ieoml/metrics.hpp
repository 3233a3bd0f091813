#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ieo {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// One-vs-all counts for `positive_label`. Labels are compared exactly.
ConfusionCounts confusion(std::span<const double> actual, std::span<const double> predicted, double positive_label);

/// Precision and recall are 0 when their denominator is 0; F1 is 0 when
/// precision + recall is 0.
ClassificationMetrics classification_metrics(const ConfusionCounts& counts);
ClassificationMetrics classification_metrics(std::span<const double> actual, std::span<const double> predicted,
                                             double positive_label);

/// Unweighted mean of one-vs-all F1 over `classes`.
double f1_macro(std::span<const double> actual, std::span<const double> predicted, std::span<const double> classes);

/// Mean absolute percentage error, as a percentage. Every actual value must be
/// strictly positive.
double mape(std::span<const double> actual, std::span<const double> predicted);

struct MapeResult {
  double value = 0.0;         ///< percentage over the retained pairs
  std::size_t evaluated = 0;
  std::size_t excluded = 0;   ///< pairs with actual <= 0
};

/// MAPE after dropping pairs whose actual value is <= 0, reporting the count.
MapeResult mape_excluding_nonpositive(std::span<const double> actual, std::span<const double> predicted);

double rmse(std::span<const double> actual, std::span<const double> predicted);

/// Metric selector shared by tuning, scenario and importance code.
enum class Metric { Mape, Rmse, F1 };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& text);

/// True when larger values of the metric are better.
inline bool higher_is_better(Metric metric) { return metric == Metric::F1; }

/// Evaluates `metric`. For Mape non-positive actuals are excluded; for F1 the
/// macro average over the labels present in `actual` is used.
double evaluate(Metric metric, std::span<const double> actual, std::span<const double> predicted);

}  // namespace ieo
