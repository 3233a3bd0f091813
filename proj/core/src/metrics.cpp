#include "ieoml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "ieoml/common.hpp"

namespace ieo {

namespace {

void check_pairs(std::span<const double> actual, std::span<const double> predicted, const char* what) {
  if (actual.size() != predicted.size())
    throw PreconditionError(std::string(what) + ": actual and predicted lengths differ");
  if (actual.empty()) throw PreconditionError(std::string(what) + ": empty input");
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionCounts confusion(std::span<const double> actual, std::span<const double> predicted, double positive_label) {
  check_pairs(actual, predicted, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const bool a = actual[i] == positive_label;
    const bool p = predicted[i] == positive_label;
    if (a && p) ++c.tp;
    else if (!a && p) ++c.fp;
    else if (a && !p) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
  ClassificationMetrics m;
  m.precision = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.accuracy = safe_ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  m.f1 = (m.precision + m.recall) == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

ClassificationMetrics classification_metrics(std::span<const double> actual, std::span<const double> predicted,
                                             double positive_label) {
  return classification_metrics(confusion(actual, predicted, positive_label));
}

double f1_macro(std::span<const double> actual, std::span<const double> predicted, std::span<const double> classes) {
  if (classes.empty()) throw PreconditionError("f1_macro: no classes");
  double sum = 0.0;
  for (double c : classes) sum += classification_metrics(actual, predicted, c).f1;
  return sum / static_cast<double>(classes.size());
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
  check_pairs(actual, predicted, "mape");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (!(actual[i] > 0.0)) throw PreconditionError("mape: actual value <= 0 at index " + std::to_string(i));
    sum += std::abs(actual[i] - predicted[i]) / actual[i];
  }
  return 100.0 * sum / static_cast<double>(actual.size());
}

MapeResult mape_excluding_nonpositive(std::span<const double> actual, std::span<const double> predicted) {
  check_pairs(actual, predicted, "mape");
  MapeResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (!(actual[i] > 0.0)) {
      ++r.excluded;
      continue;
    }
    sum += std::abs(actual[i] - predicted[i]) / actual[i];
    ++r.evaluated;
  }
  r.value = r.evaluated == 0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 * sum / static_cast<double>(r.evaluated);
  return r;
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
  check_pairs(actual, predicted, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = actual[i] - predicted[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(actual.size()));
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::Mape: return "mape";
    case Metric::Rmse: return "rmse";
    case Metric::F1: return "f1";
  }
  return "mape";
}

Metric metric_from_string(const std::string& text) {
  if (text == "mape") return Metric::Mape;
  if (text == "rmse") return Metric::Rmse;
  if (text == "f1") return Metric::F1;
  throw PreconditionError("unknown metric '" + text + "'");
}

double evaluate(Metric metric, std::span<const double> actual, std::span<const double> predicted) {
  switch (metric) {
    case Metric::Mape: return mape_excluding_nonpositive(actual, predicted).value;
    case Metric::Rmse: return rmse(actual, predicted);
    case Metric::F1: {
      std::set<double> labels(actual.begin(), actual.end());
      const std::vector<double> classes(labels.begin(), labels.end());
      if (classes.size() == 2 && classes[0] == 0.0 && classes[1] == 1.0)
        return classification_metrics(actual, predicted, 1.0).f1;
      return f1_macro(actual, predicted, classes);
    }
  }
  return 0.0;
}

}  // namespace ieo
