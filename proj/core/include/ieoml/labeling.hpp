#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/dataset.hpp"
#include "ieoml/models.hpp"

namespace ieo {

struct BinaryThreshold {
  double tc = 45.0;
  void validate() const;
};

struct MultiClassThresholds {
  double t1 = 0.0;
  double t2 = 0.0;
  void validate() const;
};

/// 0 when y <= tc, 1 when y > tc.
std::vector<double> binary_labels(std::span<const double> durations, double tc);

/// 0 when y <= t1, 1 when t1 < y < t2, 2 when y >= t2.
std::vector<double> multiclass_labels(std::span<const double> durations, const MultiClassThresholds& thresholds);

enum class MutcdClass { Minor, Intermediate, Major };
std::string to_string(MutcdClass c);

/// Minor below 30 minutes, intermediate from 30 to 120 inclusive, major above.
std::vector<MutcdClass> mutcd_labels(std::span<const double> durations);

/// Minimum F1 the sweeps treat as acceptable.
inline constexpr double kMinAcceptableF1 = 0.75;

using ClassifierSpec = ModelSpec;

std::vector<double> default_tc_values();  // 20, 25, ..., 70

struct SweepOptions {
  std::vector<double> tc_values = default_tc_values();
  std::size_t folds = 5;
  int workers = 1;
  std::size_t min_per_class = 2;
};

struct SweepRow {
  double tc = 0.0;
  ModelKind kind = ModelKind::Gbt;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double class_balance = 0.0;  ///< fraction with y <= tc
  bool evaluable = true;
  bool below_min_f1 = false;
  std::string note;
};

struct SweepReport {
  std::vector<SweepRow> rows;  ///< ascending tc, then model order

  /// Evaluable row with the highest F1 (first one wins ties).
  std::optional<SweepRow> best() const;
};

SweepReport threshold_sweep(const EncodedMatrix& x, std::span<const double> durations,
                            std::span<const ClassifierSpec> models, const SweepOptions& options = {});
SweepReport threshold_sweep(const Dataset& dataset, std::span<const ClassifierSpec> models,
                            const SweepOptions& options = {});

std::string to_csv(const SweepReport& report);
nlohmann::json to_json(const SweepReport& report);

struct QuantileGridOptions {
  std::vector<double> q1_values{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> q2_values{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t folds = 5;
  int workers = 1;
  std::size_t min_per_class = 2;
};

struct GridCell {
  double q1 = 0.0;
  double q2 = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double f1_macro = 0.0;
  std::size_t class_counts[3] = {0, 0, 0};
  bool evaluable = true;
};

struct QuantileGrid {
  ModelKind kind = ModelKind::Gbt;
  std::vector<GridCell> cells;  ///< lexicographic (q1, q2), only q1 < q2
  std::optional<GridCell> best() const;
};

QuantileGrid quantile_grid(const EncodedMatrix& x, std::span<const double> durations, const ClassifierSpec& model,
                           const QuantileGridOptions& options = {});
QuantileGrid quantile_grid(const Dataset& dataset, const ClassifierSpec& model,
                           const QuantileGridOptions& options = {});

std::string to_csv(const QuantileGrid& grid);
nlohmann::json to_json(const QuantileGrid& grid);

enum class MulticlassPreset { EqualSplit, Mutcd };
std::string to_string(MulticlassPreset preset);

struct PresetScore {
  MulticlassPreset preset = MulticlassPreset::EqualSplit;
  ModelKind kind = ModelKind::Gbt;
  double t1 = 0.0;  ///< upper bound of class 0 (inclusive for equal-split, exclusive for MUTCD)
  double t2 = 0.0;
  double f1_macro = 0.0;
  std::size_t class_counts[3] = {0, 0, 0};
  bool evaluable = true;
};

/// Equal-split thresholds are the 1/3 and 2/3 duration quantiles; the MUTCD
/// preset uses the 30 / 120 minute classes of mutcd_labels.
std::vector<PresetScore> multiclass_presets(const EncodedMatrix& x, std::span<const double> durations,
                                            std::span<const ClassifierSpec> models,
                                            const QuantileGridOptions& options = {});
std::string to_csv(const std::vector<PresetScore>& scores);

enum class TrimSide { Low, High };

struct LdoSweepOptions {
  /// Binary threshold; when absent the best tc of a full-data sweep is used.
  std::optional<double> tc;
  TrimSide side = TrimSide::Low;
  std::size_t folds = 5;
  int workers = 1;
  std::size_t min_per_class = 2;
};

struct LdoRow {
  double threshold = 0.0;
  std::size_t remaining = 0;
  double remaining_fraction = 0.0;
  double best_f1 = 0.0;
  std::optional<ModelKind> best_kind;
  bool evaluable = true;
  bool over_half_removed = false;
};

struct LdoReport {
  double tc = 0.0;
  TrimSide side = TrimSide::Low;
  std::vector<LdoRow> rows;
};

/// Low side drops y < t; high side drops y > t. Thresholds must be ascending.
LdoReport ldo_hdo_sweep(const EncodedMatrix& x, std::span<const double> durations,
                        std::span<const ClassifierSpec> models, std::span<const double> thresholds,
                        const LdoSweepOptions& options = {});
LdoReport ldo_hdo_sweep(const Dataset& dataset, std::span<const ClassifierSpec> models,
                        std::span<const double> thresholds, const LdoSweepOptions& options = {});

std::string to_csv(const LdoReport& report);
nlohmann::json to_json(const LdoReport& report);

}  // namespace ieo
