#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/dataset.hpp"
#include "ieoml/metrics.hpp"
#include "ieoml/models.hpp"
#include "ieoml/outliers.hpp"

namespace ieo {

// ---------------------------------------------------------------------------
// Folds

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Sequential contiguous folds: test = [floor(k n / F), floor((k+1) n / F)),
/// train = the complement, both ascending.
FoldSplit fold_indexes(std::size_t n, std::size_t folds, std::size_t k);

/// Out-of-fold predictions of one model under sequential folds. The model
/// seed of fold k is stream_seed(params.seed, {k}). For kNN, k is capped at
/// the training-fold size.
std::vector<double> cross_val_predict(const EncodedMatrix& x, std::span<const double> y, ModelKind kind,
                                      const ModelParams& params, std::size_t folds, const FitOptions& options);

/// Params actually used to fit fold `fold` of a cross-validation.
ModelParams fold_params(const ModelParams& params, std::size_t fold, std::size_t train_rows, ModelKind kind);

// ---------------------------------------------------------------------------
// Search space

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = false;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

/// Per-kind model ranges. Boosting draws learning_rate log-uniformly and
/// linear draws ridge log-uniformly; everything else is uniform.
struct ModelSpace {
  IntRange max_depth{2, 8};
  IntRange min_samples_leaf{1, 20};
  IntRange n_rounds{50, 200};
  RealRange learning_rate{0.01, 0.3, true};
  RealRange subsample{0.5, 1.0};
  RealRange colsample{0.5, 1.0};
  RealRange lambda{0.0, 10.0};
  RealRange gamma{0.0, 1.0};
  RealRange min_child_weight{0.0, 10.0};
  /// When set, boosting draws run in GOSS mode with these ranges.
  std::optional<std::pair<RealRange, RealRange>> goss;
  IntRange n_trees{50, 200};
  RealRange bootstrap_fraction{0.5, 1.0};
  RealRange feature_fraction{0.3, 1.0};
  IntRange k{1, 50};
  RealRange ridge{1e-6, 10.0, true};
};

ModelSpace default_model_space(ModelKind kind);

/// Outlier-removal ranges. Percent grids hold the total fraction of the
/// train/test part removed per draw; an empty intra grid means
/// {0, 1/F, ..., F/F} * 5% for F folds.
struct OrmSpace {
  std::vector<OrmMethod> methods{OrmMethod::IsolationForest};
  std::vector<double> extra_percent_grid{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  std::vector<double> intra_percent_grid;
  IntRange n_trees{50, 150};
  IntRange subsample_size{64, 256};
  IntRange k{5, 40};
};

struct HyperSpace {
  ModelSpace model;
  OrmSpace orm;
};

void to_json(nlohmann::json& j, const HyperSpace& space);
void from_json(const nlohmann::json& j, HyperSpace& space);

/// {0, 1/F, ..., F/F} * 5%.
std::vector<double> intra_percent_grid(std::size_t folds);

enum class OrmMode { None, Intra, Extra };

std::string to_string(OrmMode mode);
OrmMode orm_mode_from_string(const std::string& text);

/// One sampled point of the joint model x outlier-removal space.
struct HyperDraw {
  ModelParams model_params;
  OrmParams orm_params;
  std::size_t draw_index = 0;
};

void to_json(nlohmann::json& j, const HyperDraw& draw);

/// Deterministic in (seed, draw_index). The model and ORM parts come from
/// separate streams, so the model parameters of a draw do not depend on the
/// mode; the percent is drawn by grid position so intra and extra draws with
/// grids of equal length remove comparable amounts.
HyperDraw sample_draw(const HyperSpace& space, OrmMode mode, std::size_t folds, std::uint64_t seed,
                      std::size_t draw_index);

// ---------------------------------------------------------------------------
// Intra / extra joint optimisation

struct CvPlan {
  std::size_t folds = 5;
  OrmMode mode = OrmMode::None;
  std::size_t iterations = 10;
  std::uint64_t seed = 0;
  TargetTransform transform = TargetTransform::None;
  Task task = Task::Regression;
  /// Trailing share held out as the validation part (sequential split).
  double validation_fraction = 0.2;
  int workers = 1;

  void validate() const;
};

struct DrawOutcome {
  std::size_t draw_index = 0;
  double metric = 0.0;
  bool failed = false;
  std::vector<double> predictions;          ///< out-of-fold, aligned with the train/test part
  std::vector<std::size_t> removed_per_fold;  ///< rows excluded from each fold's training set
  std::size_t removed_total = 0;            ///< distinct rows removed over the draw
  double seconds = 0.0;
};

struct IeoResult {
  std::vector<std::size_t> part_indices;        ///< rows of the train/test part
  std::vector<std::size_t> validation_indices;  ///< rows of the held-out part
  HyperDraw best;
  double best_metric = 0.0;
  std::vector<double> oof_predictions;          ///< best draw, aligned with part_indices
  std::vector<DrawOutcome> trace;               ///< predictions cleared except for the best draw
  std::vector<double> validation_predictions;
  std::optional<double> validation_metric;
  std::size_t final_removed = 0;
  Metric metric = Metric::Mape;
  OrmMode mode = OrmMode::None;
};

/// Scores one draw on `x`/`y` (the train/test part) by cross-validation with
/// the draw's outlier removal placed per `plan.mode`.
DrawOutcome evaluate_draw(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                          const HyperDraw& draw, Metric metric);

/// Randomised search over `space` with outlier removal inside (intra) or
/// before (extra) the fold rotation; refits the best draw on the filtered
/// train/test part and predicts the validation part.
IeoResult run_ieo(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                  const HyperSpace& space, Metric metric);

/// As run_ieo with caller-supplied draws.
IeoResult run_ieo_with_draws(const EncodedMatrix& x, std::span<const double> y, ModelKind kind, const CvPlan& plan,
                             const std::vector<HyperDraw>& draws, Metric metric);

nlohmann::json to_json(const IeoResult& result);
/// draw_index,metric,failed,removed_total
std::string trace_to_csv(const IeoResult& result);

/// Number of rows an outlier-removal step drops when `fraction` of `n` rows is
/// requested.
std::size_t removal_count(double fraction, std::size_t n);

// ---------------------------------------------------------------------------
// Search-length curve

struct CurvePoint {
  ModelKind kind;
  std::size_t iterations = 0;
  double best_metric = 0.0;
  double seconds = 0.0;  ///< summed wall-clock of the draws so far
};

/// Default checkpoints 25, 50, ..., 250.
std::vector<std::size_t> default_iteration_counts();

/// Best-so-far metric and cumulative draw time at each checkpoint, from one
/// random search of max(counts) draws per model (no outlier removal).
std::vector<CurvePoint> iteration_curve(const EncodedMatrix& x, std::span<const double> y,
                                        std::span<const ModelKind> kinds, std::span<const std::size_t> counts,
                                        const CvPlan& plan, Metric metric);

}  // namespace ieo
