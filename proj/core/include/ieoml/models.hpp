#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/common.hpp"
#include "ieoml/dataset.hpp"
#include "ieoml/tree.hpp"

namespace ieo {

enum class ModelKind {
  Gbt,           ///< first-order gradient boosting
  GbtReg,        ///< second-order regularised boosting
  RandomForest,
  Knn,
  Linear,        ///< least squares (regression) / logistic (classification)
  Tree,          ///< single CART
};

enum class Task { Regression, Classification };
enum class TargetTransform { None, Log1p };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& text);
std::string to_string(Task task);
std::string to_string(TargetTransform transform);
TargetTransform target_transform_from_string(const std::string& text);

/// Gradient-based one-side sampling: keep the top `top_fraction` rows by
/// |gradient|, sample `other_fraction` of all rows from the rest and
/// up-weight them by (1 - top_fraction) / other_fraction.
struct GossParams {
  double top_fraction = 0.2;
  double other_fraction = 0.1;
  friend bool operator==(const GossParams&, const GossParams&) = default;
};

/// Hyper-parameters for every kind; each kind reads the subset it uses.
struct ModelParams {
  // trees
  int max_depth = 6;
  int min_samples_leaf = 1;
  // boosting
  int n_rounds = 100;
  double learning_rate = 0.1;
  double subsample = 1.0;
  double colsample = 1.0;
  double lambda = 1.0;            ///< second-order only
  double gamma = 0.0;             ///< second-order only
  double min_child_weight = 0.0;  ///< second-order: minimum hessian sum per child
  std::optional<GossParams> goss;
  // forest
  int n_trees = 100;
  double bootstrap_fraction = 1.0;
  bool bootstrap = true;
  double feature_fraction = 1.0;  ///< per-split feature subsampling
  // knn
  int k = 5;
  // linear
  double ridge = 0.0;

  std::uint64_t seed = 0;

  /// Throws PreconditionError when a field the kind uses is out of range.
  void validate(ModelKind kind) const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

void to_json(nlohmann::json& j, const ModelParams& p);
void from_json(const nlohmann::json& j, ModelParams& p);

/// Moderately sized per-kind defaults used by the experiment drivers.
ModelParams default_params(ModelKind kind);

struct ModelSpec {
  ModelKind kind = ModelKind::Gbt;
  ModelParams params;
};

/// {kind, default_params(kind)} for each kind.
std::vector<ModelSpec> default_specs(std::span<const ModelKind> kinds);

struct FitOptions {
  Task task = Task::Regression;
  TargetTransform transform = TargetTransform::None;
};

struct TreeModel {
  Tree tree;
};

struct BoostedModel {
  std::vector<double> base;        ///< one per output (1 for regression / binary)
  double learning_rate = 0.1;
  std::vector<std::vector<Tree>> rounds;  ///< rounds[t][output]
};

struct ForestModel {
  std::vector<Tree> trees;
};

struct KnnModel {
  Matrix train;  ///< standardised
  std::vector<double> targets;
  std::vector<double> center;
  std::vector<double> scale;
  int k = 5;
};

struct LinearModel {
  /// rows: one per output (1 for regression / binary logistic, K for
  /// one-vs-rest); each row is [intercept, coef_1 .. coef_M].
  std::vector<std::vector<double>> weights;
};

/// A fitted learner. Immutable; predict is a pure function of (model, X).
class TrainedModel {
 public:
  using Body = std::variant<TreeModel, BoostedModel, ForestModel, KnnModel, LinearModel>;

  TrainedModel(ModelKind kind, FitOptions options, std::vector<std::string> feature_names, int num_classes, Body body);

  ModelKind kind() const noexcept { return kind_; }
  Task task() const noexcept { return options_.task; }
  TargetTransform transform() const noexcept { return options_.transform; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  int num_classes() const noexcept { return num_classes_; }
  const Body& body() const noexcept { return body_; }

  /// Regression: durations (inverse-transformed); classification: labels.
  /// Throws PreconditionError when X's feature names differ from the fit.
  std::vector<double> predict(const EncodedMatrix& x) const;
  /// As predict, trusting that columns follow feature_names().
  std::vector<double> predict_values(const Matrix& x) const;
  /// Class probabilities (rows x num_classes); classification only.
  Matrix predict_proba(const Matrix& x) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);

 private:
  std::vector<double> raw_regression(const Matrix& x) const;

  ModelKind kind_;
  FitOptions options_;
  std::vector<std::string> feature_names_;
  int num_classes_ = 0;
  Body body_;
};

/// Version tag of the model JSON document.
inline constexpr int kModelFormatVersion = 1;

TrainedModel fit_tree(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                      const FitOptions& options = {});

enum class BoostingVariant { FirstOrder, SecondOrderRegularised };

TrainedModel fit_gbt(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                     BoostingVariant variant, const FitOptions& options = {});

/// Per-round training RMSE of a first-order / second-order regression fit
/// (on the transformed scale). Entry t is the error after t+1 rounds.
std::vector<double> boosting_training_curve(const EncodedMatrix& x, std::span<const double> y,
                                            const ModelParams& params, BoostingVariant variant);

TrainedModel fit_random_forest(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                               const FitOptions& options = {});

TrainedModel fit_knn(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                     const FitOptions& options = {});

TrainedModel fit_linear(const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                        const FitOptions& options = {});

/// Dispatches on kind.
TrainedModel fit_model(ModelKind kind, const EncodedMatrix& x, std::span<const double> y, const ModelParams& params,
                       const FitOptions& options = {});

/// Mean logistic loss plus ridge/2 * |coef|^2 (intercept unpenalised) and its
/// gradient with respect to [intercept, coef...]. Labels in {0, 1}.
double logistic_objective(const Matrix& x, std::span<const double> y, std::span<const double> weights, double ridge,
                          std::vector<double>* gradient);

}  // namespace ieo
