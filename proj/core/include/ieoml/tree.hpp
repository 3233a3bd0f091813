#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/common.hpp"

namespace ieo {

/// Binary tree node. Internal nodes send x[feature] < threshold left.
/// Leaves carry `value`: one weight for gradient trees, a class distribution
/// for Gini trees.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> value;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root

  const std::vector<double>& leaf_value(std::span<const double> x) const;
  int depth() const;
  std::size_t leaf_count() const;
};

void to_json(nlohmann::json& j, const Tree& tree);
void from_json(const nlohmann::json& j, Tree& tree);

/// Split criterion over per-row statistic vectors.
///  - Gradient: stats (g, h); score G^2/(H+lambda); leaf -G/(H+lambda).
///    With g = -y, h = 1, lambda = 0 this is the CART squared-error split.
///  - Gini: stats are class weights; score sum(c^2)/sum(c); leaf is the
///    normalised class distribution.
enum class SplitCriterion { Gradient, Gini };

struct GrowthParams {
  SplitCriterion criterion = SplitCriterion::Gradient;
  int max_depth = 6;
  std::size_t min_samples_leaf = 1;
  /// Minimum hessian sum per child (gradient criterion only).
  double min_child_weight = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  /// Regularised second-order gain: 0.5 * (L + R - P) - gamma.
  bool second_order_gain = false;
  /// Fraction of the tree's features evaluated at each split.
  double feature_fraction = 1.0;
};

/// Row orderings per feature, computed once per matrix and shared by every
/// tree grown on it.
class SortedColumns {
 public:
  explicit SortedColumns(const Matrix& x);
  const std::vector<std::uint32_t>& order(std::size_t feature) const { return orders_[feature]; }
  std::size_t features() const noexcept { return orders_.size(); }

 private:
  std::vector<std::vector<std::uint32_t>> orders_;
};

/// Rows and statistics a tree is grown on.
struct GrowthInput {
  const Matrix& x;
  const SortedColumns& sorted;
  /// Per-row statistics, row-major with `stat_dim` entries per row; rows with
  /// multiplicity 0 are ignored.
  std::span<const double> stats;
  std::size_t stat_dim = 2;
  /// Number of times each row is counted towards min_samples_leaf.
  std::span<const std::uint32_t> multiplicity;
  /// Features the tree may split on (ascending). Empty means all.
  std::span<const std::size_t> features;
};

/// Exhaustive greedy growth over sorted unique values. Gain ties go to the
/// lower feature index, then the lower threshold. A split is taken only when
/// its gain is strictly positive.
Tree grow_tree(const GrowthInput& input, const GrowthParams& params, Rng* rng = nullptr);

}  // namespace ieo
