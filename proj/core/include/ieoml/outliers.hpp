#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/common.hpp"
#include "ieoml/dataset.hpp"

namespace ieo {

enum class OrmMethod { IsolationForest, Lof };

std::string to_string(OrmMethod method);
OrmMethod orm_method_from_string(const std::string& text);

/// Per-record anomaly scores; higher means more anomalous.
struct AnomalyScores {
  std::vector<double> scores;
  OrmMethod method = OrmMethod::IsolationForest;
  nlohmann::json params;
  /// LOF only: records whose local reachability density hit the cap.
  std::size_t capped_densities = 0;
};

/// Outlier-removal configuration. percent_removed is a fraction in [0, 0.05].
struct OrmParams {
  OrmMethod method = OrmMethod::IsolationForest;
  double percent_removed = 0.0;
  int n_trees = 100;
  std::size_t subsample_size = 256;
  int k = 20;

  void validate() const;
  friend bool operator==(const OrmParams&, const OrmParams&) = default;
};

void to_json(nlohmann::json& j, const OrmParams& p);
void from_json(const nlohmann::json& j, OrmParams& p);

inline constexpr double kMaxRemovedFraction = 0.05;
inline constexpr double kLrdCap = 1e12;

/// Expected path length of an unsuccessful binary-search-tree lookup among
/// n points: 2 H(n-1) - 2 (n-1) / n, with c(2) = 1 and c(n <= 1) = 0.
double average_path_length(std::size_t n);

/// Isolation Forest score 2^(-E[h(x)] / c(psi)) in (0, 1). The subsample
/// size is capped at the row count. Rows are put in a canonical (sorted)
/// order before sampling, so permuting the input permutes the scores.
AnomalyScores isolation_forest_scores(const Matrix& x, int n_trees, std::size_t subsample_size, std::uint64_t seed);
AnomalyScores isolation_forest_scores(const EncodedMatrix& x, int n_trees, std::size_t subsample_size,
                                      std::uint64_t seed);

/// Local Outlier Factor with the classical neighbourhood (every point within
/// the k-distance, ties included) on Euclidean distance.
AnomalyScores lof_scores(const Matrix& x, int k);
AnomalyScores lof_scores(const EncodedMatrix& x, int k);

/// Removes the `count` highest scores (ties: lower row index removed first)
/// and returns the kept row indices in ascending order.
std::vector<std::size_t> remove_top_count(const AnomalyScores& scores, std::size_t count);

/// remove_top_count with count = floor(percent * N).
std::vector<std::size_t> remove_top_percent(const AnomalyScores& scores, double percent);

/// Matrix the removal methods score: features with the target appended as a
/// final column. For LOF every column is z-scored (constant columns become 0)
/// so the Euclidean distance is not dominated by the duration scale.
Matrix orm_input(const Matrix& features, std::span<const double> target, OrmMethod method);

/// Scores [features | target] with the configured method and drops the
/// `remove_count` most anomalous rows. Returns kept indices, ascending.
std::vector<std::size_t> apply_orm(const Matrix& features, std::span<const double> target, const OrmParams& params,
                                   std::size_t remove_count, std::uint64_t seed);

}  // namespace ieo
