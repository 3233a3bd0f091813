#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ieoml/common.hpp"

namespace ieo {

enum class ColumnKind { Numeric, Categorical, Boolean };

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& text);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::optional<std::string> unit;
};

/// Ordered feature columns plus the name of the duration (minutes) column.
struct FeatureSchema {
  std::vector<ColumnSpec> columns;
  std::string target_column = "duration";

  /// Throws PreconditionError on duplicate names, a target listed as a
  /// feature, or an empty feature list.
  void validate() const;
  std::optional<std::size_t> index_of(const std::string& name) const;
};

void to_json(nlohmann::json& j, const FeatureSchema& schema);
void from_json(const nlohmann::json& j, FeatureSchema& schema);

/// A raw cell: missing, numeric (numeric and boolean columns) or text
/// (categorical columns).
using CellValue = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const CellValue& v) { return std::holds_alternative<std::monostate>(v); }

/// Incident records: one raw value per schema column and a duration in minutes.
/// Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureSchema schema, std::vector<std::vector<CellValue>> rows, std::vector<double> durations);

  const FeatureSchema& schema() const noexcept { return schema_; }
  std::size_t size() const noexcept { return durations_.size(); }
  bool empty() const noexcept { return durations_.empty(); }
  const std::vector<std::vector<CellValue>>& rows() const noexcept { return rows_; }
  const std::vector<double>& durations() const noexcept { return durations_; }
  const CellValue& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }

  Dataset select(std::span<const std::size_t> indices) const;
  /// Copy with one additional numeric column appended to the schema.
  Dataset with_numeric_column(const std::string& name, std::span<const double> values) const;

  friend bool operator==(const Dataset&, const Dataset&);

 private:
  FeatureSchema schema_;
  std::vector<std::vector<CellValue>> rows_;
  std::vector<double> durations_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

/// Duration computed as (end - start) in minutes from two timestamp columns
/// formatted "YYYY-MM-DD HH:MM:SS[.fff]".
struct DurationFromTimestamps {
  std::string start_column;
  std::string end_column;
};

/// Keep only rows whose `column` equals one of `values` (exact match).
struct RowFilter {
  std::string column;
  std::vector<std::string> values;
};

struct CsvOptions {
  std::optional<DurationFromTimestamps> duration_from;
  std::vector<RowFilter> filters;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_bad_target = 0;
  std::size_t dropped_by_filter = 0;
};

struct LoadResult {
  Dataset dataset;
  LoadReport report;
};

/// Parses one RFC 4180 record set. Exposed for tests.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Loads a header-first CSV. `column_map` maps schema names (features and the
/// target) to CSV header names; unmapped schema names are looked up as-is.
/// Rows whose target does not parse as a finite non-negative number are
/// dropped and counted.
LoadResult load_csv(const std::string& path, const FeatureSchema& schema,
                    const std::map<std::string, std::string>& column_map = {},
                    const CsvOptions& options = {});

/// Writes the dataset back out as CSV (schema columns then the target).
void write_csv(const Dataset& dataset, const std::string& path);

/// Minutes since 1970-01-01 for "YYYY-MM-DD HH:MM:SS[.fff]"; nullopt when malformed.
std::optional<double> parse_timestamp_minutes(const std::string& text);

// ---------------------------------------------------------------------------
// Encoding

/// Numeric model input: one-hot categoricals, booleans as {0,1}.
struct EncodedMatrix {
  Matrix values;
  std::vector<std::string> feature_names;
  std::vector<std::size_t> row_index;  ///< dataset row of each matrix row

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
  EncodedMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Appends a named numeric column.
  EncodedMatrix with_column(const std::string& name, std::span<const double> column) const;
};

/// Encoding state learned from one dataset and reusable on another with the
/// same schema. Unseen categorical levels map to the "<missing>" indicator
/// when it exists, otherwise to all zeros.
class Encoder {
 public:
  static constexpr const char* kMissingLevel = "<missing>";

  static Encoder fit(const Dataset& dataset);
  EncodedMatrix transform(const Dataset& dataset) const;
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

 private:
  struct ColumnState {
    ColumnKind kind = ColumnKind::Numeric;
    double fill = 0.0;                ///< median for numeric / boolean
    std::vector<std::string> levels;  ///< sorted, for categorical
  };
  FeatureSchema schema_;
  std::vector<ColumnState> columns_;
  std::vector<std::string> feature_names_;
};

EncodedMatrix encode(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic incident logs

/// Multiplicative effect on duration. Categorical/boolean columns: factor
/// exp(log_effect) when the value equals `level` (booleans: "true").
/// Numeric columns: exp(log_effect * z) with z the column's standard score
/// under the generator's distribution. With `only_above`, the effect applies
/// only to records whose base duration exceeds that many minutes.
struct PlantedEffect {
  std::string feature;
  std::optional<std::string> level;
  double log_effect = 0.0;
  std::optional<double> only_above;
};

struct SynthConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double mu = 3.6888794541139363;  ///< ln(40)
  double sigma = 0.6;
  std::vector<PlantedEffect> effects;
  std::size_t noise_features = 0;
  bool round_to_minutes = true;
  /// Fraction of rows whose duration is replaced by 0 or 1 minute.
  double short_fraction = 0.0;
  /// Fraction of rows whose logged duration is multiplied by corrupt_factor.
  double corrupt_fraction = 0.0;
  double corrupt_factor = 20.0;
  /// Adds the logged duration itself as a numeric feature.
  bool leak_duration = false;
};

void to_json(nlohmann::json& j, const SynthConfig& config);
void from_json(const nlohmann::json& j, SynthConfig& config);

struct SynthOutput {
  Dataset dataset;
  std::vector<double> clean_durations;  ///< before corruption / short-record injection
  std::vector<std::size_t> corrupted;   ///< rows with corrupted durations, ascending
};

SynthOutput synthesize_detailed(const SynthConfig& config);
Dataset synthesize(const SynthConfig& config);

// ---------------------------------------------------------------------------
// Profiling

struct DistributionFit {
  std::string distribution;  ///< "log-normal" | "log-logistic" | "weibull"
  std::map<std::string, double> params;
  double log_likelihood = 0.0;
  double aic = 0.0;
  bool converged = true;
};

struct LogHistogram {
  std::vector<double> edges;  ///< over ln(duration + 1)
  std::vector<std::size_t> counts;
};

struct ProfileReport {
  std::vector<std::pair<double, double>> ecdf;  ///< (duration, cumulative fraction)
  LogHistogram log_histogram;
  std::vector<DistributionFit> fitted;  ///< ascending AIC; failed fits last
  double zero_shift = 0.5;
  std::size_t shifted_records = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct ProfileOptions {
  std::size_t histogram_bins = 30;
};

/// Fraction of durations <= t.
double ecdf_at(std::span<const double> durations, double t);

/// Maximum-likelihood fits of the three long-tail families; durations of
/// zero are shifted by +0.5 minute first. Exposed separately for tests.
std::vector<DistributionFit> fit_distributions(std::span<const double> durations);

ProfileReport profile(const Dataset& dataset, const ProfileOptions& options = {});
nlohmann::json to_json(const ProfileReport& report);

}  // namespace ieo
