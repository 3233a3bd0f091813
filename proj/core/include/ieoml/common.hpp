#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ieo {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix select_rows(std::span<const std::size_t> rows) const;
  /// Appends `values` as a new last column.
  Matrix with_column(std::span<const double> values) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Thrown when a caller violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Stateless 64-bit mixer (splitmix64 finaliser).
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed for an independent random stream keyed by (seed, keys...).
/// Every stochastic step derives its engine from such a key, never from
/// shared state, so results do not depend on scheduling.
std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(stream_seed(seed, keys));
}

/// Uniform double in [0, 1) from the top 53 bits; identical across standard
/// libraries, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Standard normal draw (Box-Muller, both libraries agree bit for bit).
double standard_normal(Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index must
/// write only to its own output slot; the call returns once all are done and
/// rethrows the first exception raised by any index.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Sequence 0..n-1.
std::vector<std::size_t> iota_indices(std::size_t n);

/// Empirical quantile with linear interpolation between order statistics
/// (type-7 definition); q in [0, 1].
double quantile(std::span<const double> values, double q);

double mean(std::span<const double> values);
double median(std::vector<double> values);

/// Fixed textual form of a number for CSV output (%.12g; nan/inf spelled out).
std::string format_number(double value);

/// Writes through a sibling temporary file and a rename, creating parent
/// directories as needed.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ieo
