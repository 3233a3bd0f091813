#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ieoml/common.hpp"
#include "ieoml/dataset.hpp"

namespace testing {

inline ieo::EncodedMatrix encoded(const ieo::Matrix& m) {
  ieo::EncodedMatrix e;
  e.values = m;
  for (std::size_t c = 0; c < m.cols(); ++c) e.feature_names.push_back("x" + std::to_string(c));
  e.row_index = ieo::iota_indices(m.rows());
  return e;
}

inline ieo::EncodedMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  ieo::Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return encoded(m);
}

inline ieo::Matrix gaussian_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  auto rng = ieo::make_rng(seed, {0x7e57});
  ieo::Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m(r, c) = scale * ieo::standard_normal(rng);
  return m;
}

/// Temporary file removed on scope exit.
struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = std::filesystem::temp_directory_path() / ("ieoml_test_" + name);
    std::ofstream(path, std::ios::binary) << content;
  }
  ~TempFile() { std::filesystem::remove(path); }
  std::string str() const { return path.string(); }
};

inline double median_of(std::vector<double> v) { return ieo::median(std::move(v)); }

}  // namespace testing
