#include "ieoml/outliers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ieo {

std::string to_string(OrmMethod method) { return method == OrmMethod::IsolationForest ? "isolation-forest" : "lof"; }

OrmMethod orm_method_from_string(const std::string& text) {
  if (text == "isolation-forest" || text == "if") return OrmMethod::IsolationForest;
  if (text == "lof") return OrmMethod::Lof;
  throw PreconditionError("unknown outlier method '" + text + "'");
}

void OrmParams::validate() const {
  if (!(percent_removed >= 0.0 && percent_removed <= kMaxRemovedFraction + 1e-12))
    throw PreconditionError("orm params: percent_removed must lie in [0, 0.05]");
  if (method == OrmMethod::IsolationForest && (n_trees < 1 || subsample_size < 2))
    throw PreconditionError("orm params: isolation forest needs n_trees >= 1 and subsample_size >= 2");
  if (method == OrmMethod::Lof && k < 2) throw PreconditionError("orm params: LOF k must be >= 2");
}

void to_json(nlohmann::json& j, const OrmParams& p) {
  j = nlohmann::json{{"method", to_string(p.method)},
                     {"percent_removed", p.percent_removed},
                     {"n_trees", p.n_trees},
                     {"subsample_size", p.subsample_size},
                     {"k", p.k}};
}

void from_json(const nlohmann::json& j, OrmParams& p) {
  p = OrmParams{};
  p.method = orm_method_from_string(j.value("method", std::string("isolation-forest")));
  p.percent_removed = j.value("percent_removed", 0.0);
  p.n_trees = j.value("n_trees", p.n_trees);
  p.subsample_size = j.value("subsample_size", p.subsample_size);
  p.k = j.value("k", p.k);
}

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  constexpr double kEulerGamma = 0.5772156649015329;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

namespace {

struct IsoNode {
  int feature = -1;
  double split = 0.0;
  int left = -1;
  int right = -1;
  std::size_t size = 0;
};

class IsoTreeBuilder {
 public:
  IsoTreeBuilder(const Matrix& x, Rng& rng, int height_limit) : x_(x), rng_(rng), limit_(height_limit) {}

  std::vector<IsoNode> build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(rows, 0);
    return std::move(nodes_);
  }

 private:
  const Matrix& x_;
  Rng& rng_;
  int limit_;
  std::vector<IsoNode> nodes_;

  int grow(std::vector<std::size_t>& rows, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[static_cast<std::size_t>(index)].size = rows.size();
    if (depth >= limit_ || rows.size() <= 1) return index;
    std::vector<std::size_t> splittable;
    std::vector<std::pair<double, double>> range(x_.cols());
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto r : rows) {
        lo = std::min(lo, x_(r, f));
        hi = std::max(hi, x_(r, f));
      }
      range[f] = {lo, hi};
      if (hi > lo) splittable.push_back(f);
    }
    if (splittable.empty()) return index;
    const std::size_t f = splittable[uniform_index(rng_, splittable.size())];
    const auto [lo, hi] = range[f];
    double split = lo + uniform01(rng_) * (hi - lo);
    if (!(split > lo)) split = std::nextafter(lo, hi);
    std::vector<std::size_t> left, right;
    for (auto r : rows) (x_(r, f) < split ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes_[static_cast<std::size_t>(index)].feature = static_cast<int>(f);
    nodes_[static_cast<std::size_t>(index)].split = split;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(index)].left = l;
    nodes_[static_cast<std::size_t>(index)].right = r;
    return index;
  }
};

double path_length(const std::vector<IsoNode>& nodes, std::span<const double> x) {
  std::size_t node = 0;
  double depth = 0.0;
  while (nodes[node].feature >= 0) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right);
    depth += 1.0;
  }
  return depth + average_path_length(nodes[node].size);
}

}  // namespace

AnomalyScores isolation_forest_scores(const Matrix& x, int n_trees, std::size_t subsample_size, std::uint64_t seed) {
  const std::size_t n = x.rows();
  if (n < 2) throw PreconditionError("isolation_forest_scores: at least 2 rows required");
  if (n_trees < 1) throw PreconditionError("isolation_forest_scores: n_trees must be >= 1");
  const std::size_t psi = std::clamp<std::size_t>(subsample_size, 2, n);
  const int limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));

  // canonical row order: lexicographic by value, so sampling is independent
  // of how the caller ordered the rows
  auto canonical = iota_indices(n);
  std::stable_sort(canonical.begin(), canonical.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });

  std::vector<double> total_depth(n, 0.0);
  for (int t = 0; t < n_trees; ++t) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(t), 0x15});
    std::vector<std::size_t> pool = canonical;
    for (std::size_t i = 0; i < psi; ++i) {
      const std::size_t j = i + uniform_index(rng, n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(psi);
    IsoTreeBuilder builder(x, rng, limit);
    const auto nodes = builder.build(std::move(pool));
    for (std::size_t i = 0; i < n; ++i) total_depth[i] += path_length(nodes, x.row(i));
  }
  AnomalyScores out;
  out.method = OrmMethod::IsolationForest;
  out.params = {{"n_trees", n_trees}, {"subsample_size", psi}, {"seed", seed}};
  out.scores.resize(n);
  const double c = average_path_length(psi);
  for (std::size_t i = 0; i < n; ++i) out.scores[i] = std::pow(2.0, -(total_depth[i] / n_trees) / c);
  return out;
}

AnomalyScores isolation_forest_scores(const EncodedMatrix& x, int n_trees, std::size_t subsample_size,
                                      std::uint64_t seed) {
  return isolation_forest_scores(x.values, n_trees, subsample_size, seed);
}

AnomalyScores lof_scores(const Matrix& x, int k) {
  const std::size_t n = x.rows();
  if (k < 2) throw PreconditionError("lof_scores: k must be >= 2");
  if (static_cast<std::size_t>(k) >= n) throw PreconditionError("lof_scores: k must be < number of rows");
  const auto kk = static_cast<std::size_t>(k);

  std::vector<double> k_distance(n);
  std::vector<std::vector<std::pair<std::size_t, double>>> neighbours(n);
  std::vector<double> dist(n);
  std::vector<double> sorted;
  for (std::size_t a = 0; a < n; ++a) {
    const auto ra = x.row(a);
    sorted.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      const auto rb = x.row(b);
      double d = 0.0;
      for (std::size_t c = 0; c < ra.size(); ++c) d += (ra[c] - rb[c]) * (ra[c] - rb[c]);
      dist[b] = std::sqrt(d);
      sorted.push_back(dist[b]);
    }
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(kk - 1), sorted.end());
    k_distance[a] = sorted[kk - 1];
    for (std::size_t b = 0; b < n; ++b)
      if (b != a && dist[b] <= k_distance[a]) neighbours[a].emplace_back(b, dist[b]);
  }

  AnomalyScores out;
  out.method = OrmMethod::Lof;
  out.params = {{"k", k}};
  std::vector<double> lrd(n);
  for (std::size_t a = 0; a < n; ++a) {
    double reach = 0.0;
    for (const auto& [b, d] : neighbours[a]) reach += std::max(k_distance[b], d);
    reach /= static_cast<double>(neighbours[a].size());
    if (reach <= 0.0 || 1.0 / reach > kLrdCap) {
      lrd[a] = kLrdCap;
      ++out.capped_densities;
    } else {
      lrd[a] = 1.0 / reach;
    }
  }
  out.scores.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    double acc = 0.0;
    for (const auto& [b, d] : neighbours[a]) acc += lrd[b];
    out.scores[a] = acc / static_cast<double>(neighbours[a].size()) / lrd[a];
  }
  return out;
}

AnomalyScores lof_scores(const EncodedMatrix& x, int k) { return lof_scores(x.values, k); }

std::vector<std::size_t> remove_top_count(const AnomalyScores& scores, std::size_t count) {
  const std::size_t n = scores.scores.size();
  auto order = iota_indices(n);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.scores[a] > scores.scores[b]; });
  std::vector<char> removed(n, 0);
  for (std::size_t i = 0; i < std::min(count, n); ++i) removed[order[i]] = 1;
  std::vector<std::size_t> kept;
  kept.reserve(n - std::min(count, n));
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) kept.push_back(i);
  return kept;
}

std::vector<std::size_t> remove_top_percent(const AnomalyScores& scores, double percent) {
  if (!(percent >= 0.0 && percent <= 1.0)) throw PreconditionError("remove_top_percent: percent outside [0, 1]");
  const auto count =
      static_cast<std::size_t>(std::floor(percent * static_cast<double>(scores.scores.size()) + 1e-9));
  return remove_top_count(scores, count);
}

Matrix orm_input(const Matrix& features, std::span<const double> target, OrmMethod method) {
  Matrix z = features.with_column(target);
  if (method == OrmMethod::Lof) {
    for (std::size_t c = 0; c < z.cols(); ++c) {
      const auto col = z.column(c);
      const double mu = mean(col);
      double ss = 0.0;
      for (double v : col) ss += (v - mu) * (v - mu);
      const double sd = std::sqrt(ss / static_cast<double>(col.size()));
      for (std::size_t r = 0; r < z.rows(); ++r) z(r, c) = sd > 0.0 ? (z(r, c) - mu) / sd : 0.0;
    }
  }
  return z;
}

std::vector<std::size_t> apply_orm(const Matrix& features, std::span<const double> target, const OrmParams& params,
                                   std::size_t remove_count, std::uint64_t seed) {
  params.validate();
  const std::size_t n = features.rows();
  if (remove_count == 0 || n < 2) return iota_indices(n);
  const Matrix z = orm_input(features, target, params.method);
  if (params.method == OrmMethod::IsolationForest)
    return remove_top_count(isolation_forest_scores(z, params.n_trees, params.subsample_size, seed), remove_count);
  const int k = std::min(params.k, static_cast<int>(n) - 1);
  if (k < 2) return iota_indices(n);
  return remove_top_count(lof_scores(z, k), remove_count);
}

}  // namespace ieo
