#include "ieoml/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ieo {

const std::vector<double>& Tree::leaf_value(std::span<const double> x) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[node].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> depth(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void to_json(nlohmann::json& j, const Tree& tree) {
  // Nested node records; children are embedded in their parent.
  auto emit = [&](auto&& self, std::size_t i) -> nlohmann::json {
    const auto& n = tree.nodes[i];
    if (n.is_leaf()) return nlohmann::json{{"leaf", n.value}};
    return nlohmann::json{{"feature", n.feature},
                          {"threshold", n.threshold},
                          {"left", self(self, static_cast<std::size_t>(n.left))},
                          {"right", self(self, static_cast<std::size_t>(n.right))}};
  };
  j = tree.nodes.empty() ? nlohmann::json::object() : emit(emit, 0);
}

void from_json(const nlohmann::json& j, Tree& tree) {
  tree.nodes.clear();
  auto read = [&](auto&& self, const nlohmann::json& node) -> int {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (node.contains("leaf")) {
      tree.nodes[static_cast<std::size_t>(index)].value = node.at("leaf").get<std::vector<double>>();
      return index;
    }
    tree.nodes[static_cast<std::size_t>(index)].feature = node.at("feature").get<int>();
    tree.nodes[static_cast<std::size_t>(index)].threshold = node.at("threshold").get<double>();
    const int left = self(self, node.at("left"));
    const int right = self(self, node.at("right"));
    tree.nodes[static_cast<std::size_t>(index)].left = left;
    tree.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  };
  if (!j.empty()) read(read, j);
}

SortedColumns::SortedColumns(const Matrix& x) : orders_(x.cols()) {
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& order = orders_[f];
    order.resize(x.rows());
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
}

namespace {

class Grower {
 public:
  Grower(const GrowthInput& in, const GrowthParams& p, Rng* rng) : in_(in), p_(p), rng_(rng), dim_(in.stat_dim) {
    if (in.features.empty()) {
      features_ = iota_indices(in.x.cols());
    } else {
      features_.assign(in.features.begin(), in.features.end());
    }
    orders_.resize(features_.size());
    for (std::size_t k = 0; k < features_.size(); ++k) {
      const auto& full = in.sorted.order(features_[k]);
      auto& mine = orders_[k];
      mine.reserve(full.size());
      for (auto r : full)
        if (in.multiplicity[r] > 0) mine.push_back(r);
    }
    if (features_.empty()) {
      for (std::uint32_t r = 0; r < in.x.rows(); ++r)
        if (in.multiplicity[r] > 0) rows_only_.push_back(r);
    }
    go_left_.assign(in.x.rows(), 0);
    scratch_.resize(in.x.rows());
  }

  Tree grow() {
    const std::size_t m = features_.empty() ? rows_only_.size() : orders_[0].size();
    build(0, m, 0);
    return std::move(tree_);
  }

 private:
  const GrowthInput& in_;
  const GrowthParams& p_;
  Rng* rng_;
  std::size_t dim_;
  std::vector<std::size_t> features_;
  std::vector<std::vector<std::uint32_t>> orders_;
  std::vector<std::uint32_t> rows_only_;
  std::vector<char> go_left_;
  std::vector<std::uint32_t> scratch_;
  Tree tree_;

  const std::vector<std::uint32_t>& any_order() const { return features_.empty() ? rows_only_ : orders_[0]; }

  double score(const double* s, std::size_t count) const {
    if (count == 0) return 0.0;
    if (p_.criterion == SplitCriterion::Gradient) {
      const double den = s[1] + p_.lambda;
      return den > 0.0 ? s[0] * s[0] / den : 0.0;
    }
    double total = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      total += s[k];
      sq += s[k] * s[k];
    }
    return total > 0.0 ? sq / total : 0.0;
  }

  std::vector<double> leaf(const std::vector<double>& s) const {
    if (p_.criterion == SplitCriterion::Gradient) {
      const double den = s[1] + p_.lambda;
      return {den > 0.0 ? -s[0] / den : 0.0};
    }
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    std::vector<double> dist(dim_, 0.0);
    if (total > 0.0)
      for (std::size_t k = 0; k < dim_; ++k) dist[k] = s[k] / total;
    return dist;
  }

  void add_row(std::vector<double>& acc, std::uint32_t r) const {
    const double* s = in_.stats.data() + static_cast<std::size_t>(r) * dim_;
    for (std::size_t k = 0; k < dim_; ++k) acc[k] += s[k];
  }

  int build(std::size_t begin, std::size_t end, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    std::vector<double> total(dim_, 0.0);
    std::size_t count = 0;
    const auto& base_order = any_order();
    for (std::size_t i = begin; i < end; ++i) {
      add_row(total, base_order[i]);
      count += in_.multiplicity[base_order[i]];
    }

    struct Best {
      double gain;
      std::size_t feature_slot = 0;
      double threshold = 0.0;
      std::size_t left_size = 0;
    };
    const double parent_score = score(total.data(), count);
    Best best{1e-12 * std::max(1.0, std::abs(parent_score))};
    bool found = false;

    const bool can_split = depth < p_.max_depth && !features_.empty() && count >= 2 * std::max<std::size_t>(1, p_.min_samples_leaf);
    if (can_split) {
      for (std::size_t slot : candidate_slots()) {
        const std::size_t f = features_[slot];
        const auto& order = orders_[slot];
        std::vector<double> left(dim_, 0.0), right(dim_);
        std::size_t left_count = 0;
        for (std::size_t i = begin; i + 1 < end; ++i) {
          const std::uint32_t r = order[i];
          add_row(left, r);
          left_count += in_.multiplicity[r];
          const double xv = in_.x(r, f);
          const double xn = in_.x(order[i + 1], f);
          if (!(xv < xn)) continue;
          const std::size_t right_count = count - left_count;
          if (left_count < p_.min_samples_leaf || right_count < p_.min_samples_leaf) continue;
          for (std::size_t k = 0; k < dim_; ++k) right[k] = total[k] - left[k];
          if (p_.criterion == SplitCriterion::Gradient &&
              (left[1] < p_.min_child_weight || right[1] < p_.min_child_weight))
            continue;
          double gain = score(left.data(), left_count) + score(right.data(), right_count) - parent_score;
          if (p_.second_order_gain) gain = 0.5 * gain - p_.gamma;
          if (gain > best.gain) {
            double thr = 0.5 * (xv + xn);
            if (!(xv < thr && thr <= xn)) thr = xn;
            best = {gain, slot, thr, i + 1 - begin};
            found = true;
          }
        }
      }
    }

    if (!found) {
      tree_.nodes[static_cast<std::size_t>(index)].value = leaf(total);
      return index;
    }

    const std::size_t f = features_[best.feature_slot];
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = orders_[best.feature_slot][i];
      go_left_[r] = in_.x(r, f) < best.threshold ? 1 : 0;
    }
    for (auto& order : orders_) {
      std::size_t l = begin, rr = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (go_left_[order[i]]) order[l++] = order[i];
        else scratch_[rr++] = order[i];
      }
      std::copy_n(scratch_.begin(), rr, order.begin() + static_cast<std::ptrdiff_t>(l));
    }
    const std::size_t mid = begin + best.left_size;
    tree_.nodes[static_cast<std::size_t>(index)].feature = static_cast<int>(f);
    tree_.nodes[static_cast<std::size_t>(index)].threshold = best.threshold;
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    tree_.nodes[static_cast<std::size_t>(index)].left = left;
    tree_.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }

  std::vector<std::size_t> candidate_slots() {
    std::vector<std::size_t> slots = iota_indices(features_.size());
    if (p_.feature_fraction >= 1.0 || rng_ == nullptr) return slots;
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(p_.feature_fraction * static_cast<double>(slots.size()))));
    for (std::size_t i = 0; i < take && i < slots.size(); ++i) {
      const std::size_t j = i + uniform_index(*rng_, slots.size() - i);
      std::swap(slots[i], slots[j]);
    }
    slots.resize(std::min(take, slots.size()));
    std::sort(slots.begin(), slots.end());
    return slots;
  }
};

}  // namespace

Tree grow_tree(const GrowthInput& input, const GrowthParams& params, Rng* rng) {
  if (input.multiplicity.size() != input.x.rows())
    throw PreconditionError("grow_tree: multiplicity length differs from row count");
  if (input.stats.size() != input.x.rows() * input.stat_dim)
    throw PreconditionError("grow_tree: stats size mismatch");
  if (params.criterion == SplitCriterion::Gradient && input.stat_dim != 2)
    throw PreconditionError("grow_tree: gradient criterion needs (g, h) statistics");
  Grower grower(input, params, rng);
  return grower.grow();
}

}  // namespace ieo
