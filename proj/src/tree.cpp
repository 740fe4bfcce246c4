#include "gbf/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "gbf/error.hpp"
#include "gbf/rng.hpp"

namespace gbf {
namespace {

struct SplitCandidate {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const double> r, const TreeParams& params)
      : X_(X), r_(r), params_(params), rng_(params.seed), features_(X.cols()) {
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  std::vector<TreeNode> build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    grow(0, rows_.size(), 0);
    return std::move(nodes_);
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const auto node_index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();

    const std::size_t m = end - begin;
    double sum = 0.0;
    double lo = r_[rows_[begin]];
    double hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = r_[rows_[i]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    // The mean of a node lies in [lo, hi]; clamping removes summation rounding.
    const double mean = std::clamp(sum / static_cast<double>(m), lo, hi);

    const bool too_small = m < 2 * params_.min_node_size;
    const bool too_deep = params_.max_depth && depth >= *params_.max_depth;
    if (too_small || too_deep || lo == hi) {
      return make_leaf(node_index, mean);
    }

    const SplitCandidate best = find_split(begin, end, mean);
    if (best.feature < 0) {
      return make_leaf(node_index, mean);
    }

    const auto f = static_cast<std::size_t>(best.feature);
    const auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](std::size_t row) { return X_(row, f) <= best.threshold; });
    const auto split = static_cast<std::size_t>(mid - rows_.begin());

    const std::int32_t left = grow(begin, split, depth + 1);
    const std::int32_t right = grow(split, end, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(node_index)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    node.value = mean;
    return node_index;
  }

  std::int32_t make_leaf(std::int32_t node_index, double value) {
    TreeNode& node = nodes_[static_cast<std::size_t>(node_index)];
    node.value = value;
    node.leaf_id = next_leaf_id_++;
    return node_index;
  }

  std::vector<std::size_t> draw_features() {
    const std::size_t p = features_.size();
    const std::size_t mtry = std::min(params_.mtry, p);
    // Partial Fisher-Yates; features_ keeps its permuted state between nodes.
    for (std::size_t i = 0; i < mtry && mtry < p; ++i) {
      const auto j = i + static_cast<std::size_t>(rng_.below(p - i));
      std::swap(features_[i], features_[j]);
    }
    std::vector<std::size_t> chosen(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  SplitCandidate find_split(std::size_t begin, std::size_t end, double mean) {
    const std::size_t m = end - begin;
    const std::size_t min_leaf = params_.min_node_size;

    double node_sse = 0.0;
    double centered_total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double c = r_[rows_[i]] - mean;
      node_sse += c * c;
      centered_total += c;
    }
    const double base = centered_total * centered_total / static_cast<double>(m);

    SplitCandidate best;
    for (const std::size_t f : draw_features()) {
      scratch_.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t row = rows_[i];
        scratch_.emplace_back(X_(row, f), r_[row] - mean);
      }
      std::sort(scratch_.begin(), scratch_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < m; ++i) {
        left_sum += scratch_[i].second;
        const std::size_t n_left = i + 1;
        const std::size_t n_right = m - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        const double a = scratch_[i].first;
        const double b = scratch_[i + 1].first;
        if (!(a < b)) continue;
        const double right_sum = centered_total - left_sum;
        // Reduction in the sum of squared deviations from splitting here.
        const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                            right_sum * right_sum / static_cast<double>(n_right) - base;
        if (gain > best.gain) {
          double threshold = a + (b - a) / 2.0;
          if (!(threshold < b)) threshold = a;
          best = {static_cast<std::int32_t>(f), threshold, gain};
        }
      }
    }
    if (best.feature >= 0 && !(best.gain > 1e-12 * node_sse)) {
      best.feature = -1;
    }
    return best;
  }

  const Matrix& X_;
  std::span<const double> r_;
  const TreeParams& params_;
  CounterRng rng_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<double, double>> scratch_;
  std::int32_t next_leaf_id_ = 0;
};

void check_params(const TreeParams& params, std::size_t num_features) {
  if (params.mtry < 1 || params.mtry > num_features) {
    throw Error("mtry must lie in [1, " + std::to_string(num_features) + "]");
  }
  if (params.min_node_size < 1) {
    throw Error("min_node_size must be at least 1");
  }
  if (params.max_depth && *params.max_depth < 1) {
    throw Error("max_depth must be positive");
  }
}

}  // namespace

TreeParams default_tree_params(std::size_t num_features) {
  TreeParams params;
  params.mtry = std::max<std::size_t>(1, num_features / 3);
  params.min_node_size = 5;
  return params;
}

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) {
    throw Error("tree has no nodes");
  }
  const auto size = static_cast<std::int32_t>(nodes_.size());
  std::vector<bool> seen_leaf;
  for (const auto& node : nodes_) {
    if (node.is_leaf()) {
      if (node.leaf_id < 0) throw Error("leaf without id");
      const auto id = static_cast<std::size_t>(node.leaf_id);
      if (id >= seen_leaf.size()) seen_leaf.resize(id + 1, false);
      if (seen_leaf[id]) throw Error("duplicate leaf id");
      seen_leaf[id] = true;
      ++num_leaves_;
    } else if (node.left <= 0 || node.right <= 0 || node.left >= size || node.right >= size) {
      throw Error("tree child index out of range");
    }
  }
  if (num_leaves_ != seen_leaf.size()) {
    throw Error("leaf ids are not dense");
  }
}

std::size_t Tree::find_leaf(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& node = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                            : node.right);
  }
  return i;
}

std::size_t Tree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes_[i].is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
    }
  }
  return deepest;
}

Tree fit_tree(const Matrix& X, std::span<const double> r, std::span<const std::size_t> rows,
              const TreeParams& params) {
  if (rows.empty()) {
    throw Error("cannot fit a tree on an empty subsample");
  }
  if (r.size() != X.rows()) {
    throw Error("fit_tree: response length does not match X");
  }
  check_params(params, X.cols());
  for (const std::size_t row : rows) {
    if (row >= X.rows()) throw Error("fit_tree: row index out of range");
    if (!std::isfinite(r[row])) throw Error("fit_tree: non-finite pseudo-response");
  }
  TreeBuilder builder(X, r, params);
  return Tree(builder.build(std::vector<std::size_t>(rows.begin(), rows.end())));
}

Tree fit_tree(const Matrix& X, std::span<const double> r, const TreeParams& params) {
  std::vector<std::size_t> rows(X.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit_tree(X, r, rows, params);
}

}  // namespace gbf
