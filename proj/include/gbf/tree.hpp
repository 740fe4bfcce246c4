#ifndef GBF_TREE_HPP_
#define GBF_TREE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gbf/matrix.hpp"

namespace gbf {

struct TreeParams {
  std::size_t mtry = 1;           // features tried per split
  std::size_t min_node_size = 5;  // each child keeps at least this many samples
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;
};

// mtry = max(1, p / 3), min_node_size = 5, unlimited depth.
TreeParams default_tree_params(std::size_t num_features);

// Flat node record. Internal nodes have feature >= 0; leaves have feature == -1
// and a leaf id in 0..num_leaves-1.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  std::int32_t leaf_id = -1;

  bool is_leaf() const { return feature < 0; }
};

// Immutable CART regression tree. Routing: x[feature] <= threshold goes left.
class Tree {
 public:
  Tree() = default;
  // Validates the node table (child links in range, leaf ids dense).
  explicit Tree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> x) const { return nodes_[find_leaf(x)].value; }
  std::int32_t leaf_id(std::span<const double> x) const { return nodes_[find_leaf(x)].leaf_id; }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t num_leaves() const { return num_leaves_; }
  std::size_t depth() const;

 private:
  std::size_t find_leaf(std::span<const double> x) const;

  std::vector<TreeNode> nodes_;
  std::size_t num_leaves_ = 0;
};

// Fits on the samples listed in `rows` (indices into X and r; duplicates are
// not expected). r is indexed by row, so it has X.rows() entries.
Tree fit_tree(const Matrix& X, std::span<const double> r, std::span<const std::size_t> rows,
              const TreeParams& params);
// Fits on every row of X.
Tree fit_tree(const Matrix& X, std::span<const double> r, const TreeParams& params);

inline double predict_tree(const Tree& tree, std::span<const double> x) { return tree.predict(x); }
inline std::int32_t leaf_id(const Tree& tree, std::span<const double> x) { return tree.leaf_id(x); }

}  // namespace gbf

#endif  // GBF_TREE_HPP_
