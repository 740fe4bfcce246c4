#ifndef GBF_FOREST_HPP_
#define GBF_FOREST_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gbf/matrix.hpp"
#include "gbf/rng.hpp"
#include "gbf/tree.hpp"

namespace gbf {

struct ForestParams {
  std::size_t num_trees = 500;
  double sample_fraction = 0.5;  // k = ceil(fraction * n), drawn without replacement
  TreeParams tree;
  std::uint64_t seed = 0;
  std::size_t num_threads = 1;  // 0 = hardware concurrency; results do not depend on it
};

std::size_t subsample_size(double sample_fraction, std::size_t n);

// Per-tree seed; a pure function of (forest seed, tree index).
inline std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t tree_index) {
  return derive_seed(forest_seed, "tree", tree_index);
}

// Size-k subsample without replacement, inclusion favouring large weights:
// key_i = log(u_i) / w_i, keep the k largest keys. Returned indices are sorted.
std::vector<std::uint32_t> weighted_subsample(std::span<const double> weights, std::size_t k,
                                              CounterRng& rng);

struct Proximity {
  double score = 0.0;
  bool never_in_bag = false;
};

// Subsampled regression forest with its inclusion matrix N (B x n, 0/1).
class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<Tree> trees, std::vector<std::vector<std::uint32_t>> inbag, std::size_t n);

  std::size_t num_trees() const { return trees_.size(); }
  std::size_t n() const { return n_; }
  std::size_t k() const { return k_; }

  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<std::uint32_t>& inbag(std::size_t b) const { return inbag_[b]; }
  bool included(std::size_t b, std::size_t i) const { return inclusion_[b * n_ + i] != 0; }
  // Row-major B x n copy of N.
  const std::vector<std::uint8_t>& inclusion_matrix() const { return inclusion_; }

  std::vector<double> per_tree_predictions(std::span<const double> x) const;
  double predict(std::span<const double> x) const;

  // n * cov_b(N_{i,b}, T_b(x)) for every training point i, divisor B - 1.
  std::vector<double> ij_derivatives(std::span<const double> x) const;
  // Same, from already computed per-tree predictions; accumulates into `out`.
  void accumulate_ij_derivatives(std::span<const double> tree_predictions, std::span<double> out) const;

  // var_b(T_b(x)), divisor B - 1.
  double tree_variance(std::span<const double> x) const;

  // Fraction of trees having training point i in-bag in which x shares i's leaf.
  Proximity proximity(std::span<const double> x, std::size_t i, const Matrix& X_train) const;

  // Forest predictions at the training rows (all trees).
  std::vector<double> in_sample_predictions(const Matrix& X) const;
  // Average over trees that did not see the row; rows in every subsample fall
  // back to the all-tree prediction and are counted in `fallbacks`.
  std::vector<double> oob_predictions(const Matrix& X, std::size_t* fallbacks = nullptr) const;

 private:
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint32_t>> inbag_;
  std::vector<std::uint8_t> inclusion_;
  std::vector<std::uint32_t> inclusion_count_;  // trees containing each row
  std::size_t n_ = 0;
  std::size_t k_ = 0;
};

ForestModel fit_forest(const Matrix& X, std::span<const double> r, std::span<const double> w,
                       const ForestParams& params);

// Mean and divisor-(B-1) variance, computed in a fixed order.
double mean_of(std::span<const double> values);
double sample_variance(std::span<const double> values);

inline double predict_forest(const ForestModel& model, std::span<const double> x) { return model.predict(x); }

}  // namespace gbf

#endif  // GBF_FOREST_HPP_
