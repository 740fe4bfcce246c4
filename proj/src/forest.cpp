#include "gbf/forest.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <utility>

#include "gbf/error.hpp"

namespace gbf {

std::size_t subsample_size(double sample_fraction, std::size_t n) {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw Error("sample_fraction must lie in (0, 1]");
  }
  // The small offset keeps products such as 0.4 * 500 from rounding up to k + 1.
  const double raw = std::ceil(sample_fraction * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, std::max<std::size_t>(n, 1));
}

std::vector<std::uint32_t> weighted_subsample(std::span<const double> weights, std::size_t k,
                                              CounterRng& rng) {
  const std::size_t n = weights.size();
  if (k > n) {
    throw Error("subsample size k exceeds n");
  }
  std::vector<std::pair<double, std::uint32_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = {std::log(rng.uniform_open()) / weights[i], static_cast<std::uint32_t>(i)};
  }
  // Larger key wins; equal keys resolve to the lower index.
  auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(), better);
  std::vector<std::uint32_t> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = keys[j].second;
  std::sort(out.begin(), out.end());
  return out;
}

double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = mean_of(values);
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

ForestModel::ForestModel(std::vector<Tree> trees, std::vector<std::vector<std::uint32_t>> inbag, std::size_t n)
    : trees_(std::move(trees)), inbag_(std::move(inbag)), n_(n) {
  if (trees_.empty() || trees_.size() != inbag_.size()) {
    throw Error("forest needs one in-bag list per tree");
  }
  k_ = inbag_.front().size();
  inclusion_.assign(trees_.size() * n_, 0);
  inclusion_count_.assign(n_, 0);
  for (std::size_t b = 0; b < inbag_.size(); ++b) {
    if (inbag_[b].size() != k_) throw Error("every tree must use the same subsample size");
    for (const auto i : inbag_[b]) {
      if (i >= n_) throw Error("in-bag index out of range");
      if (inclusion_[b * n_ + i]) throw Error("duplicate in-bag index");
      inclusion_[b * n_ + i] = 1;
      ++inclusion_count_[i];
    }
  }
}

std::vector<double> ForestModel::per_tree_predictions(std::span<const double> x) const {
  std::vector<double> out(trees_.size());
  for (std::size_t b = 0; b < trees_.size(); ++b) out[b] = trees_[b].predict(x);
  return out;
}

double ForestModel::predict(std::span<const double> x) const { return mean_of(per_tree_predictions(x)); }

void ForestModel::accumulate_ij_derivatives(std::span<const double> tree_predictions, std::span<double> out) const {
  const std::size_t B = trees_.size();
  if (B < 2) {
    throw Error("IJ derivatives need at least two trees");
  }
  const double centre = mean_of(tree_predictions);
  // (B - 1) cov_b(N_i, T) = sum_b N_ib d_b - Nbar_i sum_b d_b with d_b = T_b - mean T;
  // the second sum is zero up to rounding.
  const double scale = static_cast<double>(n_) / static_cast<double>(B - 1);
  std::vector<double> acc(n_, 0.0);
  double dev_total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double dev = tree_predictions[b] - centre;
    dev_total += dev;
    for (const auto i : inbag_[b]) acc[i] += dev;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const double n_bar = static_cast<double>(inclusion_count_[i]) / static_cast<double>(B);
    out[i] += scale * (acc[i] - n_bar * dev_total);
  }
}

std::vector<double> ForestModel::ij_derivatives(std::span<const double> x) const {
  std::vector<double> out(n_, 0.0);
  accumulate_ij_derivatives(per_tree_predictions(x), out);
  return out;
}

double ForestModel::tree_variance(std::span<const double> x) const {
  if (trees_.size() < 2) {
    throw Error("tree variance needs at least two trees");
  }
  return sample_variance(per_tree_predictions(x));
}

Proximity ForestModel::proximity(std::span<const double> x, std::size_t i, const Matrix& X_train) const {
  if (i >= n_ || X_train.rows() != n_) {
    throw Error("proximity: training index out of range");
  }
  std::size_t in_bag = 0;
  std::size_t shared = 0;
  for (std::size_t b = 0; b < trees_.size(); ++b) {
    if (!included(b, i)) continue;
    ++in_bag;
    if (trees_[b].leaf_id(x) == trees_[b].leaf_id(X_train.row(i))) ++shared;
  }
  if (in_bag == 0) {
    return {0.0, true};
  }
  return {static_cast<double>(shared) / static_cast<double>(in_bag), false};
}

std::vector<double> ForestModel::in_sample_predictions(const Matrix& X) const {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i));
  return out;
}

std::vector<double> ForestModel::oob_predictions(const Matrix& X, std::size_t* fallbacks) const {
  if (X.rows() != n_) {
    throw Error("oob_predictions needs the training matrix");
  }
  std::size_t missing = 0;
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < trees_.size(); ++b) {
      if (included(b, i)) continue;
      sum += trees_[b].predict(X.row(i));
      ++count;
    }
    if (count == 0) {
      ++missing;
      out[i] = predict(X.row(i));
    } else {
      out[i] = sum / static_cast<double>(count);
    }
  }
  if (fallbacks) *fallbacks = missing;
  return out;
}

ForestModel fit_forest(const Matrix& X, std::span<const double> r, std::span<const double> w,
                       const ForestParams& params) {
  const std::size_t n = X.rows();
  if (r.size() != n || w.size() != n) {
    throw Error("fit_forest: X, responses and weights differ in length");
  }
  if (params.num_trees < 1) {
    throw Error("forest needs at least one tree");
  }
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) {
    throw Error("all-zero sampling weights");
  }
  for (const double v : w) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error("sampling weights must be positive and finite");
  }
  const std::size_t k = subsample_size(params.sample_fraction, n);
  if (k > n) {
    throw Error("subsample size k exceeds n");
  }
  if (k < params.tree.min_node_size) {
    throw Error("subsample size k is below min_node_size");
  }

  const std::size_t B = params.num_trees;
  std::vector<Tree> trees(B);
  std::vector<std::vector<std::uint32_t>> inbag(B);

  auto build = [&](std::size_t b) {
    CounterRng rng(tree_seed(params.seed, b));
    inbag[b] = weighted_subsample(w, k, rng);
    TreeParams tree_params = params.tree;
    tree_params.seed = rng();
    const std::vector<std::size_t> rows(inbag[b].begin(), inbag[b].end());
    trees[b] = fit_tree(X, r, rows, tree_params);
  };

  std::size_t threads = params.num_threads == 0 ? std::thread::hardware_concurrency() : params.num_threads;
  threads = std::clamp<std::size_t>(threads, 1, B);
  if (threads == 1) {
    for (std::size_t b = 0; b < B; ++b) build(b);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t b = t; b < B; b += threads) build(b);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return ForestModel(std::move(trees), std::move(inbag), n);
}

}  // namespace gbf
