#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gbf/error.hpp"
#include "gbf/forest.hpp"
#include "oracles.hpp"

using gbf::ForestModel;
using gbf::ForestParams;
using gbf::Matrix;

namespace {

ForestParams small_params(std::size_t B, double fraction, std::uint64_t seed) {
  ForestParams params;
  params.num_trees = B;
  params.sample_fraction = fraction;
  params.tree = gbf::default_tree_params(3);
  params.tree.min_node_size = 2;
  params.seed = seed;
  return params;
}

gbf::Tree leaf_tree(double value) {
  gbf::TreeNode leaf;
  leaf.value = value;
  leaf.leaf_id = 0;
  return gbf::Tree({leaf});
}

// Split on feature 0 at `threshold`, leaves valued lo / hi.
gbf::Tree stump(double threshold, double lo, double hi) {
  gbf::TreeNode root, left, right;
  root.feature = 0;
  root.threshold = threshold;
  root.left = 1;
  root.right = 2;
  left.value = lo;
  left.leaf_id = 0;
  right.value = hi;
  right.leaf_id = 1;
  return gbf::Tree({root, left, right});
}

}  // namespace

TEST_CASE("subsample size") {
  CHECK(gbf::subsample_size(0.4, 500) == 200);
  CHECK(gbf::subsample_size(0.5, 7) == 4);
  CHECK(gbf::subsample_size(1.0, 9) == 9);
  CHECK_THROWS_AS(gbf::subsample_size(0.0, 9), gbf::Error);
}

TEST_CASE("k = n includes everything and zeroes the derivatives") {
  const Matrix X = oracle::uniform_matrix(30, 3, 2);
  std::vector<double> r(30);
  for (std::size_t i = 0; i < 30; ++i) r[i] = X(i, 0);
  const std::vector<double> w(30, 1.0);
  const ForestModel f = gbf::fit_forest(X, r, w, small_params(20, 1.0, 4));
  for (std::size_t b = 0; b < f.num_trees(); ++b) CHECK(f.inbag(b).size() == 30);
  for (const double u : f.ij_derivatives(X.row(0))) CHECK(u == 0.0);
}

TEST_CASE("heavy weight is almost always drawn") {
  std::vector<double> w(20, 1.0);
  w[3] = 1e9;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < 1000; ++b) {
    gbf::CounterRng rng(gbf::derive_seed(5, b));
    const auto s = gbf::weighted_subsample(w, 1, rng);
    hits += s[0] == 3;
  }
  CHECK(hits >= 990);
}

TEST_CASE("uniform weights give inclusion frequency k/n") {
  const std::size_t n = 40, k = 10, B = 2000;
  const std::vector<double> w(n, 1.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t b = 0; b < B; ++b) {
    gbf::CounterRng rng(gbf::tree_seed(77, b));
    const auto s = gbf::weighted_subsample(w, k, rng);
    CHECK(s.size() == k);
    CHECK(std::is_sorted(s.begin(), s.end()));
    for (const auto i : s) ++count[i];
  }
  const double p = static_cast<double>(k) / n;
  const double band = 3.0 * std::sqrt(p * (1 - p) / B);
  for (const auto c : count) CHECK(std::abs(static_cast<double>(c) / B - p) <= band * 1.5);
}

TEST_CASE("larger weights are drawn more often") {
  std::vector<double> w = {1, 1, 1, 1, 4, 4, 4, 4};
  std::vector<std::size_t> count(8, 0);
  for (std::size_t b = 0; b < 4000; ++b) {
    gbf::CounterRng rng(gbf::tree_seed(1, b));
    for (const auto i : gbf::weighted_subsample(w, 2, rng)) ++count[i];
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(count[i] < count[i + 4]);
}

TEST_CASE("constant responses give a constant forest") {
  const Matrix X = oracle::uniform_matrix(25, 3, 1);
  const std::vector<double> r(25, 2.5), w(25, 1.0);
  const ForestModel f = gbf::fit_forest(X, r, w, small_params(15, 0.5, 9));
  const auto x = X.row(3);
  CHECK(f.predict(x) == 2.5);
  CHECK(f.tree_variance(x) == 0.0);
  for (const double u : f.ij_derivatives(x)) CHECK(u == 0.0);
}

TEST_CASE("forest prediction is the tree mean") {
  const ForestModel f({leaf_tree(1), leaf_tree(2), leaf_tree(3)}, {{0}, {1}, {2}}, 3);
  const std::vector<double> x = {0.0};
  CHECK(f.predict(x) == 2.0);
  const ForestModel one({leaf_tree(7)}, {{0}}, 2);
  CHECK(one.predict(x) == 7.0);
  const ForestModel two({leaf_tree(0), leaf_tree(2)}, {{0}, {1}}, 2);
  CHECK(two.tree_variance(x) == 2.0);
}

TEST_CASE("IJ derivatives match the two-pass covariance oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t n = 20 + 4 * seed;
    const Matrix X = oracle::uniform_matrix(n, 3, seed);
    std::vector<double> r(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = X(i, 0) + X(i, 1) * X(i, 2);
      w[i] = 0.5 + (i % 3);
    }
    const ForestModel f = gbf::fit_forest(X, r, w, small_params(50 + 30 * seed, 0.5, seed));
    const Matrix T = oracle::uniform_matrix(5, 3, 100 + seed);
    for (std::size_t t = 0; t < T.rows(); ++t) {
      const auto preds = f.per_tree_predictions(T.row(t));
      const auto got = f.ij_derivatives(T.row(t));
      const auto want = oracle::ij_two_pass(f, preds);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(got[i] - want[i]) <= 1e-12);
        sum += got[i];
      }
      CHECK(std::abs(sum) < 1e-9);
      CHECK(f.tree_variance(T.row(t)) == doctest::Approx(oracle::variance_two_pass(preds)).epsilon(1e-12));
    }
  }
}

TEST_CASE("every row of N sums to k") {
  const Matrix X = oracle::uniform_matrix(33, 3, 3);
  std::vector<double> r(33), w(33);
  for (std::size_t i = 0; i < 33; ++i) {
    r[i] = X(i, 2);
    w[i] = 1.0 + i;
  }
  const ForestModel f = gbf::fit_forest(X, r, w, small_params(40, 0.3, 1));
  CHECK(f.k() == 10);
  for (std::size_t b = 0; b < f.num_trees(); ++b) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < f.n(); ++i) s += f.included(b, i);
    CHECK(s == f.k());
  }
}

TEST_CASE("fit is deterministic and independent of the thread count") {
  const Matrix X = oracle::uniform_matrix(60, 4, 6);
  std::vector<double> r(60), w(60, 1.0);
  for (std::size_t i = 0; i < 60; ++i) r[i] = std::sin(3 * X(i, 0));
  auto params = small_params(30, 0.5, 12);
  const ForestModel a = gbf::fit_forest(X, r, w, params);
  params.num_threads = 3;
  const ForestModel b = gbf::fit_forest(X, r, w, params);
  CHECK(a.inclusion_matrix() == b.inclusion_matrix());
  for (std::size_t i = 0; i < X.rows(); ++i) CHECK(a.predict(X.row(i)) == b.predict(X.row(i)));
}

TEST_CASE("prediction is invariant to tree order") {
  std::vector<gbf::Tree> trees = {stump(0.0, 1.0, 2.0), stump(0.5, -1.0, 4.0), leaf_tree(0.25)};
  const ForestModel f(trees, {{0}, {1}, {2}}, 3);
  std::reverse(trees.begin(), trees.end());
  const ForestModel g(trees, {{2}, {1}, {0}}, 3);
  for (const double v : {-1.0, 0.25, 0.75}) {
    const std::vector<double> x = {v};
    CHECK(f.predict(x) == doctest::Approx(g.predict(x)).epsilon(1e-15));
  }
}

TEST_CASE("proximity scores") {
  const Matrix X = Matrix::from_rows({{-1.0}, {1.0}});
  const ForestModel leaves({leaf_tree(0), leaf_tree(0)}, {{0}, {0}}, 2);
  const std::vector<double> x = {0.3};
  CHECK(leaves.proximity(x, 0, X).score == 1.0);
  const auto never = leaves.proximity(x, 1, X);
  CHECK(never.score == 0.0);
  CHECK(never.never_in_bag);

  // x = 0.3 shares training point 1's leaf in the first tree only.
  const ForestModel split({stump(0.0, 0, 1), stump(0.5, 0, 1)}, {{1}, {1}}, 2);
  CHECK(split.proximity(x, 1, X).score == 0.5);
}

TEST_CASE("out-of-bag predictions skip in-bag trees") {
  const ForestModel f({leaf_tree(1), leaf_tree(3)}, {{0}, {1}}, 2);
  const Matrix X = Matrix::from_rows({{0.0}, {0.0}});
  const auto oob = f.oob_predictions(X);
  CHECK(oob[0] == 3.0);
  CHECK(oob[1] == 1.0);
  std::size_t fallbacks = 5;
  const ForestModel all({leaf_tree(1), leaf_tree(3)}, {{0, 1}, {0, 1}}, 2);
  const auto full = all.oob_predictions(X, &fallbacks);
  CHECK(fallbacks == 2);
  CHECK(full[0] == 2.0);
}

TEST_CASE("fit_forest input errors") {
  const Matrix X = oracle::uniform_matrix(10, 3, 1);
  const std::vector<double> r(10, 0.0), zeros(10, 0.0);
  std::vector<double> w(10, 1.0);
  CHECK_THROWS_WITH_AS(gbf::fit_forest(X, r, zeros, small_params(5, 0.5, 1)), "all-zero sampling weights",
                       gbf::Error);
  w[2] = -1.0;
  CHECK_THROWS_AS(gbf::fit_forest(X, r, w, small_params(5, 0.5, 1)), gbf::Error);
  w[2] = 1.0;
  auto params = small_params(5, 0.1, 1);
  CHECK_THROWS_WITH_AS(gbf::fit_forest(X, r, w, params), "subsample size k is below min_node_size", gbf::Error);
}
