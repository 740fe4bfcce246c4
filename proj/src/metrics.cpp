#include "gbf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "gbf/error.hpp"
#include "gbf/forest.hpp"

namespace gbf {

double mean_log_lik(Family family, std::span<const double> link_preds, std::span<const Observation> observations) {
  if (link_preds.size() != observations.size()) {
    throw Error("mean_log_lik: length mismatch");
  }
  if (observations.empty()) {
    throw Error("mean_log_lik: no observations");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    sum += log_lik(family, link_preds[i], observations[i]);
  }
  return sum / static_cast<double>(observations.size());
}

double mse(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw Error("mse: inputs must be non-empty and of equal length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - targets[i];
    sum += d * d;
  }
  return sum / static_cast<double>(preds.size());
}

double coverage(std::span<const Interval> intervals, std::span<const double> truths) {
  if (intervals.size() != truths.size() || truths.empty()) {
    throw Error("coverage: inputs must be non-empty and of equal length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (intervals[i].lo <= truths[i] && truths[i] <= intervals[i].hi) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double var_consistency_ratio(std::span<const double> var_estimates, std::span<const double> estimates) {
  if (var_estimates.size() != estimates.size() || estimates.size() < 2) {
    throw Error("var_consistency_ratio needs at least two replicates");
  }
  const double spread = sample_variance(estimates);
  if (!(spread > 0.0)) {
    throw Error("zero variance denominator");
  }
  return mean_of(var_estimates) / spread;
}

double ks_statistic_normal(std::vector<double> z) {
  if (z.empty()) {
    throw Error("KS statistic of an empty sample");
  }
  std::sort(z.begin(), z.end());
  const auto R = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = normal_cdf(z[i]);
    const double above = static_cast<double>(i + 1) / R - cdf;
    const double below = cdf - static_cast<double>(i) / R;
    d = std::max({d, above, below});
  }
  return d;
}

KsResult ks_normality(std::span<const double> estimates, std::span<const double> truths,
                      std::span<const double> var_estimates) {
  if (estimates.size() != truths.size() || estimates.size() != var_estimates.size()) {
    throw Error("ks_normality: length mismatch");
  }
  KsResult result;
  std::vector<double> z;
  for (std::size_t r = 0; r < estimates.size(); ++r) {
    if (!(var_estimates[r] > 0.0)) {
      ++result.dropped;
      continue;
    }
    z.push_back((estimates[r] - truths[r]) / std::sqrt(var_estimates[r]));
  }
  if (z.size() < 5) {
    throw Error("ks_normality needs at least 5 replicates with positive variance");
  }
  result.used = z.size();
  result.statistic = ks_statistic_normal(std::move(z));
  return result;
}

double pseudo_log(double v) { return std::asinh(v); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

}  // namespace gbf
