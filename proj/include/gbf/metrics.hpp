#ifndef GBF_METRICS_HPP_
#define GBF_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "gbf/booster.hpp"
#include "gbf/family.hpp"

namespace gbf {

// Test-set metrics of one fitted stage.
struct StageEvaluation {
  std::size_t stage = 0;
  double mean_ll = 0.0;
  double mse_link = 0.0;
  double mse_response = 0.0;
  double avg_var = 0.0;   // mean link-space variance estimate
  double coverage = 0.0;  // share of link-space truths inside the 95% interval
  double abs_bias = 0.0;  // mean |estimate - truth| in link space
};

double mean_log_lik(Family family, std::span<const double> link_preds, std::span<const Observation> observations);

double mse(std::span<const double> preds, std::span<const double> targets);

// Closed intervals: endpoints count as covered.
double coverage(std::span<const Interval> intervals, std::span<const double> truths);

// mean(variance estimates) / sample variance of the estimates.
double var_consistency_ratio(std::span<const double> var_estimates, std::span<const double> estimates);

struct KsResult {
  double statistic = 0.0;
  std::size_t used = 0;
  std::size_t dropped = 0;  // replicates with a non-positive variance estimate
};

// One-sample KS distance between z_r = (estimate_r - truth_r) / sqrt(var_r)
// and the standard normal.
KsResult ks_normality(std::span<const double> estimates, std::span<const double> truths,
                      std::span<const double> var_estimates);

// sup_t |F_emp(t) - Phi(t)| of a sample.
double ks_statistic_normal(std::vector<double> z);

// asinh, the symmetric log-like scale used for improvement plots.
double pseudo_log(double v);

double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace gbf

#endif  // GBF_METRICS_HPP_
