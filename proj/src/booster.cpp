#include "gbf/booster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "gbf/error.hpp"
#include "gbf/rng.hpp"

namespace gbf {
namespace {

double mean_log_lik_at(Family family, std::span<const double> link, std::span<const Observation> obs) {
  double sum = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) sum += log_lik(family, link[i], obs[i]);
  return sum / static_cast<double>(obs.size());
}

// Rounding allowance for the binomial bounds, whose closed form is evaluated
// along a different floating-point path than the residuals themselves.
double widen_down(double v) { return v - 1e-12 * (1.0 + std::abs(v)); }
double widen_up(double v) { return v + 1e-12 * (1.0 + std::abs(v)); }

struct FnvHasher {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  void bytes(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) {
      h ^= (v >> s) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  void add(double v) { bytes(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

ForestParams stage_forest_params(const GbfParams& params, std::size_t stage) {
  ForestParams out = params.forest;
  out.seed = derive_seed(params.forest.seed, "stage", stage);
  return out;
}

std::uint64_t dataset_fingerprint(const Matrix& X, std::span<const Observation> observations) {
  FnvHasher hasher;
  hasher.bytes(X.rows());
  hasher.bytes(X.cols());
  for (const double v : X.data()) hasher.add(v);
  for (const auto& obs : observations) {
    hasher.add(obs.y);
    hasher.bytes(obs.trials ? static_cast<std::uint64_t>(*obs.trials) : 0);
  }
  return hasher.h;
}

GbfModel fit(const Matrix& X, std::span<const Observation> observations, const GbfParams& params) {
  const std::size_t n = X.rows();
  if (observations.size() != n) {
    throw Error("fit: X and observations differ in length");
  }
  if (params.stages > kMaxStages) {
    throw Error("unsupported stage count " + std::to_string(params.stages) + " (at most 2)");
  }
  if (X.cols() == 0) {
    throw Error("fit: no features");
  }
  if (params.stages > 0 && n < 2 * params.forest.tree.min_node_size) {
    throw Error("fit: n must be at least 2 * min_node_size");
  }
  validate(params.family, observations);

  GbfModel model;
  model.params = params;
  model.n = n;
  model.p = X.cols();
  model.fingerprint = dataset_fingerprint(X, observations);
  model.eta0 = mle_constant(params.family, observations);
  model.u0 = mle_derivatives(params.family, observations);

  // residual_link feeds the next stage's Newton targets; fitted_link always
  // uses in-sample forest predictions and is what the training LL reports.
  std::vector<double> residual_link(n, model.eta0);
  std::vector<double> fitted_link(n, model.eta0);
  model.training_mean_ll.push_back(mean_log_lik_at(params.family, fitted_link, observations));

  for (std::size_t stage = 1; stage <= params.stages; ++stage) {
    const auto [lo, hi] = std::minmax_element(residual_link.begin(), residual_link.end());
    model.stage_input_range.push_back({*lo, *hi});

    const NewtonTargets targets = newton_residuals_weights(params.family, residual_link, observations);
    ForestModel forest = fit_forest(X, targets.residuals, targets.weights, stage_forest_params(params, stage));

    const std::vector<double> in_sample = forest.in_sample_predictions(X);
    for (std::size_t i = 0; i < n; ++i) fitted_link[i] = fitted_link[i] + in_sample[i];
    if (params.residual_source == ResidualSource::in_sample) {
      residual_link = fitted_link;
    } else {
      const std::vector<double> oob = forest.oob_predictions(X);
      for (std::size_t i = 0; i < n; ++i) residual_link[i] = residual_link[i] + oob[i];
    }
    model.training_mean_ll.push_back(mean_log_lik_at(params.family, fitted_link, observations));
    model.forests.push_back(std::move(forest));
  }
  return model;
}

std::vector<PredictionWithVariance> predict_stages(const GbfModel& model, std::span<const double> x) {
  if (x.size() != model.p) {
    throw Error("predict: expected " + std::to_string(model.p) + " features, got " + std::to_string(x.size()));
  }
  const Family family = model.params.family;
  const auto n = static_cast<double>(model.n);

  std::vector<double> derivative_sum = model.u0;
  double link = model.eta0;
  double mc_term = 0.0;
  std::vector<double> breakdown{model.eta0};

  auto assemble = [&] {
    double ss = 0.0;
    for (const double u : derivative_sum) ss += u * u;
    PredictionWithVariance out;
    out.link_estimate = link;
    out.link_variance = ss / (n * n) + mc_term;
    if (out.link_variance < 0.0) {
      out.link_variance = 0.0;
      out.variance_clamped = true;
    }
    out.response_estimate = inv_link(family, link);
    const double slope = inv_link_deriv(family, link);
    out.response_variance = out.link_variance * slope * slope;
    out.stage_breakdown = breakdown;
    return out;
  };

  std::vector<PredictionWithVariance> out;
  out.push_back(assemble());
  for (const ForestModel& forest : model.forests) {
    const std::vector<double> trees = forest.per_tree_predictions(x);
    const double estimate = mean_of(trees);
    const double tree_var = sample_variance(trees);
    forest.accumulate_ij_derivatives(trees, derivative_sum);

    const auto B = static_cast<double>(forest.num_trees());
    double factor = 1.0;
    if (model.params.variance_mode == VarianceMode::corrected) {
      factor = 1.0 - n / static_cast<double>(forest.k());
    }
    mc_term += factor * tree_var / B;
    link = link + estimate;
    breakdown.push_back(estimate);
    out.push_back(assemble());
  }
  return out;
}

PredictionWithVariance predict(const GbfModel& model, std::span<const double> x, std::optional<std::size_t> stages) {
  const std::size_t used = stages.value_or(model.stages());
  if (used > model.stages()) {
    throw Error("predict: model has only " + std::to_string(model.stages()) + " stages");
  }
  if (used == model.stages()) {
    return predict_stages(model, x).back();
  }
  GbfModel truncated;
  truncated.params = model.params;
  truncated.eta0 = model.eta0;
  truncated.u0 = model.u0;
  truncated.n = model.n;
  truncated.p = model.p;
  truncated.forests.assign(model.forests.begin(), model.forests.begin() + static_cast<std::ptrdiff_t>(used));
  return predict_stages(truncated, x).back();
}

Interval confidence_interval(const PredictionWithVariance& prediction, double level) {
  if (!(level >= 0.0 && level < 1.0)) {
    throw Error("confidence level must lie in [0, 1)");
  }
  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, 0.5 + level / 2.0);
  const double half = z * std::sqrt(prediction.link_variance);
  return {prediction.link_estimate - half, prediction.link_estimate + half};
}

Interval confidence_interval(const GbfModel& model, std::span<const double> x, double level) {
  return confidence_interval(predict(model, x), level);
}

Interval prediction_range(const GbfModel& model, std::optional<std::size_t> stages) {
  const std::size_t used = stages.value_or(model.stages());
  if (used > model.stages()) {
    throw Error("prediction_range: model has only " + std::to_string(model.stages()) + " stages");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Family family = model.params.family;
  if (family == Family::gaussian) {
    return {-inf, inf};
  }
  if (used == 0) {
    return {model.eta0, model.eta0};
  }
  if (family == Family::poisson) {
    // Residuals y e^{-t} - 1 are >= -1, so each forest adds at least -1.
    double lo = model.eta0;
    for (std::size_t j = 0; j < used; ++j) lo = lo - 1.0;
    return {lo, inf};
  }
  // Binomial: residuals at link t lie in [-1/(1-p), 1/p] with p = logistic(t).
  double lo = model.eta0;
  double hi = model.eta0;
  for (std::size_t j = 0; j < used; ++j) {
    const LinkRange& input = model.stage_input_range[j];
    const double one_minus_p_max = inv_link(family, -input.hi);
    const double p_min = inv_link(family, input.lo);
    lo -= 1.0 / one_minus_p_max;
    hi += 1.0 / p_min;
  }
  return {widen_down(lo), widen_up(hi)};
}

}  // namespace gbf
