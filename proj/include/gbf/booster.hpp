#ifndef GBF_BOOSTER_HPP_
#define GBF_BOOSTER_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gbf/family.hpp"
#include "gbf/forest.hpp"
#include "gbf/matrix.hpp"

namespace gbf {

enum class VarianceMode {
  raw,        // IJ term + (1/B) sum_j var_b(T_b^j)
  corrected,  // IJ term + (1/B)(1 - n/k) sum_j var_b(T_b^j), clamped at 0
};

// Where the link values for the next stage's Newton residuals come from.
enum class ResidualSource { in_sample, out_of_bag };

inline constexpr std::size_t kMaxStages = 2;

struct GbfParams {
  Family family = Family::gaussian;
  ForestParams forest;  // shared by every forest stage
  std::size_t stages = 2;
  VarianceMode variance_mode = VarianceMode::corrected;
  ResidualSource residual_source = ResidualSource::in_sample;
};

// Forest parameters actually used for stage j (1-based): the shared settings
// with a stage-specific seed.
ForestParams stage_forest_params(const GbfParams& params, std::size_t stage);

struct LinkRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Constant + up to two Newton-boosted forests, with what the variance needs.
struct GbfModel {
  GbfParams params;
  double eta0 = 0.0;           // MLE-type constant
  std::vector<double> u0;      // its IJ directional derivatives, length n
  std::vector<ForestModel> forests;
  // Range of the link values at which stage j's residuals were computed.
  std::vector<LinkRange> stage_input_range;
  // Mean training log-likelihood after stage 0, 1, ... (in-sample predictions).
  std::vector<double> training_mean_ll;
  std::size_t n = 0;
  std::size_t p = 0;
  std::uint64_t fingerprint = 0;  // hash of the training inputs

  std::size_t stages() const { return forests.size(); }
};

struct PredictionWithVariance {
  double link_estimate = 0.0;
  double link_variance = 0.0;
  double response_estimate = 0.0;
  double response_variance = 0.0;
  std::vector<double> stage_breakdown;  // eta0, f1(x), f2(x), ...
  bool variance_clamped = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

GbfModel fit(const Matrix& X, std::span<const Observation> observations, const GbfParams& params);

// Prediction using the first `stages` forests (default: all of them).
PredictionWithVariance predict(const GbfModel& model, std::span<const double> x,
                               std::optional<std::size_t> stages = std::nullopt);

// Predictions for every stage count 0..model.stages() at once; entry j uses
// the first j forests. Shares the per-tree work between stages.
std::vector<PredictionWithVariance> predict_stages(const GbfModel& model, std::span<const double> x);

// Normal interval in link space: estimate +/- z_{(1+level)/2} sqrt(variance).
Interval confidence_interval(const PredictionWithVariance& prediction, double level);
Interval confidence_interval(const GbfModel& model, std::span<const double> x, double level);

// Link values every prediction of the model can attain (the forests average
// Newton residuals, whose range is bounded for binomial and poisson).
Interval prediction_range(const GbfModel& model, std::optional<std::size_t> stages = std::nullopt);

// Hash of (X, observations) stored in the model for provenance.
std::uint64_t dataset_fingerprint(const Matrix& X, std::span<const Observation> observations);

}  // namespace gbf

#endif  // GBF_BOOSTER_HPP_
