#ifndef GBF_SIM_HPP_
#define GBF_SIM_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbf/booster.hpp"
#include "gbf/family.hpp"
#include "gbf/matrix.hpp"
#include "gbf/metrics.hpp"
#include "gbf/text_io.hpp"

namespace gbf::sim {

enum class Signal { linear, norm };

std::string_view to_string(Signal signal);
Signal parse_signal(std::string_view name);

// One simulation study: a family and signal crossed with scales, trial
// maxima (binomial only) and subsample fractions.
struct SimConfig {
  Family family = Family::poisson;
  Signal signal = Signal::linear;
  std::size_t n_train = 500;
  std::size_t n_test_random = 100;
  std::size_t replicates = 20;
  std::vector<double> scales{1, 2, 4, 8, 16};
  std::vector<std::int64_t> trials_max{1, 2, 4, 8, 16};
  std::vector<double> sample_fractions{0.2, 0.4, 0.6, 0.8};
  std::size_t num_trees = 300;
  std::size_t dim = 15;
  std::size_t min_node_size = 5;
  std::optional<std::size_t> mtry;  // default max(1, dim / 3)
  VarianceMode variance_mode = VarianceMode::corrected;
  double level = 0.95;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  // n = 500, B = 300, 20 replicates.
  static SimConfig desk_scale();
  // n = 1000, B = 1000, 200 replicates.
  static SimConfig full_scale();
  // Keys mirror the field names; `preset = full` (or `desk`) selects the
  // base defaults before the other keys are applied. Unknown keys are errors.
  static SimConfig from_config(const KeyValueConfig& config);

  void validate() const;
};

struct GridCell {
  std::size_t index = 0;
  double scale = 1.0;
  std::int64_t trials_max = 0;  // 0 for poisson
  double fraction = 0.5;
};

std::vector<GridCell> grid_cells(const SimConfig& config);

// Entries iid Uniform(-1, 1).
Matrix gen_covariates(std::size_t n, std::size_t m, std::uint64_t seed);

// Sum of the first five coordinates.
double signal_linear(std::span<const double> x);
// ||x||_2 - sqrt(m) / 2.
double signal_norm(std::span<const double> x);
double signal_value(Signal signal, std::span<const double> x);

// p1 = 0, p2 = (1/3, 0, ...), p3 = 1/(3 sqrt(m)) * 1, p4 = 2 p3, p5 = 3 p3.
std::vector<std::vector<double>> fixed_points(std::size_t m);

// Link-space and response-space truth at signal value f.
double true_link(Family family, double f, double scale);
double true_response(Family family, double f, double scale);

// Binomial: n_i ~ U{1..M}, y_i ~ Bin(n_i, logistic(s f_i)).
// Poisson: y_i ~ Poisson(exp(f_i + log s)).
std::vector<Observation> gen_response(Family family, std::span<const double> f_values, double scale,
                                      std::int64_t trials_max, std::uint64_t seed);

// Shared test points: n_test_random random rows followed by p1..p5.
struct TestSet {
  Matrix X;
  std::vector<double> signal;
  std::vector<std::string> labels;  // r0.., p1..p5
};

TestSet make_test_set(const SimConfig& config);

struct PointPrediction {
  double link_estimate = 0.0;
  double link_variance = 0.0;
  double response_estimate = 0.0;
  double response_variance = 0.0;
};

struct ExperimentRecord {
  GridCell cell;
  std::size_t replicate = 0;
  std::string status = "ok";  // error message when the fit failed
  std::array<StageEvaluation, 3> stages{};
  // points[t][stage] for every test point t.
  std::vector<std::array<PointPrediction, 3>> points;

  bool ok() const { return status == "ok"; }
};

// Runs one (cell, replicate) job.
ExperimentRecord run_replicate(const SimConfig& config, const TestSet& test, const GridCell& cell,
                               std::size_t replicate);

// Records sorted by (cell index, replicate).
std::vector<ExperimentRecord> run_grid(const SimConfig& config);

// Aggregate over replicates of one test point at one stage.
struct PointSummary {
  std::size_t cell_index = 0;
  std::size_t stage = 0;
  std::size_t point = 0;
  std::size_t replicates = 0;
  double truth_link = 0.0;
  double truth_response = 0.0;
  double mean_estimate_link = 0.0;
  double abs_bias_link = 0.0;
  double abs_bias_response = 0.0;
  double avg_var_link = 0.0;
  double avg_var_response = 0.0;
  double var_ratio_link = 0.0;       // NaN when undefined
  double var_ratio_response = 0.0;   // NaN when undefined
  double coverage_link = 0.0;
  double ks_link = 0.0;              // NaN when fewer than 5 usable replicates
  double ks_response = 0.0;
};

std::vector<PointSummary> summarize(const SimConfig& config, const TestSet& test,
                                    std::span<const ExperimentRecord> records);

void write_records_csv(std::ostream& out, const SimConfig& config, const TestSet& test,
                       std::span<const ExperimentRecord> records);
void write_summary_csv(std::ostream& out, const SimConfig& config, const TestSet& test,
                       std::span<const PointSummary> summary, std::span<const ExperimentRecord> records);

}  // namespace gbf::sim

#endif  // GBF_SIM_HPP_
