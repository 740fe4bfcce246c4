#ifndef GBF_EVAL_HPP_
#define GBF_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gbf/booster.hpp"
#include "gbf/family.hpp"
#include "gbf/matrix.hpp"
#include "gbf/text_io.hpp"

namespace gbf {

// Which CSV columns hold the response, the trial counts and the features.
// Schema files use the keys `response`, `trials`, `features` and
// `categorical` (comma-separated column names). Without `features` every
// other column is a feature; without `categorical` any feature column with a
// non-numeric entry is treated as categorical.
struct CsvSchema {
  std::string response;
  std::optional<std::string> trials;
  std::vector<std::string> features;
  std::optional<std::vector<std::string>> categorical;

  static CsvSchema from_config(const KeyValueConfig& config);
  static CsvSchema load(const std::filesystem::path& path);
};

// Maps raw feature columns to the numeric design matrix. A categorical column
// with sorted levels l_1 < ... < l_L becomes L indicator columns `name=l_j`.
struct FeatureEncoding {
  struct Column {
    std::string name;
    std::vector<std::string> levels;  // empty for numeric columns
  };
  std::vector<Column> columns;

  std::size_t width() const;
  std::vector<std::string> encoded_names() const;
  // `header` names the columns of `rows`; every encoded column must appear.
  Matrix encode(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) const;
};

struct Dataset {
  std::string name;
  Matrix X;
  std::vector<double> y;
  std::optional<std::vector<std::int64_t>> trials;
  FeatureEncoding encoding;

  std::size_t n() const { return y.size(); }
  // Binomial without a trials column means one trial per row.
  std::vector<Observation> observations(Family family) const;
};

bool is_missing(const std::string& field);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Reads a CSV of feature columns (header required) with a stored encoding.
Matrix load_points(const std::filesystem::path& path, const FeatureEncoding& encoding);

// Balanced seeded partition: a random permutation, then fold = position % k.
std::vector<std::size_t> kfold_assign(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvRow {
  std::size_t stage = 0;
  double mse = 0.0;              // response space
  double avg_var = 0.0;          // mean of V_i * ((g^-1)'(f_i))^2
  double avg_var_printed = 0.0;  // mean of V_i * (g^-1(f_i))^2
  double pc = 0.0;               // prediction-interval coverage
  double ll = 0.0;               // mean log-likelihood
};

struct CvReport {
  std::string dataset;
  Family family = Family::gaussian;
  std::vector<CvRow> rows;  // stage 0..stages
  // Out-of-fold predictions, [stage][i].
  std::vector<std::vector<double>> link_estimate;
  std::vector<std::vector<double>> link_variance;
  std::vector<std::size_t> folds;  // final fold label of every row
  // Folds that failed with a degenerate MLE and were merged into a neighbour.
  std::vector<std::size_t> merged_folds;
};

struct CvOptions {
  std::size_t folds = 10;
  double level = 0.95;
  std::size_t threads = 1;  // folds evaluated concurrently
};

// Forest seeds are derived from `seed` per fold, so the report does not
// depend on params.forest.seed or on the thread count.
CvReport cv_evaluate(const Dataset& dataset, Family family, const GbfParams& params, std::uint64_t seed,
                     const CvOptions& options = {});

void write_cv_csv(std::ostream& out, const CvReport& report);
// Aligned text table: one row per stage, columns MSE, Avg Var, PC, LL.
void write_cv_table(std::ostream& out, const CvReport& report);

}  // namespace gbf

#endif  // GBF_EVAL_HPP_
