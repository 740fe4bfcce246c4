#include "gbf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include "gbf/booster.hpp"
#include "gbf/error.hpp"
#include "gbf/eval.hpp"
#include "gbf/model_io.hpp"
#include "gbf/sim.hpp"
#include "gbf/text_io.hpp"

namespace gbf {
namespace {

// Flag values that pass CLI11 but break a documented bound.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitFlags {
  std::string family;
  std::size_t trees = 500;
  double fraction = 0.5;
  std::size_t mtry = 0;
  std::size_t min_node_size = 5;
  std::size_t max_depth = 0;
  std::size_t stages = 2;
  std::string variance = "corrected";
  std::string residuals = "in_sample";
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void add_to(CLI::App& app) {
    app.add_option("--family", family, "Response family: gaussian, binomial or poisson")->required();
    app.add_option("--trees", trees, "Trees per forest (B)");
    app.add_option("--fraction", fraction, "Subsample fraction k/n");
    app.add_option("--mtry", mtry, "Features tried per split (0 = max(1, p/3))");
    app.add_option("--min-node-size", min_node_size, "Minimum samples in each child");
    app.add_option("--max-depth", max_depth, "Maximum tree depth (0 = unlimited)");
    app.add_option("--stages", stages, "Number of forest stages (0, 1 or 2)");
    app.add_option("--variance", variance, "Variance estimate: corrected or raw");
    app.add_option("--residuals", residuals, "Link values for Newton residuals: in_sample or out_of_bag");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  }

  GbfParams params(std::size_t p) const {
    GbfParams out;
    try {
      out.family = parse_family(family);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    if (stages > kMaxStages) {
      throw UsageError("unsupported stage count " + std::to_string(stages) + " (at most 2)");
    }
    if (trees < 2) throw UsageError("--trees must be at least 2");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("--fraction must lie in (0, 1]");
    if (min_node_size < 1) throw UsageError("--min-node-size must be positive");
    if (variance == "corrected") {
      out.variance_mode = VarianceMode::corrected;
    } else if (variance == "raw") {
      out.variance_mode = VarianceMode::raw;
    } else {
      throw UsageError("--variance must be 'corrected' or 'raw'");
    }
    if (residuals == "in_sample") {
      out.residual_source = ResidualSource::in_sample;
    } else if (residuals == "out_of_bag") {
      out.residual_source = ResidualSource::out_of_bag;
    } else {
      throw UsageError("--residuals must be 'in_sample' or 'out_of_bag'");
    }
    out.stages = stages;
    out.forest.num_trees = trees;
    out.forest.sample_fraction = fraction;
    out.forest.seed = seed;
    out.forest.num_threads = threads;
    out.forest.tree = default_tree_params(p);
    out.forest.tree.min_node_size = min_node_size;
    if (mtry > 0) {
      if (mtry > p) throw UsageError("--mtry exceeds the number of features");
      out.forest.tree.mtry = mtry;
    }
    if (max_depth > 0) out.forest.tree.max_depth = max_depth;
    return out;
  }
};

std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw Error("cannot write " + path);
  return file;
}

int cmd_fit(const std::string& data, const std::string& schema, const FitFlags& flags, const std::string& out_path,
            std::ostream& out) {
  const Dataset dataset = load_csv(data, CsvSchema::load(schema));
  const GbfParams params = flags.params(dataset.X.cols());
  ModelFile file;
  file.model = fit(dataset.X, dataset.observations(params.family), params);
  file.encoding = dataset.encoding;
  save_model(out_path, file);
  out << "stage,training_mean_ll\n";
  for (std::size_t s = 0; s < file.model.training_mean_ll.size(); ++s) {
    out << s << ',' << format_double(file.model.training_mean_ll[s]) << '\n';
  }
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& points, double level,
                std::optional<std::size_t> stages, const std::string& out_path, std::ostream& out) {
  if (!(level >= 0.0 && level < 1.0)) throw UsageError("--level must lie in [0, 1)");
  const ModelFile file = load_model(model_path);
  if (stages && *stages > file.model.stages()) {
    throw UsageError("--stages exceeds the model's " + std::to_string(file.model.stages()) + " stages");
  }
  Matrix X;
  if (file.encoding.columns.empty()) {
    auto table = read_csv(points);
    if (table.empty()) throw Error(points + ": empty file");
    FeatureEncoding plain;
    for (const auto& name : table.front()) plain.columns.push_back({name, {}});
    const auto header = table.front();
    table.erase(table.begin());
    X = plain.encode(header, table);
  } else {
    X = load_points(points, file.encoding);
  }

  std::ofstream file_out;
  std::ostream& dest = open_output(out_path, file_out, out);
  dest << "row,link_estimate,link_variance,response_estimate,response_variance,ci_lo,ci_hi,variance_clamped\n";
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const PredictionWithVariance p = predict(file.model, X.row(i), stages);
    const Interval ci = confidence_interval(p, level);
    dest << i << ',' << format_double(p.link_estimate) << ',' << format_double(p.link_variance) << ','
         << format_double(p.response_estimate) << ',' << format_double(p.response_variance) << ','
         << format_double(ci.lo) << ',' << format_double(ci.hi) << ',' << (p.variance_clamped ? 1 : 0) << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, const std::string& summary_path,
                 std::optional<std::uint64_t> seed, std::optional<std::size_t> threads, std::ostream& out) {
  sim::SimConfig config;
  try {
    config = sim::SimConfig::from_config(KeyValueConfig::load(config_path));
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto records = sim::run_grid(config);
  const sim::TestSet test = sim::make_test_set(config);

  std::ofstream file_out;
  sim::write_records_csv(open_output(out_path, file_out, out), config, test, records);
  if (!summary_path.empty()) {
    std::ofstream summary_out(summary_path);
    if (!summary_out) throw Error("cannot write " + summary_path);
    sim::write_summary_csv(summary_out, config, test, sim::summarize(config, test, records), records);
  }
  return kExitOk;
}

int cmd_cv(const std::string& data, const std::string& schema, const FitFlags& flags, std::size_t folds, double level,
           const std::string& out_path, std::ostream& out) {
  const Dataset dataset = load_csv(data, CsvSchema::load(schema));
  GbfParams params = flags.params(dataset.X.cols());
  params.forest.num_threads = 1;
  if (folds < 2 || folds > dataset.n()) throw UsageError("--folds must lie in [2, n]");
  if (!(level > 0.0 && level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  CvOptions options;
  options.folds = folds;
  options.level = level;
  options.threads = flags.threads;
  const CvReport report = cv_evaluate(dataset, params.family, params, flags.seed, options);
  write_cv_table(out, report);
  if (!out_path.empty()) {
    std::ofstream csv(out_path);
    if (!csv) throw Error("cannot write " + out_path);
    write_cv_csv(csv, report);
  }
  return kExitOk;
}

int cmd_range(const std::string& model_path, std::ostream& out) {
  const ModelFile file = load_model(model_path);
  out << "eta0," << format_double(file.model.eta0) << '\n';
  out << "stage,lo,hi\n";
  for (std::size_t s = 0; s <= file.model.stages(); ++s) {
    const Interval r = prediction_range(file.model, s);
    out << s << ',' << format_double(r.lo) << ',' << format_double(r.hi) << '\n';
  }
  return kExitOk;
}

int cmd_proximity(const std::string& model_path, const std::string& data, const std::string& schema,
                  const std::string& point, std::size_t stage, std::size_t top, std::ostream& out) {
  const ModelFile file = load_model(model_path);
  if (stage < 1 || stage > file.model.stages()) {
    throw UsageError("--stage must lie in [1, " + std::to_string(file.model.stages()) + "]");
  }
  std::vector<double> x;
  try {
    for (const auto& field : split(point, ',')) x.push_back(parse_double(field, "--point"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (x.size() != file.model.p) {
    throw UsageError("--point has " + std::to_string(x.size()) + " values, the model expects " +
                     std::to_string(file.model.p));
  }
  const Dataset dataset = load_csv(data, CsvSchema::load(schema));
  if (dataset_fingerprint(dataset.X, dataset.observations(file.model.params.family)) != file.model.fingerprint) {
    throw Error("training data does not match the model fingerprint");
  }

  const ForestModel& forest = file.model.forests[stage - 1];
  std::vector<Proximity> prox(dataset.n());
  for (std::size_t i = 0; i < dataset.n(); ++i) prox[i] = forest.proximity(x, i, dataset.X);
  std::vector<std::size_t> order(dataset.n());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return prox[a].score > prox[b].score; });
  out << "index,proximity,never_in_bag\n";
  for (std::size_t j = 0; j < std::min(top, order.size()); ++j) {
    const std::size_t i = order[j];
    out << i << ',' << format_double(prox[i].score) << ',' << (prox[i].never_in_bag ? 1 : 0) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalised boosted forests with infinitesimal-jackknife variance estimates", "gbf"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::string data, schema, model_path, out_path, points, config_path, summary_path, point;
  FitFlags fit_flags, cv_flags;
  double level = 0.95;
  std::size_t predict_stages_flag = 0, folds = 10, stage = 1, top = 10;
  std::uint64_t sim_seed = 0;
  std::size_t sim_threads = 1;

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a model and write it to a model file");
  fit_cmd->add_option("--data", data, "Training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--schema", schema, "Schema file naming response, trials and feature columns")
      ->required()
      ->check(CLI::ExistingFile);
  fit_flags.add_to(*fit_cmd);
  fit_cmd->add_option("--out", out_path, "Output model file")->required();

  CLI::App* predict_cmd = app.add_subcommand("predict", "Predict with variance estimates and intervals");
  predict_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--points", points, "CSV of feature columns")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--level", level, "Confidence level of the link-space interval");
  auto* stages_opt = predict_cmd->add_option("--stages", predict_stages_flag, "Forest stages to use")->default_str("all");
  predict_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a simulation grid from a config file");
  sim_cmd->add_option("--config", config_path, "Simulation config file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", out_path, "Per-replicate CSV (default: stdout)");
  sim_cmd->add_option("--summary", summary_path, "Per-point summary CSV");
  auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "Master seed (overrides the config)")->default_str("config");
  auto* sim_threads_opt = sim_cmd->add_option("--threads", sim_threads, "Worker threads (overrides the config)")
                             ->default_str("config");

  CLI::App* cv_cmd = app.add_subcommand("cv", "Cross-validated per-stage MSE, Avg Var, PC and LL");
  cv_cmd->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  cv_cmd->add_option("--schema", schema, "Schema file")->required()->check(CLI::ExistingFile);
  cv_flags.add_to(*cv_cmd);
  cv_cmd->add_option("--folds", folds, "Number of folds");
  cv_cmd->add_option("--level", level, "Prediction interval level");
  cv_cmd->add_option("--out", out_path, "Report CSV");

  CLI::App* range_cmd = app.add_subcommand("range", "Attainable link-space prediction range per stage");
  range_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);

  CLI::App* prox_cmd = app.add_subcommand("proximity", "Training points ranked by proximity to a point");
  prox_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  prox_cmd->add_option("--data", data, "Training CSV the model was fitted on")->required()->check(CLI::ExistingFile);
  prox_cmd->add_option("--schema", schema, "Schema file")->required()->check(CLI::ExistingFile);
  prox_cmd->add_option("--point", point, "Encoded feature values, comma-separated")->required();
  prox_cmd->add_option("--stage", stage, "Forest stage (1-based)");
  prox_cmd->add_option("--top", top, "Number of training points listed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(data, schema, fit_flags, out_path, out);
    if (*predict_cmd) {
      std::optional<std::size_t> stages;
      if (stages_opt->count() > 0) stages = predict_stages_flag;
      return cmd_predict(model_path, points, level, stages, out_path, out);
    }
    if (*sim_cmd) {
      std::optional<std::uint64_t> seed;
      std::optional<std::size_t> threads;
      if (sim_seed_opt->count() > 0) seed = sim_seed;
      if (sim_threads_opt->count() > 0) threads = sim_threads;
      return cmd_simulate(config_path, out_path, summary_path, seed, threads, out);
    }
    if (*cv_cmd) return cmd_cv(data, schema, cv_flags, folds, level, out_path, out);
    if (*range_cmd) return cmd_range(model_path, out);
    if (*prox_cmd) return cmd_proximity(model_path, data, schema, point, stage, top, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gbf
