#include "gbf/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "gbf/error.hpp"
#include "gbf/rng.hpp"

namespace gbf::sim {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::uint64_t replicate_seed(const SimConfig& config, const GridCell& cell, std::size_t replicate) {
  return derive_seed(derive_seed(config.seed, "cell", cell.index), "replicate", replicate);
}

std::string cell_prefix(const SimConfig& config, const GridCell& cell) {
  return std::string(gbf::to_string(config.family)) + "," + std::string(to_string(config.signal)) + "," +
         format_double(cell.scale) + "," + std::to_string(cell.trials_max) + "," + format_double(cell.fraction);
}

}  // namespace

std::string_view to_string(Signal signal) { return signal == Signal::linear ? "linear" : "norm"; }

Signal parse_signal(std::string_view name) {
  if (name == "linear") return Signal::linear;
  if (name == "norm") return Signal::norm;
  throw Error("unknown signal '" + std::string(name) + "'");
}

SimConfig SimConfig::desk_scale() { return SimConfig{}; }

SimConfig SimConfig::full_scale() {
  SimConfig config;
  config.n_train = 1000;
  config.num_trees = 1000;
  config.replicates = 200;
  return config;
}

SimConfig SimConfig::from_config(const KeyValueConfig& kv) {
  static const std::set<std::string> known = {
      "preset", "family", "signal", "n_train", "n_test_random", "replicates", "scales", "trials_max",
      "sample_fractions", "num_trees", "dim", "min_node_size", "mtry", "variance_mode", "level", "seed", "threads"};
  for (const auto& [key, value] : kv.values()) {
    if (!known.count(key)) throw Error("unknown simulation config key '" + key + "'");
  }

  const std::string preset = kv.get_or("preset", "desk");
  SimConfig config;
  if (preset == "full") {
    config = full_scale();
  } else if (preset != "desk") {
    throw Error("preset must be 'desk' or 'full'");
  }
  if (kv.has("family")) config.family = parse_family(kv.get("family"));
  if (kv.has("signal")) config.signal = parse_signal(kv.get("signal"));
  if (kv.has("n_train")) config.n_train = kv.get_u64("n_train");
  if (kv.has("n_test_random")) config.n_test_random = kv.get_u64("n_test_random");
  if (kv.has("replicates")) config.replicates = kv.get_u64("replicates");
  if (kv.has("scales")) config.scales = kv.get_doubles("scales");
  if (kv.has("trials_max")) {
    config.trials_max.clear();
    for (const double m : kv.get_doubles("trials_max")) config.trials_max.push_back(static_cast<std::int64_t>(m));
  }
  if (kv.has("sample_fractions")) config.sample_fractions = kv.get_doubles("sample_fractions");
  if (kv.has("num_trees")) config.num_trees = kv.get_u64("num_trees");
  if (kv.has("dim")) config.dim = kv.get_u64("dim");
  if (kv.has("min_node_size")) config.min_node_size = kv.get_u64("min_node_size");
  if (kv.has("mtry")) config.mtry = kv.get_u64("mtry");
  if (kv.has("variance_mode")) {
    const std::string mode = kv.get("variance_mode");
    if (mode == "raw") {
      config.variance_mode = VarianceMode::raw;
    } else if (mode == "corrected") {
      config.variance_mode = VarianceMode::corrected;
    } else {
      throw Error("variance_mode must be 'raw' or 'corrected'");
    }
  }
  if (kv.has("level")) config.level = kv.get_double("level");
  if (kv.has("seed")) config.seed = kv.get_u64("seed");
  if (kv.has("threads")) config.threads = kv.get_u64("threads");
  config.validate();
  return config;
}

void SimConfig::validate() const {
  if (family == Family::gaussian) throw Error("simulation family must be binomial or poisson");
  if (n_train == 0 || n_test_random == 0 || replicates == 0 || num_trees < 2 || dim == 0) {
    throw Error("simulation counts must be positive (num_trees >= 2)");
  }
  if (signal == Signal::linear && dim < 5) throw Error("the linear signal needs dim >= 5");
  if (scales.empty() || sample_fractions.empty()) throw Error("scales and sample_fractions must be non-empty");
  for (const double s : scales) {
    if (!(s > 0.0)) throw Error("scales must be positive");
  }
  for (const double f : sample_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw Error("sample fractions must lie in (0, 1]");
  }
  if (family == Family::binomial) {
    if (trials_max.empty()) throw Error("binomial simulation needs trials_max");
    for (const auto m : trials_max) {
      if (m < 1) throw Error("trials_max entries must be positive");
    }
  }
  if (mtry && (*mtry < 1 || *mtry > dim)) throw Error("mtry must lie in [1, dim]");
  if (!(level > 0.0 && level < 1.0)) throw Error("level must lie in (0, 1)");
}

std::vector<GridCell> grid_cells(const SimConfig& config) {
  std::vector<GridCell> cells;
  const std::vector<std::int64_t> trials =
      config.family == Family::binomial ? config.trials_max : std::vector<std::int64_t>{0};
  for (const double scale : config.scales) {
    for (const auto m : trials) {
      for (const double fraction : config.sample_fractions) {
        cells.push_back({cells.size(), scale, m, fraction});
      }
    }
  }
  return cells;
}

Matrix gen_covariates(std::size_t n, std::size_t m, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix X(n, m);
  for (double& v : X.data()) v = rng.uniform(-1.0, 1.0);
  return X;
}

double signal_linear(std::span<const double> x) {
  if (x.size() < 5) throw Error("linear signal needs at least 5 coordinates");
  double s = 0.0;
  for (std::size_t i = 0; i < 5; ++i) s += x[i];
  return s;
}

double signal_norm(std::span<const double> x) {
  double ss = 0.0;
  for (const double v : x) ss += v * v;
  return std::sqrt(ss) - std::sqrt(static_cast<double>(x.size())) / 2.0;
}

double signal_value(Signal signal, std::span<const double> x) {
  return signal == Signal::linear ? signal_linear(x) : signal_norm(x);
}

std::vector<std::vector<double>> fixed_points(std::size_t m) {
  std::vector<std::vector<double>> points(5, std::vector<double>(m, 0.0));
  points[1][0] = 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(static_cast<double>(m)));
  for (std::size_t j = 0; j < m; ++j) {
    points[2][j] = c;
    points[3][j] = 2.0 * c;
    points[4][j] = 3.0 * c;
  }
  return points;
}

double true_link(Family family, double f, double scale) {
  switch (family) {
    case Family::binomial:
      return scale * f;
    case Family::poisson:
      return f + std::log(scale);
    case Family::gaussian:
      return f;
  }
  return f;
}

double true_response(Family family, double f, double scale) { return inv_link(family, true_link(family, f, scale)); }

std::vector<Observation> gen_response(Family family, std::span<const double> f_values, double scale,
                                      std::int64_t trials_max, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Observation> out;
  out.reserve(f_values.size());
  switch (family) {
    case Family::binomial: {
      if (trials_max < 1) throw Error("binomial responses need trials_max >= 1");
      for (const double f : f_values) {
        const auto trials = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(trials_max))) + 1;
        std::binomial_distribution<std::int64_t> draw(trials, true_response(family, f, scale));
        out.push_back({static_cast<double>(draw(rng)), trials});
      }
      return out;
    }
    case Family::poisson:
      for (const double f : f_values) {
        std::poisson_distribution<std::int64_t> draw(true_response(family, f, scale));
        out.push_back({static_cast<double>(draw(rng)), std::nullopt});
      }
      return out;
    case Family::gaussian:
      break;
  }
  throw Error("gen_response: family must be binomial or poisson");
}

TestSet make_test_set(const SimConfig& config) {
  TestSet test;
  const Matrix random = gen_covariates(config.n_test_random, config.dim, derive_seed(config.seed, "test_x"));
  const auto fixed = fixed_points(config.dim);
  test.X = Matrix(random.rows() + fixed.size(), config.dim);
  for (std::size_t i = 0; i < random.rows(); ++i) {
    std::copy(random.row(i).begin(), random.row(i).end(), test.X.row(i).begin());
    test.labels.push_back("r" + std::to_string(i));
  }
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    std::copy(fixed[j].begin(), fixed[j].end(), test.X.row(random.rows() + j).begin());
    test.labels.push_back("p" + std::to_string(j + 1));
  }
  for (std::size_t i = 0; i < test.X.rows(); ++i) test.signal.push_back(signal_value(config.signal, test.X.row(i)));
  return test;
}

ExperimentRecord run_replicate(const SimConfig& config, const TestSet& test, const GridCell& cell,
                               std::size_t replicate) {
  ExperimentRecord record;
  record.cell = cell;
  record.replicate = replicate;
  const std::uint64_t seed = replicate_seed(config, cell, replicate);
  const Family family = config.family;

  try {
    const Matrix X = gen_covariates(config.n_train, config.dim, derive_seed(seed, "train_x"));
    std::vector<double> f(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) f[i] = signal_value(config.signal, X.row(i));
    const auto observations = gen_response(family, f, cell.scale, cell.trials_max, derive_seed(seed, "train_y"));
    const std::span<const double> test_signal(test.signal.data(), config.n_test_random);
    const auto test_obs = gen_response(family, test_signal, cell.scale, cell.trials_max, derive_seed(seed, "test_y"));

    GbfParams params;
    params.family = family;
    params.stages = 2;
    params.variance_mode = config.variance_mode;
    params.forest.num_trees = config.num_trees;
    params.forest.sample_fraction = cell.fraction;
    params.forest.tree = default_tree_params(config.dim);
    params.forest.tree.min_node_size = config.min_node_size;
    if (config.mtry) params.forest.tree.mtry = *config.mtry;
    params.forest.seed = derive_seed(seed, "forest");

    const GbfModel model = fit(X, observations, params);

    record.points.resize(test.X.rows());
    for (std::size_t t = 0; t < test.X.rows(); ++t) {
      const auto preds = predict_stages(model, test.X.row(t));
      for (std::size_t s = 0; s < preds.size(); ++s) {
        record.points[t][s] = {preds[s].link_estimate, preds[s].link_variance, preds[s].response_estimate,
                               preds[s].response_variance};
      }
    }

    const std::size_t m = config.n_test_random;
    std::vector<double> truth_link(m), truth_response(m);
    for (std::size_t t = 0; t < m; ++t) {
      truth_link[t] = true_link(family, test.signal[t], cell.scale);
      truth_response[t] = true_response(family, test.signal[t], cell.scale);
    }
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<double> link(m), response(m), var(m);
      std::vector<Interval> intervals(m);
      double bias = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        const PointPrediction& p = record.points[t][s];
        link[t] = p.link_estimate;
        response[t] = p.response_estimate;
        var[t] = p.link_variance;
        PredictionWithVariance pv;
        pv.link_estimate = p.link_estimate;
        pv.link_variance = p.link_variance;
        intervals[t] = confidence_interval(pv, config.level);
        bias += std::abs(p.link_estimate - truth_link[t]);
      }
      StageEvaluation& eval = record.stages[s];
      eval.stage = s;
      eval.mean_ll = mean_log_lik(family, link, test_obs);
      eval.mse_link = mse(link, truth_link);
      eval.mse_response = mse(response, truth_response);
      eval.avg_var = mean_of(var);
      eval.coverage = coverage(intervals, truth_link);
      eval.abs_bias = bias / static_cast<double>(m);
    }
  } catch (const Error& e) {
    record.status = e.what();
    record.points.clear();
    for (std::size_t s = 0; s < 3; ++s) {
      record.stages[s] = {s, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
    }
  }
  return record;
}

std::vector<ExperimentRecord> run_grid(const SimConfig& config) {
  config.validate();
  const TestSet test = make_test_set(config);
  const auto cells = grid_cells(config);
  const std::size_t jobs = cells.size() * config.replicates;
  std::vector<ExperimentRecord> records(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      records[job] = run_replicate(config, test, cells[job / config.replicates], job % config.replicates);
    }
  };
  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(jobs, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          worker();
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
  return records;
}

std::vector<PointSummary> summarize(const SimConfig& config, const TestSet& test,
                                    std::span<const ExperimentRecord> records) {
  std::vector<PointSummary> out;
  for (const GridCell& cell : grid_cells(config)) {
    std::vector<const ExperimentRecord*> rows;
    for (const auto& r : records) {
      if (r.cell.index == cell.index && r.ok()) rows.push_back(&r);
    }
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t t = 0; t < test.X.rows(); ++t) {
        PointSummary summary;
        summary.cell_index = cell.index;
        summary.stage = s;
        summary.point = t;
        summary.replicates = rows.size();
        summary.truth_link = true_link(config.family, test.signal[t], cell.scale);
        summary.truth_response = true_response(config.family, test.signal[t], cell.scale);

        std::vector<double> est, var, est_r, var_r;
        std::size_t covered = 0;
        for (const auto* r : rows) {
          const PointPrediction& p = r->points[t][s];
          est.push_back(p.link_estimate);
          var.push_back(p.link_variance);
          est_r.push_back(p.response_estimate);
          var_r.push_back(p.response_variance);
          PredictionWithVariance pv;
          pv.link_estimate = p.link_estimate;
          pv.link_variance = p.link_variance;
          const Interval ci = confidence_interval(pv, config.level);
          if (ci.lo <= summary.truth_link && summary.truth_link <= ci.hi) ++covered;
        }
        if (rows.empty()) {
          summary.mean_estimate_link = summary.abs_bias_link = summary.abs_bias_response = kNaN;
          summary.avg_var_link = summary.avg_var_response = summary.coverage_link = kNaN;
          summary.var_ratio_link = summary.var_ratio_response = summary.ks_link = summary.ks_response = kNaN;
          out.push_back(summary);
          continue;
        }
        double bias = 0.0, bias_r = 0.0;
        for (std::size_t i = 0; i < est.size(); ++i) {
          bias += std::abs(est[i] - summary.truth_link);
          bias_r += std::abs(est_r[i] - summary.truth_response);
        }
        const auto R = static_cast<double>(est.size());
        summary.mean_estimate_link = mean_of(est);
        summary.abs_bias_link = bias / R;
        summary.abs_bias_response = bias_r / R;
        summary.avg_var_link = mean_of(var);
        summary.avg_var_response = mean_of(var_r);
        summary.coverage_link = static_cast<double>(covered) / R;

        auto ratio = [](std::span<const double> v, std::span<const double> e) {
          try {
            return var_consistency_ratio(v, e);
          } catch (const Error&) {
            return kNaN;
          }
        };
        summary.var_ratio_link = ratio(var, est);
        summary.var_ratio_response = ratio(var_r, est_r);

        auto ks = [](std::span<const double> e, double truth, std::span<const double> v) {
          try {
            const std::vector<double> truths(e.size(), truth);
            return ks_normality(e, truths, v).statistic;
          } catch (const Error&) {
            return kNaN;
          }
        };
        summary.ks_link = ks(est, summary.truth_link, var);
        summary.ks_response = ks(est_r, summary.truth_response, var_r);
        out.push_back(summary);
      }
    }
  }
  return out;
}

void write_records_csv(std::ostream& out, const SimConfig& config, const TestSet& test,
                       std::span<const ExperimentRecord> records) {
  out << "family,signal,scale,trials_max,fraction,replicate,status";
  for (std::size_t s = 0; s < 3; ++s) {
    for (const char* name : {"ll", "mse_link", "mse_response", "avg_var", "coverage", "abs_bias"}) {
      out << ',' << name << '_' << s;
    }
  }
  const std::size_t first_fixed = test.X.rows() - 5;
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t s = 0; s < 3; ++s) {
      out << ",p" << j + 1 << "_est_" << s << ",p" << j + 1 << "_var_" << s;
    }
  }
  out << '\n';

  for (const auto& r : records) {
    out << cell_prefix(config, r.cell) << ',' << r.replicate << ',' << csv_quote(r.status);
    for (const auto& e : r.stages) {
      for (const double v : {e.mean_ll, e.mse_link, e.mse_response, e.avg_var, e.coverage, e.abs_bias}) {
        out << ',' << format_double(v);
      }
    }
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t s = 0; s < 3; ++s) {
        if (r.ok()) {
          const PointPrediction& p = r.points[first_fixed + j][s];
          out << ',' << format_double(p.link_estimate) << ',' << format_double(p.link_variance);
        } else {
          out << ",nan,nan";
        }
      }
    }
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const SimConfig& config, const TestSet& test,
                       std::span<const PointSummary> summary, std::span<const ExperimentRecord> records) {
  (void)records;
  const auto cells = grid_cells(config);
  out << "family,signal,scale,trials_max,fraction,stage,point,label,replicates,truth_link,truth_response,"
         "mean_estimate_link,abs_bias_link,abs_bias_response,avg_var_link,avg_var_response,var_ratio_link,"
         "var_ratio_response,coverage_link,ks_link,ks_response\n";
  for (const auto& s : summary) {
    out << cell_prefix(config, cells[s.cell_index]) << ',' << s.stage << ',' << s.point << ','
        << test.labels[s.point] << ',' << s.replicates;
    for (const double v : {s.truth_link, s.truth_response, s.mean_estimate_link, s.abs_bias_link,
                           s.abs_bias_response, s.avg_var_link, s.avg_var_response, s.var_ratio_link,
                           s.var_ratio_response, s.coverage_link, s.ks_link, s.ks_response}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
}

}  // namespace gbf::sim
