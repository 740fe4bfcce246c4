#include "gbf/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "gbf/error.hpp"
#include "gbf/metrics.hpp"
#include "gbf/rng.hpp"

namespace gbf {
namespace {

bool is_numeric(const std::string& field) {
  try {
    parse_double(field, "value");
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("schema error: column '" + name + "' not in header");
  return static_cast<std::size_t>(it - header.begin());
}

std::string row_list(const std::vector<std::size_t>& rows) {
  std::string out;
  for (std::size_t j = 0; j < rows.size() && j < 20; ++j) out += (j ? ", " : "") + std::to_string(rows[j]);
  if (rows.size() > 20) out += ", ...";
  return out;
}

void check_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw Error("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) + " fields, header has " +
                  std::to_string(header.size()));
    }
  }
}

struct FoldPredictions {
  std::vector<std::size_t> test_rows;
  // [stage][j] for test_rows[j]
  std::vector<std::vector<double>> link_estimate;
  std::vector<std::vector<double>> link_variance;
};

}  // namespace

CsvSchema CsvSchema::from_config(const KeyValueConfig& config) {
  static const std::set<std::string> known = {"response", "trials", "features", "categorical"};
  for (const auto& [key, value] : config.values()) {
    if (!known.count(key)) throw Error("schema error: unknown key '" + key + "'");
  }
  CsvSchema schema;
  schema.response = config.get("response");
  if (config.has("trials")) schema.trials = config.get("trials");
  if (config.has("features")) schema.features = config.get_list("features");
  if (config.has("categorical")) schema.categorical = config.get_list("categorical");
  return schema;
}

CsvSchema CsvSchema::load(const std::filesystem::path& path) { return from_config(KeyValueConfig::load(path)); }

std::size_t FeatureEncoding::width() const {
  std::size_t w = 0;
  for (const auto& c : columns) w += c.levels.empty() ? 1 : c.levels.size();
  return w;
}

std::vector<std::string> FeatureEncoding::encoded_names() const {
  std::vector<std::string> names;
  for (const auto& c : columns) {
    if (c.levels.empty()) {
      names.push_back(c.name);
    } else {
      for (const auto& level : c.levels) names.push_back(c.name + "=" + level);
    }
  }
  return names;
}

Matrix FeatureEncoding::encode(const std::vector<std::string>& header,
                               const std::vector<std::vector<std::string>>& rows) const {
  check_table(header, rows);
  std::vector<std::size_t> source;
  for (const auto& c : columns) source.push_back(column_index(header, c.name));

  Matrix X(rows.size(), width());
  std::vector<std::size_t> missing;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t out = 0;
    bool row_missing = false;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& field = rows[r][source[c]];
      const Column& col = columns[c];
      if (is_missing(field)) {
        row_missing = true;
        out += col.levels.empty() ? 1 : col.levels.size();
        continue;
      }
      if (col.levels.empty()) {
        X(r, out++) = parse_double(field, "column '" + col.name + "' row " + std::to_string(r + 1));
      } else {
        const auto it = std::lower_bound(col.levels.begin(), col.levels.end(), field);
        if (it == col.levels.end() || *it != field) {
          throw Error("column '" + col.name + "' row " + std::to_string(r + 1) + ": unknown level '" + field + "'");
        }
        X(r, out + static_cast<std::size_t>(it - col.levels.begin())) = 1.0;
        out += col.levels.size();
      }
    }
    if (row_missing) missing.push_back(r + 1);
  }
  if (!missing.empty()) throw Error("missing values in rows " + row_list(missing));
  return X;
}

std::vector<Observation> Dataset::observations(Family family) const {
  std::vector<Observation> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i].y = y[i];
    if (family == Family::binomial) out[i].trials = trials ? (*trials)[i] : 1;
  }
  return out;
}

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA" || field == "?" || field == "na" || field == "NaN" || field == "nan";
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  auto table = read_csv(path);
  if (table.empty()) throw Error(path.string() + ": empty file");
  const std::vector<std::string> header = table.front();
  table.erase(table.begin());
  if (table.empty()) throw Error(path.string() + ": no data rows");
  check_table(header, table);

  const std::size_t y_col = column_index(header, schema.response);
  std::optional<std::size_t> t_col;
  if (schema.trials) t_col = column_index(header, *schema.trials);

  std::vector<std::string> features = schema.features;
  if (features.empty()) {
    for (const auto& name : header) {
      if (name != schema.response && (!schema.trials || name != *schema.trials)) features.push_back(name);
    }
  }
  if (features.empty()) throw Error("schema error: no feature columns");
  if (schema.categorical) {
    for (const auto& name : *schema.categorical) {
      if (std::find(features.begin(), features.end(), name) == features.end()) {
        throw Error("schema error: categorical column '" + name + "' is not a feature");
      }
    }
  }

  std::vector<std::size_t> missing;
  for (std::size_t r = 0; r < table.size(); ++r) {
    bool row_missing = is_missing(table[r][y_col]) || (t_col && is_missing(table[r][*t_col]));
    for (const auto& name : features) row_missing = row_missing || is_missing(table[r][column_index(header, name)]);
    if (row_missing) missing.push_back(r + 1);
  }
  if (!missing.empty()) throw Error("missing values in rows " + row_list(missing));

  Dataset data;
  data.name = path.stem().string();
  for (const auto& name : features) {
    const std::size_t c = column_index(header, name);
    bool categorical = false;
    if (schema.categorical) {
      categorical = std::find(schema.categorical->begin(), schema.categorical->end(), name) !=
                    schema.categorical->end();
    } else {
      categorical = std::any_of(table.begin(), table.end(), [&](const auto& row) { return !is_numeric(row[c]); });
    }
    FeatureEncoding::Column column{name, {}};
    if (categorical) {
      std::set<std::string> levels;
      for (const auto& row : table) levels.insert(row[c]);
      column.levels.assign(levels.begin(), levels.end());
    }
    data.encoding.columns.push_back(std::move(column));
  }
  data.X = data.encoding.encode(header, table);

  for (std::size_t r = 0; r < table.size(); ++r) {
    const std::string& field = table[r][y_col];
    if (!is_numeric(field)) {
      throw Error("response column '" + schema.response + "' row " + std::to_string(r + 1) + ": non-numeric value '" +
                  field + "'");
    }
    data.y.push_back(parse_double(field, "response"));
  }
  if (t_col) {
    std::vector<std::int64_t> trials;
    for (std::size_t r = 0; r < table.size(); ++r) {
      const double t = parse_double(table[r][*t_col], "trials column row " + std::to_string(r + 1));
      if (t != std::floor(t)) throw Error("trials column row " + std::to_string(r + 1) + ": not an integer");
      trials.push_back(static_cast<std::int64_t>(t));
    }
    data.trials = std::move(trials);
  }
  return data;
}

Matrix load_points(const std::filesystem::path& path, const FeatureEncoding& encoding) {
  auto table = read_csv(path);
  if (table.empty()) throw Error(path.string() + ": empty file");
  const std::vector<std::string> header = table.front();
  table.erase(table.begin());
  return encoding.encode(header, table);
}

std::vector<std::size_t> kfold_assign(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw Error("kfold_assign: need 2 <= k <= n");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  CounterRng rng(derive_seed(seed, "folds"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[perm[pos]] = pos % k;
  return fold;
}

CvReport cv_evaluate(const Dataset& dataset, Family family, const GbfParams& params, std::uint64_t seed,
                     const CvOptions& options) {
  const std::size_t n = dataset.n();
  if (dataset.X.rows() != n) throw Error("cv: X and y differ in length");
  if (!(options.level > 0.0 && options.level < 1.0)) throw Error("cv: level must lie in (0, 1)");
  const std::vector<Observation> obs = dataset.observations(family);
  validate(family, obs);

  CvReport report;
  report.dataset = dataset.name;
  report.family = family;
  report.folds = kfold_assign(n, options.folds, seed);
  const std::size_t S = params.stages;

  // groups[g] lists the original folds whose rows form test group g.
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t f = 0; f < options.folds; ++f) groups.push_back({f});

  auto run_group = [&](const std::vector<std::size_t>& group) {
    FoldPredictions out;
    std::vector<bool> is_test(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      is_test[i] = std::find(group.begin(), group.end(), report.folds[i]) != group.end();
    }
    std::vector<std::size_t> train_rows;
    std::vector<Observation> train_obs;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_test[i]) {
        out.test_rows.push_back(i);
      } else {
        train_rows.push_back(i);
        train_obs.push_back(obs[i]);
      }
    }
    GbfParams fold_params = params;
    fold_params.family = family;
    fold_params.forest.seed = derive_seed(seed, "fold", *std::min_element(group.begin(), group.end()));
    const GbfModel model = fit(dataset.X.select_rows(train_rows), train_obs, fold_params);
    out.link_estimate.assign(S + 1, std::vector<double>(out.test_rows.size()));
    out.link_variance = out.link_estimate;
    for (std::size_t j = 0; j < out.test_rows.size(); ++j) {
      const auto preds = predict_stages(model, dataset.X.row(out.test_rows[j]));
      for (std::size_t s = 0; s <= S; ++s) {
        out.link_estimate[s][j] = preds[s].link_estimate;
        out.link_variance[s][j] = preds[s].link_variance;
      }
    }
    return out;
  };

  struct Outcome {
    std::optional<FoldPredictions> result;
    std::exception_ptr error;
    bool degenerate = false;
  };
  auto attempt = [&](const std::vector<std::size_t>& group) {
    Outcome o;
    try {
      o.result = run_group(group);
    } catch (const Error& e) {
      o.degenerate = std::string(e.what()).find("degenerate MLE") != std::string::npos;
      o.error = std::current_exception();
    } catch (...) {
      o.error = std::current_exception();
    }
    return o;
  };

  std::vector<Outcome> outcomes(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < groups.size(); g = next++) outcomes[g] = attempt(groups[g]);
  };
  const std::size_t threads = std::clamp<std::size_t>(
      options.threads == 0 ? std::thread::hardware_concurrency() : options.threads, 1, groups.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  while (true) {
    std::size_t g = 0;
    while (g < outcomes.size() && !outcomes[g].error) ++g;
    if (g == outcomes.size()) break;
    if (!outcomes[g].degenerate) std::rethrow_exception(outcomes[g].error);
    if (groups.size() <= 2) throw Error("cv: degenerate MLE persists after merging folds");
    const std::size_t h = (g + 1) % groups.size();
    report.merged_folds.insert(report.merged_folds.end(), groups[g].begin(), groups[g].end());
    groups[g].insert(groups[g].end(), groups[h].begin(), groups[h].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(h));
    outcomes.erase(outcomes.begin() + static_cast<std::ptrdiff_t>(h));
    if (h < g) --g;
    outcomes[g] = attempt(groups[g]);
  }

  report.link_estimate.assign(S + 1, std::vector<double>(n));
  report.link_variance = report.link_estimate;
  for (const auto& o : outcomes) {
    const FoldPredictions& fp = *o.result;
    for (std::size_t j = 0; j < fp.test_rows.size(); ++j) {
      for (std::size_t s = 0; s <= S; ++s) {
        report.link_estimate[s][fp.test_rows[j]] = fp.link_estimate[s][j];
        report.link_variance[s][fp.test_rows[j]] = fp.link_variance[s][j];
      }
    }
  }

  const double z = normal_quantile(0.5 + options.level / 2.0);
  for (std::size_t s = 0; s <= S; ++s) {
    const auto& eta = report.link_estimate[s];
    const auto& var = report.link_variance[s];
    std::vector<double> mu(n), target(n), var_r(n), var_printed(n);
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] = inv_link(family, eta[i]);
      target[i] = family == Family::binomial ? obs[i].y / static_cast<double>(*obs[i].trials) : obs[i].y;
      const double d = inv_link_deriv(family, eta[i]);
      var_r[i] = var[i] * d * d;
      var_printed[i] = var[i] * mu[i] * mu[i];
    }
    CvRow row;
    row.stage = s;
    row.mse = mse(mu, target);
    row.avg_var = mean_of(var_r);
    row.avg_var_printed = mean_of(var_printed);
    std::vector<Interval> intervals(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double half = z * std::sqrt(var_r[i] + row.mse);
      intervals[i] = {mu[i] - half, mu[i] + half};
    }
    row.pc = coverage(intervals, target);
    row.ll = mean_log_lik(family, eta, obs);
    report.rows.push_back(row);
  }
  return report;
}

void write_cv_csv(std::ostream& out, const CvReport& report) {
  out << "dataset,family,stage,mse,avg_var,avg_var_printed,pc,ll\n";
  for (const auto& row : report.rows) {
    out << report.dataset << ',' << to_string(report.family) << ',' << row.stage << ',' << format_double(row.mse)
        << ',' << format_double(row.avg_var) << ',' << format_double(row.avg_var_printed) << ','
        << format_double(row.pc) << ',' << format_double(row.ll) << '\n';
  }
}

void write_cv_table(std::ostream& out, const CvReport& report) {
  std::ostringstream s;
  s << std::left << std::setw(10) << report.dataset << std::right << std::setw(12) << "MSE" << std::setw(12)
    << "Avg Var" << std::setw(16) << "Avg Var (mu^2)" << std::setw(10) << "PC" << std::setw(12) << "LL" << '\n';
  for (const auto& row : report.rows) {
    s << std::left << std::setw(10) << ("stage" + std::to_string(row.stage)) << std::right << std::fixed
      << std::setprecision(3) << std::setw(12) << row.mse << std::setprecision(5) << std::setw(12) << row.avg_var
      << std::setw(16) << row.avg_var_printed << std::setprecision(4) << std::setw(10) << row.pc << std::setw(12)
      << row.ll << '\n';
  }
  if (!report.merged_folds.empty()) {
    s << "merged folds:";
    for (const auto f : report.merged_folds) s << ' ' << f;
    s << '\n';
  }
  out << s.str();
}

}  // namespace gbf
