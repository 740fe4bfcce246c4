// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "gbf/booster.hpp"
#include "gbf/cli.hpp"
#include "gbf/error.hpp"
#include "gbf/eval.hpp"
#include "gbf/model_io.hpp"
#include "gbf/sim.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using gbf::Family;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

gbf::GbfParams sim_params(Family family, std::size_t dim, std::size_t B, double fraction, std::uint64_t seed) {
  gbf::GbfParams params;
  params.family = family;
  params.forest.num_trees = B;
  params.forest.sample_fraction = fraction;
  params.forest.tree = gbf::default_tree_params(dim);
  params.forest.seed = seed;
  return params;
}

// 1. Forest IJ derivatives against the two-pass covariance oracle.
Outcome ij_oracle() {
  double worst = 0.0;
  std::size_t forests = 0, values = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t n = 15 + (seed * 5) % 26;  // 15..40
    const std::size_t B = 20 + (seed * 37) % 181;  // 20..200
    const gbf::Matrix X = oracle::uniform_matrix(n, 5, seed);
    const Family family = seed % 2 ? Family::poisson : Family::binomial;
    const auto obs = family == Family::poisson ? oracle::poisson_data(X, seed + 1) : oracle::binomial_data(X, seed + 1, 4);
    auto params = sim_params(family, 5, B, 0.3 + 0.05 * static_cast<double>(seed % 8), seed);
    params.forest.tree.min_node_size = 2;
    const auto model = gbf::fit(X, obs, params);
    const gbf::Matrix T = oracle::uniform_matrix(10, 5, 1000 + seed);
    for (const auto& forest : model.forests) {
      ++forests;
      for (std::size_t t = 0; t < T.rows(); ++t) {
        const auto preds = forest.per_tree_predictions(T.row(t));
        const auto got = forest.ij_derivatives(T.row(t));
        const auto want = oracle::ij_two_pass(forest, preds);
        for (std::size_t i = 0; i < n; ++i) {
          worst = std::max(worst, std::abs(got[i] - want[i]));
          ++values;
        }
      }
    }
  }
  return {worst <= 1e-12, std::to_string(forests) + " forests, " + std::to_string(values) +
                              " derivatives, max |diff| = " + fmt("%.3g", worst) + " (tol 1e-12)"};
}

// 2. Constant-stage derivatives against central differences of the reweighted MLE.
Outcome mle_oracle() {
  std::mt19937_64 gen(2);
  double worst = 0.0;
  int datasets = 0;
  while (datasets < 50) {
    const Family family = datasets % 2 ? Family::binomial : Family::poisson;
    std::vector<gbf::Observation> obs;
    std::uniform_int_distribution<int> trials(1, 8);
    std::uniform_real_distribution<double> rate(0.2, 6.0);
    for (int i = 0; i < 30; ++i) {
      if (family == Family::poisson) {
        std::poisson_distribution<int> y(rate(gen));
        obs.push_back({static_cast<double>(y(gen)), std::nullopt});
      } else {
        const int n = trials(gen);
        std::binomial_distribution<int> y(n, rate(gen) / 6.2);
        obs.push_back({static_cast<double>(y(gen)), n});
      }
    }
    std::vector<double> u;
    try {
      u = gbf::mle_derivatives(family, obs);
    } catch (const gbf::Error&) {
      continue;
    }
    const auto fd = oracle::mle_derivatives_fd(family, obs, 1e-6);
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - fd[i]));
    ++datasets;
  }
  return {worst <= 1e-5, "50 datasets (n=30), max |U - FD| = " + fmt("%.3g", worst) + " (tol 1e-5)"};
}

// 3. Gaussian family reduces to plain residual boosting.
Outcome gaussian_reduction() {
  bool targets_ok = true, fit_ok = true;
  std::size_t compared = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const gbf::Matrix X = oracle::uniform_matrix(120, 6, seed);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> noise;
    std::vector<gbf::Observation> obs;
    std::vector<double> y, eta;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      y.push_back(X(i, 0) + X(i, 1) * X(i, 1) + noise(gen));
      obs.push_back({y.back(), std::nullopt});
      eta.push_back(noise(gen));
    }
    const auto targets = gbf::newton_residuals_weights(Family::gaussian, eta, obs);
    for (std::size_t i = 0; i < y.size(); ++i) {
      targets_ok = targets_ok && targets.residuals[i] == y[i] - eta[i] && targets.weights[i] == targets.weights[0];
    }
    const auto params = sim_params(Family::gaussian, 6, 100, 0.5, 40 + seed);
    const auto model = gbf::fit(X, obs, params);
    const auto plain = oracle::plain_residual_boost(X, y, params);
    fit_ok = fit_ok && model.eta0 == plain.eta0;
    for (std::size_t s = 0; s < 2; ++s) {
      fit_ok = fit_ok && model.forests[s].inclusion_matrix() == plain.forests[s].inclusion_matrix();
    }
    const gbf::Matrix T = oracle::uniform_matrix(50, 6, 500 + seed);
    for (std::size_t t = 0; t < T.rows(); ++t) {
      fit_ok = fit_ok && gbf::predict(model, T.row(t)).link_estimate == oracle::plain_predict(plain, T.row(t));
      ++compared;
    }
  }
  return {targets_ok && fit_ok, std::string("residuals/weights exact: ") + (targets_ok ? "yes" : "no") +
                                    ", two-stage fit bit-identical at " + std::to_string(compared) +
                                    " points: " + (fit_ok ? "yes" : "no")};
}

// 4. Stage-wise lower and range bounds on predictions.
Outcome truncation() {
  std::size_t checked = 0, violations = 0;
  for (const Family family : {Family::poisson, Family::binomial}) {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      const std::uint64_t seed = gbf::derive_seed(404, rep);
      const gbf::Matrix X = gbf::sim::gen_covariates(500, 15, gbf::derive_seed(seed, "x"));
      std::vector<double> f(500);
      for (std::size_t i = 0; i < 500; ++i) f[i] = gbf::sim::signal_linear(X.row(i));
      const auto obs = gbf::sim::gen_response(family, f, 4.0, 4, gbf::derive_seed(seed, "y"));
      const auto model = gbf::fit(X, obs, sim_params(family, 15, 300, 0.4, seed));
      const gbf::Matrix T = gbf::sim::gen_covariates(200, 15, gbf::derive_seed(seed, "t"));
      auto check = [&](std::span<const double> x) {
        const auto stages = gbf::predict_stages(model, x);
        for (std::size_t s = 1; s <= 2; ++s) {
          const double v = stages[s].link_estimate;
          const auto range = gbf::prediction_range(model, s);
          bool ok = v >= range.lo && v <= range.hi;
          if (family == Family::poisson) ok = ok && v >= model.eta0 - static_cast<double>(s);
          violations += !ok;
          ++checked;
        }
      };
      for (std::size_t t = 0; t < T.rows(); ++t) check(T.row(t));
      for (std::size_t i = 0; i < X.rows(); ++i) check(X.row(i));
    }
  }
  return {violations == 0, "40 fits (20 poisson, 20 binomial), " + std::to_string(checked) +
                               " stage-1/2 predictions, violations = " + std::to_string(violations)};
}

// 5. Stage-wise test log-likelihood improvement.
Outcome likelihood_improvement() {
  std::string detail;
  bool pass = true;
  for (const Family family : {Family::binomial, Family::poisson}) {
    if (!detail.empty()) detail += "; ";
    gbf::sim::SimConfig config;
    config.family = family;
    config.n_train = 500;
    config.num_trees = 300;
    config.replicates = 20;
    config.n_test_random = 100;
    config.scales = {4};
    config.trials_max = {4};
    config.sample_fractions = {0.4};
    config.seed = 5;
    const auto records = gbf::sim::run_grid(config);
    int up01 = 0, up12 = 0, both = 0, ok = 0;
    for (const auto& r : records) {
      if (!r.ok()) continue;
      ++ok;
      const bool a = r.stages[1].mean_ll > r.stages[0].mean_ll;
      const bool b = r.stages[2].mean_ll > r.stages[1].mean_ll;
      up01 += a;
      up12 += b;
      both += a && b;
    }
    const double share = static_cast<double>(both) / static_cast<double>(records.size());
    pass = pass && share >= 0.9;
    detail += std::string(gbf::to_string(family)) + ": 0->1 " + std::to_string(up01) + "/20, 1->2 " +
              std::to_string(up12) + "/20, both " + std::to_string(both) + "/20 (need >= 18)";
  }
  return {pass, detail};
}

gbf::sim::SimConfig variance_grid() {
  gbf::sim::SimConfig config;
  config.family = Family::poisson;
  config.n_train = 300;
  config.num_trees = 500;
  config.replicates = 100;
  config.scales = {1};
  config.sample_fractions = {0.4};
  config.seed = 6;
  return config;
}

const gbf::sim::PointSummary& p1_stage2(const gbf::sim::SimConfig& config,
                                        const std::vector<gbf::sim::PointSummary>& summary) {
  for (const auto& s : summary) {
    if (s.stage == 2 && s.point == config.n_test_random) return s;
  }
  throw gbf::Error("p1 summary missing");
}

// 6 and 8 share one simulation grid.
struct VarianceGrid {
  gbf::sim::PointSummary p1;
  std::size_t failed = 0;
};

const VarianceGrid& variance_grid_result() {
  static const VarianceGrid result = [] {
    const auto config = variance_grid();
    const auto records = gbf::sim::run_grid(config);
    const auto test = gbf::sim::make_test_set(config);
    VarianceGrid out;
    out.p1 = p1_stage2(config, gbf::sim::summarize(config, test, records));
    for (const auto& r : records) out.failed += !r.ok();
    return out;
  }();
  return result;
}

Outcome variance_behaviour() {
  const auto& g = variance_grid_result();
  const bool pass = g.failed == 0 && g.p1.var_ratio_link >= 0.5 && g.p1.var_ratio_link <= 5.0 && g.p1.coverage_link >= 0.80;
  return {pass, "p1, stage 2, 100 replicates: var ratio = " + fmt("%.3f", g.p1.var_ratio_link) +
                    " (need [0.5, 5]), coverage = " + fmt("%.2f", g.p1.coverage_link) + " (need >= 0.80)"};
}

Outcome ks_sanity() {
  const auto& g = variance_grid_result();
  const bool pass = g.failed == 0 && g.p1.ks_link <= 0.35;
  return {pass, "p1, stage 2, link-space KS = " + fmt("%.3f", g.p1.ks_link) + " (need <= 0.35)"};
}

// 7. Real data, 10-fold CV.
Outcome real_data() {
  const fs::path root(GBF_SOURCE_DIR);
  auto run = [&](const std::string& name, Family family) {
    const auto data = gbf::load_csv(root / "data" / (name + ".csv"), gbf::CsvSchema::load(root / "data" / (name + ".schema")));
    const auto params = sim_params(family, data.X.cols(), 300, 0.4, 0);
    return gbf::cv_evaluate(data, family, params, 7);
  };
  const auto spam = run("spambase", Family::binomial);
  const auto abalone = run("abalone", Family::poisson);
  const auto& s = spam.rows;
  const auto& a = abalone.rows;
  const bool spam_ok = s[0].ll < s[1].ll && s[1].ll < s[2].ll && s[2].mse <= 0.08;
  const bool abalone_ok = a[1].mse < a[0].mse && a[2].mse < a[0].mse;
  return {spam_ok && abalone_ok,
          "spam LL " + fmt("%.4f", s[0].ll) + " < " + fmt("%.4f", s[1].ll) + " < " + fmt("%.4f", s[2].ll) +
              ", stage-2 MSE " + fmt("%.4f", s[2].mse) + " (need <= 0.08); abalone MSE " + fmt("%.3f", a[0].mse) +
              " > " + fmt("%.3f", a[1].mse) + ", " + fmt("%.3f", a[2].mse)};
}

// 9. Determinism of simulate and model-file round trip.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path();
  const fs::path cfg = dir / "gbf_accept_sim.cfg";
  std::ofstream(cfg) << "family = binomial\nn_train = 120\nn_test_random = 20\nreplicates = 2\nscales = 1, 4\n"
                        "trials_max = 2\nsample_fractions = 0.4\nnum_trees = 40\n";
  auto simulate = [&](const fs::path& out) {
    const std::string c = cfg.string(), o = out.string();
    const char* argv[] = {"gbf", "simulate", "--config", c.c_str(), "--out", o.c_str(), "--seed", "17"};
    std::ostringstream sout, serr;
    return gbf::run_cli(8, argv, sout, serr);
  };
  const fs::path a = dir / "gbf_accept_a.csv", b = dir / "gbf_accept_b.csv";
  const bool ran = simulate(a) == 0 && simulate(b) == 0;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const bool same_csv = ran && slurp(a) == slurp(b) && !slurp(a).empty();

  const gbf::Matrix X = oracle::uniform_matrix(200, 8, 3);
  const auto obs = oracle::poisson_data(X, 4);
  gbf::ModelFile file{gbf::fit(X, obs, sim_params(Family::poisson, 8, 100, 0.4, 5)), {}};
  const fs::path model_path = dir / "gbf_accept.gbf";
  gbf::save_model(model_path, file);
  const auto back = gbf::load_model(model_path);
  const gbf::Matrix T = oracle::uniform_matrix(100, 8, 6);
  bool same_pred = true;
  for (std::size_t t = 0; t < T.rows(); ++t) {
    const auto p = gbf::predict_stages(file.model, T.row(t));
    const auto q = gbf::predict_stages(back.model, T.row(t));
    for (std::size_t s = 0; s < p.size(); ++s) {
      same_pred = same_pred && p[s].link_estimate == q[s].link_estimate && p[s].link_variance == q[s].link_variance &&
                  p[s].response_variance == q[s].response_variance;
    }
  }
  return {same_csv && same_pred, std::string("simulate CSV byte-identical: ") + (same_csv ? "yes" : "no") +
                                     ", model round trip exact at 100 points x 3 stages: " + (same_pred ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"IJ derivatives match two-pass covariance oracle", ij_oracle},
      {"MLE derivatives match finite differences", mle_oracle},
      {"gaussian reduction", gaussian_reduction},
      {"truncation invariants", truncation},
      {"stage-wise likelihood improvement", likelihood_improvement},
      {"variance-estimate behaviour", variance_behaviour},
      {"real-data direction", real_data},
      {"KS sanity", ks_sanity},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int number = static_cast<int>(c + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[c].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s  %s -- %s [%.1fs]\n", number, outcome.pass ? "PASS" : "FAIL",
                criteria[c].first.c_str(), outcome.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !outcome.pass;
  }
  return failures == 0 ? 0 : 1;
}
