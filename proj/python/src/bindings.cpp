#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "gbf/booster.hpp"
#include "gbf/error.hpp"
#include "gbf/eval.hpp"
#include "gbf/model_io.hpp"
#include "gbf/sim.hpp"

namespace py = pybind11;
using namespace gbf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error("X must be a 2-d array");
  Matrix X(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), X.data().begin());
  return X;
}

std::vector<double> to_point(const Array& a) {
  if (a.ndim() != 1) throw Error("x must be a 1-d array");
  return {a.data(), a.data() + a.size()};
}

GbfParams make_params(std::size_t p, const std::string& family, std::size_t num_trees, double sample_fraction,
                      std::size_t mtry, std::size_t min_node_size, std::optional<std::size_t> max_depth,
                      std::size_t stages, const std::string& variance_mode, const std::string& residuals,
                      std::uint64_t seed, std::size_t threads) {
  GbfParams out;
  out.family = parse_family(family);
  if (stages > kMaxStages) throw Error("unsupported stage count " + std::to_string(stages) + " (at most 2)");
  out.stages = stages;
  if (variance_mode == "corrected") {
    out.variance_mode = VarianceMode::corrected;
  } else if (variance_mode == "raw") {
    out.variance_mode = VarianceMode::raw;
  } else {
    throw Error("variance_mode must be 'corrected' or 'raw'");
  }
  if (residuals == "in_sample") {
    out.residual_source = ResidualSource::in_sample;
  } else if (residuals == "out_of_bag") {
    out.residual_source = ResidualSource::out_of_bag;
  } else {
    throw Error("residuals must be 'in_sample' or 'out_of_bag'");
  }
  out.forest.num_trees = num_trees;
  out.forest.sample_fraction = sample_fraction;
  out.forest.seed = seed;
  out.forest.num_threads = threads;
  out.forest.tree = default_tree_params(p);
  out.forest.tree.min_node_size = min_node_size;
  if (mtry > 0) out.forest.tree.mtry = mtry;
  out.forest.tree.max_depth = max_depth;
  return out;
}

py::dict prediction_dict(const std::vector<PredictionWithVariance>& preds, double level) {
  const std::size_t m = preds.size();
  Array link(m), link_var(m), resp(m), resp_var(m), lo(m), hi(m);
  py::array_t<bool> clamped(m);
  for (std::size_t t = 0; t < m; ++t) {
    const auto ci = confidence_interval(preds[t], level);
    link.mutable_at(t) = preds[t].link_estimate;
    link_var.mutable_at(t) = preds[t].link_variance;
    resp.mutable_at(t) = preds[t].response_estimate;
    resp_var.mutable_at(t) = preds[t].response_variance;
    lo.mutable_at(t) = ci.lo;
    hi.mutable_at(t) = ci.hi;
    clamped.mutable_at(t) = preds[t].variance_clamped;
  }
  py::dict out;
  out["link_estimate"] = link;
  out["link_variance"] = link_var;
  out["response_estimate"] = resp;
  out["response_variance"] = resp_var;
  out["ci_lo"] = lo;
  out["ci_hi"] = hi;
  out["variance_clamped"] = clamped;
  return out;
}

std::vector<Observation> observations(Family family, const std::vector<double>& y,
                                      const std::optional<std::vector<std::int64_t>>& trials) {
  if (trials && trials->size() != y.size()) throw Error("trials and y differ in length");
  std::vector<Observation> obs(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    obs[i].y = y[i];
    if (trials) {
      obs[i].trials = (*trials)[i];
    } else if (family == Family::binomial) {
      obs[i].trials = 1;
    }
  }
  return obs;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Boosted forests for exponential-family responses with infinitesimal-jackknife variances";
  py::register_exception<Error>(m, "GbfError", PyExc_ValueError);

  py::class_<ModelFile>(m, "Model")
      .def_property_readonly("family", [](const ModelFile& f) { return std::string(to_string(f.model.params.family)); })
      .def_property_readonly("stages", [](const ModelFile& f) { return f.model.stages(); })
      .def_property_readonly("n", [](const ModelFile& f) { return f.model.n; })
      .def_property_readonly("p", [](const ModelFile& f) { return f.model.p; })
      .def_property_readonly("eta0", [](const ModelFile& f) { return f.model.eta0; })
      .def_property_readonly("training_mean_ll", [](const ModelFile& f) { return f.model.training_mean_ll; })
      .def(
          "predict",
          [](const ModelFile& f, const Array& X, std::optional<std::size_t> stages, double level) {
            const Matrix points = to_matrix(X);
            std::vector<PredictionWithVariance> preds;
            {
              py::gil_scoped_release release;
              for (std::size_t t = 0; t < points.rows(); ++t) preds.push_back(predict(f.model, points.row(t), stages));
            }
            return prediction_dict(preds, level);
          },
          py::arg("X"), py::arg("stages") = py::none(), py::arg("level") = 0.95)
      .def(
          "predict_stages",
          [](const ModelFile& f, const Array& x, double level) {
            const auto point = to_point(x);
            return prediction_dict(predict_stages(f.model, point), level);
          },
          py::arg("x"), py::arg("level") = 0.95,
          "Predictions at one point truncated after stage 0, 1, ...")
      .def(
          "prediction_range",
          [](const ModelFile& f, std::optional<std::size_t> stages) {
            const auto r = prediction_range(f.model, stages);
            return py::make_tuple(r.lo, r.hi);
          },
          py::arg("stages") = py::none())
      .def("save", [](const ModelFile& f, const std::filesystem::path& path) { save_model(path, f); }, py::arg("path"))
      .def("to_bytes", [](const ModelFile& f) { return py::bytes(serialize_model(f)); })
      .def_static("from_bytes", [](const py::bytes& b) { return deserialize_model(std::string(b)); });

  m.def(
      "fit",
      [](const Array& X, const std::vector<double>& y, const std::string& family,
         std::optional<std::vector<std::int64_t>> trials, std::size_t num_trees, double sample_fraction,
         std::size_t mtry, std::size_t min_node_size, std::optional<std::size_t> max_depth, std::size_t stages,
         const std::string& variance_mode, const std::string& residuals, std::uint64_t seed, std::size_t threads) {
        const Matrix design = to_matrix(X);
        const GbfParams params = make_params(design.cols(), family, num_trees, sample_fraction, mtry, min_node_size,
                                             max_depth, stages, variance_mode, residuals, seed, threads);
        const auto obs = observations(params.family, y, trials);
        py::gil_scoped_release release;
        return ModelFile{fit(design, obs, params), {}};
      },
      py::arg("X"), py::arg("y"), py::arg("family"), py::arg("trials") = py::none(), py::arg("num_trees") = 500,
      py::arg("sample_fraction") = 0.5, py::arg("mtry") = 0, py::arg("min_node_size") = 5,
      py::arg("max_depth") = py::none(), py::arg("stages") = 2, py::arg("variance_mode") = "corrected",
      py::arg("residuals") = "in_sample", py::arg("seed") = 1, py::arg("threads") = 1);

  m.def("load_model", [](const std::filesystem::path& path) { return load_model(path); }, py::arg("path"));

  m.def(
      "cv",
      [](const std::filesystem::path& data, const std::filesystem::path& schema, const std::string& family,
         std::size_t folds, std::size_t num_trees, double sample_fraction, std::size_t mtry,
         std::size_t min_node_size, std::size_t stages, double level, std::uint64_t seed, std::size_t threads) {
        const Dataset dataset = load_csv(data, CsvSchema::load(schema));
        GbfParams params = make_params(dataset.X.cols(), family, num_trees, sample_fraction, mtry, min_node_size,
                                       std::nullopt, stages, "corrected", "in_sample", seed, 1);
        CvOptions options{folds, level, threads};
        CvReport report;
        {
          py::gil_scoped_release release;
          report = cv_evaluate(dataset, params.family, params, seed, options);
        }
        py::list rows;
        for (const auto& r : report.rows) {
          py::dict row;
          row["stage"] = r.stage;
          row["mse"] = r.mse;
          row["avg_var"] = r.avg_var;
          row["avg_var_printed"] = r.avg_var_printed;
          row["pc"] = r.pc;
          row["ll"] = r.ll;
          rows.append(row);
        }
        py::dict out;
        out["dataset"] = report.dataset;
        out["rows"] = rows;
        out["folds"] = report.folds;
        out["merged_folds"] = report.merged_folds;
        return out;
      },
      py::arg("data"), py::arg("schema"), py::arg("family"), py::arg("folds") = 10, py::arg("num_trees") = 500,
      py::arg("sample_fraction") = 0.5, py::arg("mtry") = 0, py::arg("min_node_size") = 5, py::arg("stages") = 2,
      py::arg("level") = 0.95, py::arg("seed") = 1, py::arg("threads") = 1);

  m.def(
      "simulate",
      [](const std::string& config_text) {
        const sim::SimConfig config = sim::SimConfig::from_config(KeyValueConfig::parse(config_text));
        const sim::TestSet test = sim::make_test_set(config);
        std::vector<sim::ExperimentRecord> records;
        {
          py::gil_scoped_release release;
          records = sim::run_grid(config);
        }
        std::ostringstream rec, summary;
        sim::write_records_csv(rec, config, test, records);
        sim::write_summary_csv(summary, config, test, sim::summarize(config, test, records), records);
        return py::make_tuple(rec.str(), summary.str());
      },
      py::arg("config_text"), "Runs a simulation grid; returns (records_csv, summary_csv).");
}
