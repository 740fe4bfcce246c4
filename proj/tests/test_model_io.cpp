#include <doctest.h>

#include <filesystem>

#include "gbf/error.hpp"
#include "gbf/model_io.hpp"
#include "oracles.hpp"

using gbf::Family;

namespace {

gbf::ModelFile fitted(Family family, std::size_t stages) {
  const gbf::Matrix X = oracle::uniform_matrix(50, 4, 3);
  const auto obs = family == Family::binomial ? oracle::binomial_data(X, 4, 3) : oracle::poisson_data(X, 4);
  gbf::GbfParams params;
  params.family = family;
  params.stages = stages;
  params.forest.num_trees = 25;
  params.forest.sample_fraction = 0.4;
  params.forest.tree = gbf::default_tree_params(4);
  params.forest.tree.max_depth = 6;
  params.forest.seed = 99;
  gbf::ModelFile file;
  file.model = gbf::fit(X, obs, params);
  for (const char* name : {"a", "b", "c", "d"}) file.encoding.columns.push_back({name, {}});
  return file;
}

}  // namespace

TEST_CASE("round trip reproduces predictions bit for bit") {
  for (const Family family : {Family::poisson, Family::binomial}) {
    for (std::size_t stages = 0; stages <= 2; ++stages) {
      const auto file = fitted(family, stages);
      const auto path = std::filesystem::temp_directory_path() / "gbf_roundtrip.gbf";
      gbf::save_model(path, file);
      const auto back = gbf::load_model(path);
      CHECK(back.model.eta0 == file.model.eta0);
      CHECK(back.model.u0 == file.model.u0);
      CHECK(back.model.fingerprint == file.model.fingerprint);
      CHECK(back.model.training_mean_ll == file.model.training_mean_ll);
      CHECK(back.model.params.forest.tree.max_depth == file.model.params.forest.tree.max_depth);
      CHECK(back.encoding.encoded_names() == file.encoding.encoded_names());
      const gbf::Matrix T = oracle::uniform_matrix(15, 4, 8);
      for (std::size_t t = 0; t < T.rows(); ++t) {
        const auto a = gbf::predict_stages(file.model, T.row(t));
        const auto b = gbf::predict_stages(back.model, T.row(t));
        for (std::size_t s = 0; s < a.size(); ++s) {
          CHECK(a[s].link_estimate == b[s].link_estimate);
          CHECK(a[s].link_variance == b[s].link_variance);
        }
        const auto ra = gbf::prediction_range(file.model);
        const auto rb = gbf::prediction_range(back.model);
        CHECK(ra.lo == rb.lo);
        CHECK(ra.hi == rb.hi);
      }
      CHECK(gbf::serialize_model(back) == gbf::serialize_model(file));
    }
  }
}

TEST_CASE("layout starts with the version byte") {
  const auto bytes = gbf::serialize_model(fitted(Family::poisson, 1));
  CHECK(static_cast<std::uint8_t>(bytes[0]) == gbf::kModelFormatVersion);
  CHECK(bytes.substr(1, 3) == "GBF");
  CHECK(bytes.substr(4, 4) == "PARM");
}

TEST_CASE("corrupt files are rejected") {
  const auto bytes = gbf::serialize_model(fitted(Family::poisson, 2));
  std::string wrong_version = bytes;
  wrong_version[0] = 9;
  CHECK_THROWS_AS(gbf::deserialize_model(wrong_version), gbf::Error);
  CHECK_THROWS_AS(gbf::deserialize_model(bytes.substr(0, bytes.size() / 2)), gbf::Error);
  CHECK_THROWS_AS(gbf::deserialize_model(bytes.substr(0, 20)), gbf::Error);
  CHECK_THROWS_AS(gbf::load_model("/nonexistent/model.gbf"), gbf::Error);
}
