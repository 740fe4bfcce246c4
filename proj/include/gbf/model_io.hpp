#ifndef GBF_MODEL_IO_HPP_
#define GBF_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "gbf/booster.hpp"
#include "gbf/eval.hpp"

namespace gbf {

inline constexpr std::uint8_t kModelFormatVersion = 1;

// A fitted model plus the encoding that turns raw CSV columns into its
// feature vector. Layout is described in docs/model_format.md.
struct ModelFile {
  GbfModel model;
  FeatureEncoding encoding;
};

std::string serialize_model(const ModelFile& file);
ModelFile deserialize_model(const std::string& bytes);

void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace gbf

#endif  // GBF_MODEL_IO_HPP_
