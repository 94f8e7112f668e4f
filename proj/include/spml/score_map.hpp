#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spml/core.hpp"

namespace spml {

// H×W×C nonnegative class evidence, stored (y, x, c) with c fastest.
class SpatialScoreMap {
 public:
  SpatialScoreMap() = default;
  SpatialScoreMap(std::size_t height, std::size_t width, std::size_t classes);
  // Validates shape and that every entry is finite and nonnegative.
  SpatialScoreMap(std::size_t height, std::size_t width, std::size_t classes,
                  std::vector<float> evidence);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t class_count() const { return classes_; }

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return evidence_[(y * width_ + x) * classes_ + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return evidence_[(y * width_ + x) * classes_ + c];
  }
  const std::vector<float>& evidence() const { return evidence_; }

  // Σ over all pixels, per class.
  std::vector<double> class_totals() const;
  bool operator==(const SpatialScoreMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t classes_ = 0;
  std::vector<float> evidence_;
};

// SSM1 layout: "SSM1", u32 H, u32 W, u32 C (little endian), then H·W·C
// little-endian float32 values.
std::vector<std::uint8_t> encode_score_map(const SpatialScoreMap& map);
SpatialScoreMap decode_score_map(const std::vector<std::uint8_t>& bytes);

void save_score_map(const std::filesystem::path& path, const SpatialScoreMap& map);
SpatialScoreMap load_score_map(const std::filesystem::path& path);

struct ScoreMapMetadata {
  std::string image_id;
  std::vector<std::string> class_names;
  std::string source_model;
};

// Sidecar lives at `<map path>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& map_path);
void save_sidecar(const std::filesystem::path& map_path, const ScoreMapMetadata& meta);
std::optional<ScoreMapMetadata> load_sidecar(const std::filesystem::path& map_path);

// Loads every map listed by `<dir>/manifest.json` ("maps": [file, ...]) or,
// without a manifest, every *.ssm1 file in lexicographic order. The position
// in the returned vector is the image id.
std::vector<SpatialScoreMap> load_score_map_directory(const std::filesystem::path& dir);

}  // namespace spml
