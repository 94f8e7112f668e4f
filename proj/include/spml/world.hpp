#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spml/core.hpp"
#include "spml/score_map.hpp"
#include "spml/seed.hpp"

namespace spml {

// Number of objects per image: counts min..max, uniform unless weights are
// given (one weight per count).
struct ObjectCountDistribution {
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  std::vector<double> weights;

  void validate(std::size_t class_count) const;
  double mean() const;
  double variance() const;
  std::size_t sample(Rng& rng) const;
};

struct WorldConfig {
  std::size_t class_count = 20;
  std::size_t instance_count = 2000;
  std::size_t map_size = 16;
  std::size_t feature_dim = 32;
  ObjectCountDistribution objects;
  double feature_noise = 0.5;
  // Object side lengths as a fraction of the map side.
  double object_size_min = 0.2;
  double object_size_max = 0.5;
  // Per-pixel evidence of an object.
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct WorldInstance {
  ImageId image_id = 0;
  SpatialScoreMap evidence;
  std::vector<double> features;
  GroundTruthVector truth;
  AnnotationVector annotation{1, 0};
};

struct SyntheticWorld {
  std::vector<WorldInstance> instances;
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;
  // Empirical mean of Σ_c y_c over all instances.
  double expected_positives = 0.0;
  // D×C readout from per-class salience to features.
  Matrix readout;
};

// Each instance places distinct classes as rectangular evidence blobs; its
// features are a noisy linear readout of per-class evidence mass and one true
// positive is retained uniformly at random as the annotation.
SyntheticWorld simulate_world(const WorldConfig& cfg);

// Rows of `indices`, stacked.
Matrix gather_features(const SyntheticWorld& world, std::span<const std::size_t> indices);

}  // namespace spml
