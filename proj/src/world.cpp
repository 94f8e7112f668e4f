#include "spml/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace spml {

void ObjectCountDistribution::validate(std::size_t class_count) const {
  if (min_objects == 0) throw ConfigError("objects: an image needs at least one object");
  if (max_objects < min_objects) throw ConfigError("objects: max_objects below min_objects");
  if (max_objects > class_count) {
    throw ConfigError("objects: max_objects exceeds the class count");
  }
  if (!weights.empty()) {
    if (weights.size() != max_objects - min_objects + 1) {
      throw ConfigError("objects: need one weight per object count");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("objects: weights must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("objects: weights sum to zero");
  }
}

double ObjectCountDistribution::mean() const {
  if (weights.empty()) return 0.5 * static_cast<double>(min_objects + max_objects);
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    acc += weights[i] * static_cast<double>(min_objects + i);
  }
  return acc / total;
}

double ObjectCountDistribution::variance() const {
  const double mu = mean();
  const std::size_t span = max_objects - min_objects + 1;
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < span; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double d = static_cast<double>(min_objects + i) - mu;
    total += w;
    acc += w * d * d;
  }
  return acc / total;
}

std::size_t ObjectCountDistribution::sample(Rng& rng) const {
  const std::size_t span = max_objects - min_objects + 1;
  if (weights.empty()) return min_objects + static_cast<std::size_t>(rng.below(span));
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < span; ++i) {
    if (u < weights[i]) return min_objects + i;
    u -= weights[i];
  }
  // Rounding can leave u marginally above the last weight.
  for (std::size_t i = span; i-- > 0;) {
    if (weights[i] > 0.0) return min_objects + i;
  }
  return max_objects;
}

void WorldConfig::validate() const {
  if (class_count < 2) throw ConfigError("world: class_count must be at least 2");
  if (instance_count < 1) throw ConfigError("world: instance_count must be at least 1");
  if (map_size < 1) throw ConfigError("world: map_size must be at least 1");
  if (feature_dim < 1) throw ConfigError("world: feature_dim must be at least 1");
  if (!(feature_noise >= 0.0)) throw ConfigError("world: feature_noise must be nonnegative");
  if (!(object_size_min > 0.0 && object_size_min <= object_size_max && object_size_max <= 1.0)) {
    throw ConfigError("world: object sizes must satisfy 0 < min <= max <= 1");
  }
  if (!(amplitude_min > 0.0 && amplitude_min <= amplitude_max)) {
    throw ConfigError("world: amplitudes must satisfy 0 < min <= max");
  }
  objects.validate(class_count);
}

SyntheticWorld simulate_world(const WorldConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.class_count;
  const std::size_t d = cfg.feature_dim;
  const std::size_t side = cfg.map_size;

  SyntheticWorld world;
  world.class_count = c;
  world.feature_dim = d;
  world.readout = Matrix(d, c);
  Rng readout_rng(derive_seed({cfg.seed, 0, 0, kInitStream}));
  for (double& v : world.readout.values()) v = readout_rng.normal();

  const double mean_side = 0.5 * (cfg.object_size_min + cfg.object_size_max);
  const double reference_mass = static_cast<double>(side * side) * mean_side * mean_side *
                                0.5 * (cfg.amplitude_min + cfg.amplitude_max);

  auto pixels = [side](double fraction) {
    const auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(side)));
    return std::clamp<std::size_t>(n, 1, side);
  };

  world.instances.reserve(cfg.instance_count);
  std::size_t positives_total = 0;
  std::vector<ClassIndex> classes(c);
  for (std::size_t i = 0; i < cfg.instance_count; ++i) {
    Rng rng(derive_seed({cfg.seed, 0, i, 0}));
    const std::size_t objects = cfg.objects.sample(rng);
    std::iota(classes.begin(), classes.end(), ClassIndex{0});
    for (std::size_t k = 0; k < objects; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(c - k));
      std::swap(classes[k], classes[j]);
    }

    WorldInstance inst;
    inst.image_id = i;
    inst.evidence = SpatialScoreMap(side, side, c);
    std::vector<std::uint8_t> truth(c, 0);
    for (std::size_t k = 0; k < objects; ++k) {
      const ClassIndex cls = classes[k];
      const std::size_t w = pixels(rng.uniform(cfg.object_size_min, cfg.object_size_max));
      const std::size_t h = pixels(rng.uniform(cfg.object_size_min, cfg.object_size_max));
      const std::size_t x0 = static_cast<std::size_t>(rng.below(side - w + 1));
      const std::size_t y0 = static_cast<std::size_t>(rng.below(side - h + 1));
      const auto amplitude = static_cast<float>(rng.uniform(cfg.amplitude_min, cfg.amplitude_max));
      for (std::size_t y = y0; y < y0 + h; ++y) {
        for (std::size_t x = x0; x < x0 + w; ++x) inst.evidence.at(y, x, cls) += amplitude;
      }
      truth[cls] = 1;
    }
    inst.truth = GroundTruthVector(std::move(truth));
    inst.annotation = AnnotationVector(c, classes[static_cast<std::size_t>(rng.below(objects))]);
    positives_total += objects;

    const std::vector<double> totals = inst.evidence.class_totals();
    inst.features.assign(d, 0.0);
    for (std::size_t row = 0; row < d; ++row) {
      double acc = 0.0;
      for (std::size_t k = 0; k < c; ++k) acc += world.readout(row, k) * totals[k] / reference_mass;
      inst.features[row] = acc + cfg.feature_noise * rng.normal();
    }
    world.instances.push_back(std::move(inst));
  }
  world.expected_positives =
      static_cast<double>(positives_total) / static_cast<double>(cfg.instance_count);
  return world;
}

Matrix gather_features(const SyntheticWorld& world, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), world.feature_dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = world.instances.at(indices[r]).features;
    std::copy(f.begin(), f.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace spml
