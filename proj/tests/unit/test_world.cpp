#include <doctest.h>

#include <cmath>

#include "spml/eval.hpp"
#include "spml/world.hpp"

using namespace spml;

namespace {

WorldConfig small_world(std::uint64_t seed) {
  WorldConfig cfg;
  cfg.class_count = 8;
  cfg.instance_count = 200;
  cfg.map_size = 8;
  cfg.feature_dim = 6;
  cfg.objects.min_objects = 1;
  cfg.objects.max_objects = 3;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("object count distribution") {
  ObjectCountDistribution d;
  d.min_objects = 1;
  d.max_objects = 3;
  CHECK(d.mean() == doctest::Approx(2.0));
  CHECK(d.variance() == doctest::Approx(2.0 / 3.0));
  d.weights = {0.0, 1.0, 3.0};
  CHECK(d.mean() == doctest::Approx(2.75));
  CHECK(d.variance() == doctest::Approx(0.1875));
  CHECK_NOTHROW(d.validate(5));
  CHECK_THROWS_AS(d.validate(2), ConfigError);
  d.weights = {1.0};
  CHECK_THROWS_AS(d.validate(5), ConfigError);
  d.weights = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(d.validate(5), ConfigError);
  d.weights.clear();
  d.min_objects = 0;
  CHECK_THROWS_AS(d.validate(5), ConfigError);
}

TEST_CASE("simulated instances are consistent") {
  const SyntheticWorld world = simulate_world(small_world(4));
  REQUIRE(world.instances.size() == 200);
  CHECK(world.class_count == 8);
  CHECK(world.readout.rows() == 6);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    const WorldInstance& inst = world.instances[i];
    CHECK(inst.image_id == i);
    CHECK(inst.features.size() == 6);
    CHECK(inst.annotation.size() == 8);
    // ŷ has exactly one positive and it is a true positive.
    CHECK(inst.truth.consistent_with(inst.annotation));
    const auto totals = inst.evidence.class_totals();
    for (ClassIndex c = 0; c < 8; ++c) CHECK((totals[c] > 0.0) == inst.truth[c]);
    CHECK_UNARY(inst.truth.positive_count() >= 1);
    CHECK_UNARY(inst.truth.positive_count() <= 3);
    positives += inst.truth.positive_count();
  }
  CHECK(world.expected_positives == doctest::Approx(positives / 200.0));
}

TEST_CASE("simulation is deterministic in the seed") {
  const SyntheticWorld a = simulate_world(small_world(9));
  const SyntheticWorld b = simulate_world(small_world(9));
  const SyntheticWorld c = simulate_world(small_world(10));
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    same = same && a.instances[i].evidence == b.instances[i].evidence &&
           a.instances[i].features == b.instances[i].features &&
           a.instances[i].annotation == b.instances[i].annotation;
    differs = differs || !(a.instances[i].evidence == c.instances[i].evidence);
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.readout == b.readout);
}

TEST_CASE("positive count mean converges to the configured distribution") {
  WorldConfig cfg = small_world(21);
  cfg.instance_count = 10000;
  cfg.map_size = 4;
  cfg.objects.weights = {0.2, 0.5, 0.3};
  const SyntheticWorld world = simulate_world(cfg);
  std::vector<GroundTruthVector> truths;
  for (const auto& inst : world.instances) truths.push_back(inst.truth);
  const double se = std::sqrt(cfg.objects.variance() / cfg.instance_count);
  CHECK(std::abs(validation_positive_mean(truths) - cfg.objects.mean()) < 3.0 * se);

  // The annotated positive is uniform among an image's positives.
  std::size_t picked_first = 0, with_two = 0;
  for (const auto& inst : world.instances) {
    if (inst.truth.positive_count() != 2) continue;
    ++with_two;
    ClassIndex first = 0;
    while (!inst.truth[first]) ++first;
    picked_first += inst.annotation.positive() == first;
  }
  const double half_se = std::sqrt(0.25 / with_two);
  CHECK(std::abs(static_cast<double>(picked_first) / with_two - 0.5) < 3.0 * half_se);
}

TEST_CASE("world configuration errors") {
  WorldConfig cfg = small_world(1);
  cfg.class_count = 1;
  cfg.objects.max_objects = 1;
  CHECK_THROWS_AS(simulate_world(cfg), ConfigError);
  cfg = small_world(1);
  cfg.objects.min_objects = 0;
  CHECK_THROWS_AS(simulate_world(cfg), ConfigError);
  cfg = small_world(1);
  cfg.objects.max_objects = 9;
  CHECK_THROWS_AS(simulate_world(cfg), ConfigError);
  cfg = small_world(1);
  cfg.object_size_min = 0.0;
  CHECK_THROWS_AS(simulate_world(cfg), ConfigError);
  cfg = small_world(1);
  cfg.feature_noise = -1.0;
  CHECK_THROWS_AS(simulate_world(cfg), ConfigError);

  const SyntheticWorld world = simulate_world(small_world(2));
  const std::vector<std::size_t> idx = {3, 0};
  const Matrix f = gather_features(world, idx);
  CHECK(f.rows() == 2);
  CHECK(f(0, 1) == world.instances[3].features[1]);
  CHECK(f(1, 0) == world.instances[0].features[0]);
}
