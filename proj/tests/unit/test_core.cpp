#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "spml/core.hpp"
#include "spml/numeric.hpp"
#include "spml/seed.hpp"

using namespace spml;

TEST_CASE("annotation vectors hold exactly one positive") {
  const AnnotationVector a(5, 3);
  CHECK(a.size() == 5);
  CHECK(a.positive() == 3);
  CHECK(a[3]);
  CHECK_FALSE(a[0]);
  CHECK_THROWS_AS(AnnotationVector(5, 5), DomainError);
  CHECK_THROWS_AS(AnnotationVector(0, 0), DomainError);

  const std::vector<std::uint8_t> one = {0, 0, 1, 0};
  CHECK(AnnotationVector::from_entries(one).positive() == 2);
  const std::vector<std::uint8_t> two = {1, 0, 1, 0};
  const std::vector<std::uint8_t> none = {0, 0, 0, 0};
  CHECK_THROWS_AS(AnnotationVector::from_entries(two), DomainError);
  CHECK_THROWS_AS(AnnotationVector::from_entries(none), DomainError);
}

TEST_CASE("ground truth must cover the annotated positive") {
  const GroundTruthVector y(std::vector<std::uint8_t>{1, 0, 1});
  CHECK(y.positive_count() == 2);
  CHECK(y.consistent_with(AnnotationVector(3, 0)));
  CHECK(y.consistent_with(AnnotationVector(3, 2)));
  CHECK_FALSE(y.consistent_with(AnnotationVector(3, 1)));
}

TEST_CASE("pseudo-label entries are ternary") {
  CHECK(pseudo_label_from_int(-1) == PseudoLabel::kNegative);
  CHECK(pseudo_label_from_int(0) == PseudoLabel::kUndefined);
  CHECK(pseudo_label_from_int(1) == PseudoLabel::kPositive);
  CHECK_THROWS_AS(pseudo_label_from_int(2), DomainError);
  CHECK_THROWS_AS(pseudo_label_from_int(-2), DomainError);

  PseudoLabelVector l(4);
  CHECK(l.all_undefined());
  l[1] = PseudoLabel::kPositive;
  l[2] = PseudoLabel::kNegative;
  CHECK(l.count(PseudoLabel::kPositive) == 1);
  CHECK(l.count(PseudoLabel::kNegative) == 1);
  CHECK_FALSE(l.all_undefined());
}

TEST_CASE("clamp_probability") {
  CHECK(clamp_probability(0.0) == 1e-7);
  CHECK(clamp_probability(0.5) == 0.5);
  CHECK(clamp_probability(1.0) == 1.0 - 1e-7);
  CHECK_THROWS_AS(clamp_probability(-0.1), DomainError);
  CHECK_THROWS_AS(clamp_probability(1.1), DomainError);
  CHECK_THROWS_AS(clamp_probability(std::nan("")), DomainError);
}

TEST_CASE("prediction batches keep p equal to the clamped sigmoid of the logits") {
  Rng rng(11);
  Matrix logits(7, 5);
  for (double& v : logits.values()) v = rng.uniform(-40.0, 40.0);
  const auto batch = PredictionBatch::from_logits(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double s = logits.values()[i];
    const double expected = std::min(std::max(1.0 / (1.0 + std::exp(-s)), 1e-7), 1.0 - 1e-7);
    CHECK(batch.probabilities().values()[i] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(batch.probabilities().values()[i] >= 1e-7);
    CHECK(batch.probabilities().values()[i] <= 1.0 - 1e-7);
  }
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);

  const auto from_p = PredictionBatch::from_probabilities(Matrix(1, 2, std::vector<double>{0.25, 0.0}));
  CHECK(from_p.logits()(0, 0) == doctest::Approx(std::log(0.25 / 0.75)));
  CHECK(from_p.probabilities()(0, 1) == 1e-7);
}

TEST_CASE("GPR configuration validation") {
  GprConfig g;
  CHECK_NOTHROW(g.validate());
  g.lambda1 = 0.9;
  g.lambda2 = 0.1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GprConfig{};
  g.sigma_end = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GprConfig{};
  g.q1 = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GprConfig{};
  g.q2 = 1.5;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GprConfig{};
  g.eta = -1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GprConfig{};
  g.epsilon_confidence = 0.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("DAMP configuration validation and negative count") {
  DampConfig d;
  CHECK_NOTHROW(d.validate());
  CHECK(d.patch_count() == 16);
  d.grid_size = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = DampConfig{};
  d.overlap_ratio_max = 0.5;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = DampConfig{};
  d.delta_neg_pct = 100.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = DampConfig{};
  d.top_k = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);

  d = DampConfig{};
  d.delta_neg_pct = 20.0;
  CHECK(d.negative_count(10) == 2);
  CHECK(d.negative_count(20) == 4);
  CHECK(d.negative_count(4) == 0);
  d.delta_neg_pct = 0.0;
  CHECK(d.negative_count(80) == 0);
  // Brute-force floor over integer percentages.
  for (int pct = 0; pct < 100; ++pct) {
    for (std::size_t c = 1; c <= 60; ++c) {
      d.delta_neg_pct = pct;
      CHECK(d.negative_count(c) == static_cast<std::size_t>(pct) * c / 100);
    }
  }
}

TEST_CASE("view rectangles") {
  ViewSpec v{0.1, 0.2, 0.5, 0.9, 0};
  CHECK_NOTHROW(v.validate());
  CHECK(v.contains(ViewSpec{0.2, 0.3, 0.4, 0.8, 0}));
  CHECK_FALSE(v.contains(ViewSpec{0.0, 0.3, 0.4, 0.8, 0}));
  CHECK_THROWS_AS((ViewSpec{0.5, 0.0, 0.5, 1.0, 0}.validate()), DomainError);
  CHECK_THROWS_AS((ViewSpec{-0.1, 0.0, 0.5, 1.0, 0}.validate()), DomainError);
  CHECK_THROWS_AS((ViewSpec{0.0, 0.0, 0.5, 1.1, 0}.validate()), DomainError);
}

TEST_CASE("derive_seed is pure and collision free on a large tuple set") {
  const std::uint64_t v0 = derive_seed({0, 0, 0, 0});
  CHECK(derive_seed({0, 0, 0, 0}) == v0);
  CHECK(derive_seed({0, 0, 0, 1}) != v0);

  // splitmix64 reference values for the first outputs from state 0, computed
  // with the published algorithm (state += golden gamma, then mix).
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFull);

  std::unordered_set<std::uint64_t> seen;
  seen.reserve(1'100'000);
  std::size_t collisions = 0;
  for (std::uint64_t e = 0; e < 10; ++e) {
    for (std::uint64_t i = 0; i < 1000; ++i) {
      for (std::uint64_t z = 0; z < 100; ++z) {
        if (!seen.insert(derive_seed({7, e, i, z})).second) ++collisions;
      }
    }
  }
  CHECK(seen.size() == 1'000'000);
  CHECK(collisions == 0);
  // Changing only the master seed moves every derived value.
  CHECK(derive_seed({8, 1, 2, 3}) != derive_seed({7, 1, 2, 3}));
  // Fields are not interchangeable.
  CHECK(derive_seed({7, 1, 2, 3}) != derive_seed({7, 2, 1, 3}));
}

TEST_CASE("Rng draws") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // mt19937_64 10000th output for the default seed is fixed by the standard.
  Rng def(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = def.next_u64();
  CHECK(x == 9981545732273789042ull);

  Rng rng(1);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  // Mean within 4 standard errors of 0, variance within 2%.
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sum_sq / n - 1.0) < 0.02);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK_THROWS_AS(rng.below(0), DomainError);
}

TEST_CASE("compensated summation recovers cancelled terms") {
  CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 1.0);
  CompensatedSum t;
  for (int i = 0; i < 10; ++i) t.add(0.1);
  CHECK(t.value() == 1.0);
}

TEST_CASE("parallel_for visits every index once and propagates errors") {
  std::vector<std::atomic<int>> visits(1000);
  parallel_for(visits.size(), [&](std::size_t i) { visits[i].fetch_add(1); });
  for (const auto& v : visits) CHECK(v.load() == 1);
  CHECK_THROWS_AS(parallel_for(50,
                               [](std::size_t i) {
                                 if (i == 17) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  CHECK(worker_count() >= 1);
}
