#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "spml/score_map.hpp"
#include "spml/scorers.hpp"

using namespace spml;

namespace {

SpatialScoreMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  SpatialScoreMap map(h, w, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        map.at(y, x, k) = rng.uniform() < 0.4 ? static_cast<float>(rng.uniform(0.1, 2.0)) : 0.0f;
      }
    }
  }
  return map;
}

// Brute-force pooling: supersample every pixel on a fine lattice.
std::vector<double> supersampled_pool(const SpatialScoreMap& map, const ViewSpec& v, int sub) {
  std::vector<double> out(map.class_count(), 0.0);
  const double cell = 1.0 / sub;
  for (std::size_t y = 0; y < map.height(); ++y) {
    for (std::size_t x = 0; x < map.width(); ++x) {
      int inside = 0;
      for (int sy = 0; sy < sub; ++sy) {
        for (int sx = 0; sx < sub; ++sx) {
          const double px = (x + (sx + 0.5) * cell) / map.width();
          const double py = (y + (sy + 0.5) * cell) / map.height();
          if (px >= v.x0 && px < v.x1 && py >= v.y0 && py < v.y1) ++inside;
        }
      }
      const double frac = static_cast<double>(inside) / (sub * sub);
      for (std::size_t k = 0; k < map.class_count(); ++k) out[k] += frac * map.at(y, x, k);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("score distributions validate their entries") {
  CHECK_NOTHROW(ScoreDistribution({0.25, 0.75}));
  CHECK_THROWS_AS(ScoreDistribution({0.5, 0.6}), DomainError);
  CHECK_THROWS_AS(ScoreDistribution({-0.1, 1.1}), DomainError);
  CHECK_THROWS_AS(ScoreDistribution(std::vector<double>{}), DomainError);
}

TEST_CASE("cosine scores") {
  const Matrix text(3, 2, std::vector<double>{1, 0, 0, 1, -1, 0});
  const std::vector<double> h = {2.0, 0.0};
  const auto s = cosine_scores(h, text);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(s[2] == doctest::Approx(-1.0));
  const std::vector<double> zero = {0.0, 0.0};
  CHECK_THROWS_AS(cosine_scores(zero, text), DomainError);
  const Matrix bad(1, 2, std::vector<double>{0, 0});
  CHECK_THROWS_AS(cosine_scores(h, bad), DomainError);
}

TEST_CASE("temperature softmax") {
  const std::vector<double> equal(5, 0.3);
  const ScoreDistribution uniform = temperature_softmax(equal, 1.0);
  for (double v : uniform.entries()) CHECK(v == doctest::Approx(0.2));
  const std::vector<double> two = {1.0, 0.0};
  auto a = temperature_softmax(two, 1.0);
  CHECK(a[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(a[1] == doctest::Approx(0.268941).epsilon(1e-6));
  auto b = temperature_softmax(two, 0.5);
  CHECK(b[0] == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(b[1] == doctest::Approx(0.119203).epsilon(1e-6));
  CHECK_THROWS_AS(temperature_softmax(two, 0.0), ConfigError);
  CHECK_THROWS_AS(temperature_softmax(two, -1.0), ConfigError);

  const std::vector<double> huge = {1000.0, 999.0};
  CHECK(temperature_softmax(huge, 1.0)[0] == doctest::Approx(0.731059).epsilon(1e-6));

  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> s(1 + rng.below(20));
    for (double& v : s) v = rng.uniform(-5.0, 5.0);
    const double tau = rng.uniform(0.05, 3.0);
    const double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted = s;
    for (double& v : shifted) v += shift;
    const auto p = temperature_softmax(s, tau);
    const auto q = temperature_softmax(shifted, tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("adjacency from text embeddings") {
  const Matrix ortho(3, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Matrix a = build_adjacency(ortho);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
  }
  const Matrix same(2, 2, std::vector<double>{0.3, 0.4, 0.3, 0.4});
  const Matrix b = build_adjacency(same);
  for (double v : b.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    Matrix text(4, 5);
    for (double& v : text.values()) v = rng.normal();
    const Matrix r = build_adjacency(text);
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK_UNARY(r(i, j) >= 0.0);
        sum += r(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(build_adjacency(Matrix(2, 2, std::vector<double>{1, 0, 0, 0})), DomainError);
}

TEST_CASE("GCN label-to-label noise") {
  Matrix text(2, 2, std::vector<double>{0.5, 1.0, 2.0, 0.25});
  GcnNoiseModule identity;
  identity.adjacency = Matrix(2, 2, std::vector<double>{1, 0, 0, 1});
  identity.layer_weights = {Matrix(2, 2, std::vector<double>{1, 0, 0, 1})};
  const Matrix doubled = gcn_noise(text, identity);
  for (std::size_t i = 0; i < text.size(); ++i) CHECK(doubled.values()[i] == 2.0 * text.values()[i]);

  GcnNoiseModule zero = identity;
  zero.layer_weights = {Matrix(2, 2), Matrix(2, 2)};
  CHECK(gcn_noise(text, zero) == text);

  // Hand-evaluated single layer with a negative intermediate entry.
  GcnNoiseModule hand;
  hand.adjacency = Matrix(2, 2, std::vector<double>{0.75, 0.25, 0.5, 0.5});
  hand.layer_weights = {Matrix(2, 2, std::vector<double>{1.0, -2.0, 0.5, 1.0})};
  hand.leaky_slope = 0.01;
  // A·H = [[0.875, 0.8125], [1.25, 0.625]]
  // (A·H)·W = [[1.28125, -0.9375], [1.5625, -1.875]]
  // LeakyReLU -> [[1.28125, -0.009375], [1.5625, -0.01875]], then + text.
  const Matrix out = gcn_noise(text, hand);
  CHECK(out(0, 0) == doctest::Approx(1.78125).epsilon(1e-14));
  CHECK(out(0, 1) == doctest::Approx(0.990625).epsilon(1e-14));
  CHECK(out(1, 0) == doctest::Approx(3.5625).epsilon(1e-14));
  CHECK(out(1, 1) == doctest::Approx(0.23125).epsilon(1e-14));

  GcnNoiseModule bad = identity;
  bad.layer_weights = {Matrix(3, 3)};
  CHECK_THROWS_AS(gcn_noise(text, bad), DomainError);

  const GcnNoiseModule init = GcnNoiseModule::initialize(text, 2, 5);
  CHECK(init.layer_weights.size() == 2);
  for (const Matrix& w : init.layer_weights) {
    for (double v : w.values()) CHECK_UNARY(std::abs(v) <= 1.0 / std::sqrt(2.0));
  }
  // Frozen weights: initialization is a pure function of the seed.
  CHECK(GcnNoiseModule::initialize(text, 2, 5).layer_weights == init.layer_weights);
}

TEST_CASE("view pooling weights border pixels by coverage") {
  Rng rng(12);
  for (int t = 0; t < 60; ++t) {
    const SpatialScoreMap map = random_map(rng, 1 + rng.below(6), 1 + rng.below(6), 3);
    // Views on a 1/32 lattice so the supersampled oracle is exact.
    auto lattice = [&] { return static_cast<double>(rng.below(33)) / 32.0; };
    double a = lattice(), b = lattice(), c = lattice(), d = lattice();
    if (a == b || c == d) continue;
    const ViewSpec v{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d), 0};
    const auto pooled = pool_view_evidence(map, v);
    const auto oracle = supersampled_pool(map, v, 32 * 6);
    for (std::size_t k = 0; k < 3; ++k) CHECK(pooled[k] == doctest::Approx(oracle[k]).epsilon(1e-9));
  }
  SpatialScoreMap map(2, 2, 1);
  CHECK_THROWS_AS(pool_view_evidence(map, ViewSpec{0.5, 0.0, 0.5, 1.0, 0}), DomainError);
}

TEST_CASE("oracle view scores") {
  SpatialScoreMap map(4, 4, 3);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) map.at(y, x, 1) = 1.0f;
  }
  map.at(3, 3, 2) = 0.5f;
  const OracleOptions clean{1.0, 0.0, 0.0};
  const auto top_left = oracle_score_view(map, ViewSpec{0.0, 0.0, 0.5, 0.5, 0}, clean, 1);
  CHECK(top_left[1] == doctest::Approx(1.0));

  const SpatialScoreMap empty(4, 4, 5);
  const ScoreDistribution flat = oracle_score_view(empty, ViewSpec{}, clean, 1);
  for (double v : flat.entries()) CHECK(v == 0.2);

  // Full view, no noise: softmax of log per-class totals.
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    SpatialScoreMap m = random_map(rng, 5, 4, 4);
    for (std::size_t k = 0; k < 4; ++k) m.at(0, 0, k) += 0.01f;
    const double tau = rng.uniform(0.3, 2.0);
    const auto s = oracle_score_view(m, ViewSpec{}, OracleOptions{tau, 0.0, 0.0}, 3);
    std::vector<double> logs(4, 0.0);
    for (std::size_t k = 0; k < 4; ++k) {
      double total = 0.0;
      for (std::size_t y = 0; y < 5; ++y) {
        for (std::size_t x = 0; x < 4; ++x) total += m.at(y, x, k);
      }
      logs[k] = std::log(total);
    }
    const auto expected = temperature_softmax(logs, tau);
    for (std::size_t k = 0; k < 4; ++k) CHECK(s[k] == doctest::Approx(expected[k]).epsilon(1e-9));
  }

  // Monotone in a class's own evidence when noise is off.
  for (int t = 0; t < 100; ++t) {
    SpatialScoreMap m = random_map(rng, 4, 4, 3);
    const ViewSpec v{0.1, 0.2, 0.9, 0.8, 0};
    const OracleOptions opt{rng.uniform(0.2, 2.0), 0.0, rng.uniform() < 0.5 ? 0.0 : 0.05};
    const std::size_t cls = rng.below(3);
    const double before = oracle_score_view(m, v, opt, 0)[cls];
    m.at(1 + rng.below(2), 1 + rng.below(2), cls) += static_cast<float>(rng.uniform(0.1, 3.0));
    CHECK_UNARY(oracle_score_view(m, v, opt, 0)[cls] >= before);
  }

  // Jitter is a pure function of the seed.
  const OracleOptions noisy{1.0, 0.7, 0.05};
  const auto x = oracle_score_view(map, ViewSpec{}, noisy, 77);
  CHECK(oracle_score_view(map, ViewSpec{}, noisy, 77) == x);
  CHECK_FALSE(oracle_score_view(map, ViewSpec{}, noisy, 78) == x);
}

TEST_CASE("scorer outputs are valid distributions") {
  Rng rng(31);
  std::vector<SpatialScoreMap> maps;
  for (int i = 0; i < 5; ++i) maps.push_back(random_map(rng, 6, 6, 4));
  const auto oracle = SpatialMapScorer::from_maps(maps, OracleOptions{0.8, 0.5, 0.02});
  CHECK(oracle->class_count() == 4);

  Matrix prototypes(4, 6);
  for (double& v : prototypes.values()) v = rng.normal();
  auto lookup = [&maps](ImageId id) -> const SpatialScoreMap& { return maps.at(id); };
  const GcnNoiseModule gcn = GcnNoiseModule::initialize(prototypes, 1, 3);
  const EmbeddingScorer embed(gcn_noise(prototypes, gcn),
                              make_prototype_embedder(lookup, prototypes, 0.2), 0.1);
  CHECK(embed.class_count() == 4);

  for (int t = 0; t < 200; ++t) {
    const double x0 = rng.uniform(0.0, 0.8), y0 = rng.uniform(0.0, 0.8);
    const ViewSpec v{x0, y0, x0 + rng.uniform(0.05, 0.2), y0 + rng.uniform(0.05, 0.2),
                     rng.next_u64()};
    for (const ViewScorer* s : {static_cast<const ViewScorer*>(oracle.get()),
                                static_cast<const ViewScorer*>(&embed)}) {
      const ScoreDistribution d = s->score_view(rng.below(5), v);
      double sum = 0.0;
      for (double e : d.entries()) {
        CHECK_UNARY(e >= 0.0);
        sum += e;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
  CHECK_THROWS_AS(oracle->score_view(9, ViewSpec{}), DomainError);
}
