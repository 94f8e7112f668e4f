#pragma once

#include <cmath>
#include <vector>

#include "spml/core.hpp"
#include "spml/scorers.hpp"
#include "spml/seed.hpp"

namespace testing {

inline bool close_rel(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

// Random distribution over `c` classes; `quantum` > 0 snaps entries to a grid
// before normalizing so ties are common.
inline spml::ScoreDistribution random_distribution(spml::Rng& rng, std::size_t c,
                                                   double quantum = 0.0) {
  std::vector<double> v(c);
  double total = 0.0;
  for (double& x : v) {
    x = rng.uniform() + 1e-3;
    if (quantum > 0.0) x = std::ceil(x / quantum) * quantum;
    total += x;
  }
  for (double& x : v) x /= total;
  return spml::ScoreDistribution(v);
}

inline spml::Matrix random_logits(spml::Rng& rng, std::size_t n, std::size_t c, double scale) {
  spml::Matrix m(n, c);
  for (double& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace testing
