#pragma once

#include <cstdint>
#include <random>

namespace spml {

// Reserved view indices for seed derivation streams that are not a scored view.
inline constexpr std::uint64_t kGridStream = 0xFFFF'FFFFull;
inline constexpr std::uint64_t kShuffleStream = 0xFFFF'FFFEull;
inline constexpr std::uint64_t kRandomLabelStream = 0xFFFF'FFFDull;
inline constexpr std::uint64_t kSplitStream = 0xFFFF'FFFCull;
inline constexpr std::uint64_t kInitStream = 0xFFFF'FFFBull;

struct SeedContext {
  std::uint64_t master_seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t image_id = 0;
  std::uint64_t view_index = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Pure function of all four fields; identical on every platform.
std::uint64_t derive_seed(const SeedContext& ctx);

// mt19937_64 is fully specified by the standard; the distribution helpers
// below are written out so draws are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spml
