#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "spml/core.hpp"
#include "spml/score_map.hpp"

namespace spml {

// A probability vector over C classes.
class ScoreDistribution {
 public:
  ScoreDistribution() = default;
  // Throws DomainError unless entries are nonnegative and sum to 1 within 1e-9.
  explicit ScoreDistribution(std::vector<double> entries);

  std::size_t size() const { return entries_.size(); }
  double operator[](ClassIndex c) const { return entries_[c]; }
  const std::vector<double>& entries() const { return entries_; }
  bool operator==(const ScoreDistribution&) const = default;

 private:
  std::vector<double> entries_;
};

// ŝ_i = cos(h, t_i) for each row t_i of `text`.
std::vector<double> cosine_scores(std::span<const double> h, const Matrix& text);

// Softmax(scores / tau) with max subtraction. Entries equal to -inf receive
// zero mass; if every entry is -inf the result is uniform.
ScoreDistribution temperature_softmax(std::span<const double> scores, double tau);

// Row-stochastic label graph: cosine similarity between text rows, negatives
// clamped to 0, unit self-loops, then each row divided by its sum.
Matrix build_adjacency(const Matrix& text);

struct GcnNoiseModule {
  std::vector<Matrix> layer_weights;  // each K×K, frozen
  Matrix adjacency;                   // C×C
  double leaky_slope = 0.01;

  // Builds A* from `text` and draws each W_l uniformly on [-1/√K, 1/√K].
  static GcnNoiseModule initialize(const Matrix& text, std::size_t layer_count,
                                   std::uint64_t seed, double leaky_slope = 0.01);
};

// t = G(text) + text where G stacks H_{l+1} = LeakyReLU(A* H_l W_l).
Matrix gcn_noise(const Matrix& text, const GcnNoiseModule& module);

// Per-class evidence inside a normalized rectangle; border pixels contribute in
// proportion to the covered area.
std::vector<double> pool_view_evidence(const SpatialScoreMap& map, const ViewSpec& view);

struct OracleOptions {
  double tau = 1.0;
  double noise_sigma = 0.0;
  // Background evidence per covered pixel added to every class before the
  // log; 0 leaves absent classes at zero mass.
  double evidence_floor = 0.0;
};

// Synthetic view scorer: pooled evidence, seeded Gaussian jitter on the
// log-evidence, then temperature softmax. Zero evidence gives the uniform
// distribution.
ScoreDistribution oracle_score_view(const SpatialScoreMap& map, const ViewSpec& view,
                                    const OracleOptions& options, std::uint64_t seed);

// Scores one view of one image. Implementations are read-only after
// construction and safe to call concurrently.
class ViewScorer {
 public:
  virtual ~ViewScorer() = default;
  virtual std::size_t class_count() const = 0;
  virtual ScoreDistribution score_view(ImageId image, const ViewSpec& view) const = 0;
};

// Scores views of spatial evidence maps with oracle_score_view, using the
// view's augmentation seed for the jitter.
class SpatialMapScorer : public ViewScorer {
 public:
  using MapLookup = std::function<const SpatialScoreMap&(ImageId)>;

  SpatialMapScorer(std::size_t class_count, MapLookup lookup, OracleOptions options);
  static std::unique_ptr<SpatialMapScorer> from_maps(std::vector<SpatialScoreMap> maps,
                                                      OracleOptions options);
  // File-backed scorer over a directory of SSM1 maps.
  static std::unique_ptr<SpatialMapScorer> from_directory(const std::filesystem::path& dir,
                                                           OracleOptions options);

  std::size_t class_count() const override { return class_count_; }
  ScoreDistribution score_view(ImageId image, const ViewSpec& view) const override;

 private:
  std::size_t class_count_;
  MapLookup lookup_;
  OracleOptions options_;
};

// Zero-shot style scorer: cosine between a view embedding and class text
// embeddings, then temperature softmax.
class EmbeddingScorer : public ViewScorer {
 public:
  using ViewEmbedder = std::function<std::vector<double>(ImageId, const ViewSpec&)>;

  EmbeddingScorer(Matrix text_embeddings, ViewEmbedder embedder, double tau);

  std::size_t class_count() const override { return text_.rows(); }
  ScoreDistribution score_view(ImageId image, const ViewSpec& view) const override;
  const Matrix& text_embeddings() const { return text_; }

 private:
  Matrix text_;
  ViewEmbedder embedder_;
  double tau_;
};

// Synthetic view embedder: h = Σ_c pooled_c · prototype_c plus seeded
// isotropic Gaussian noise of scale `noise_sigma` times ‖h‖.
EmbeddingScorer::ViewEmbedder make_prototype_embedder(SpatialMapScorer::MapLookup lookup,
                                                      Matrix prototypes, double noise_sigma);

}  // namespace spml
