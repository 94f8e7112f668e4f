#include "spml/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spml/numeric.hpp"
#include "spml/seed.hpp"

namespace spml {
namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DomainError("matrix product: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// Length of [lo, hi) ∩ [cell, cell + 1).
double overlap(double lo, double hi, double cell) {
  return std::max(0.0, std::min(hi, cell + 1.0) - std::max(lo, cell));
}

}  // namespace

ScoreDistribution::ScoreDistribution(std::vector<double> entries) : entries_(std::move(entries)) {
  double sum = 0.0;
  for (double e : entries_) {
    if (!(e >= 0.0) || !std::isfinite(e)) {
      throw DomainError("ScoreDistribution: entries must be finite and nonnegative");
    }
    sum += e;
  }
  if (entries_.empty() || std::abs(sum - 1.0) > 1e-9) {
    throw DomainError("ScoreDistribution: entries must sum to 1");
  }
}

std::vector<double> cosine_scores(std::span<const double> h, const Matrix& text) {
  if (h.size() != text.cols()) throw DomainError("cosine_scores: embedding dimension mismatch");
  const double h_norm = norm(h);
  if (h_norm == 0.0) throw DomainError("cosine_scores: zero-norm image embedding");
  std::vector<double> scores(text.rows());
  for (std::size_t i = 0; i < text.rows(); ++i) {
    const double t_norm = norm(text.row(i));
    if (t_norm == 0.0) {
      throw DomainError("cosine_scores: zero-norm text embedding at row " + std::to_string(i));
    }
    scores[i] = std::clamp(dot(h, text.row(i)) / (h_norm * t_norm), -1.0, 1.0);
  }
  return scores;
}

ScoreDistribution temperature_softmax(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature_softmax: tau must be positive");
  if (scores.empty()) throw DomainError("temperature_softmax: empty score vector");
  double peak = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
      throw DomainError("temperature_softmax: scores must be finite or -inf");
    }
    peak = std::max(peak, s);
  }
  std::vector<double> out(scores.size());
  if (peak == -std::numeric_limits<double>::infinity()) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(scores.size()));
    return ScoreDistribution(std::move(out));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - peak) / tau);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return ScoreDistribution(std::move(out));
}

Matrix build_adjacency(const Matrix& text) {
  const std::size_t c = text.rows();
  if (c == 0) throw DomainError("build_adjacency: no classes");
  std::vector<double> norms(c);
  for (std::size_t i = 0; i < c; ++i) {
    norms[i] = norm(text.row(i));
    if (norms[i] == 0.0) {
      throw DomainError("build_adjacency: zero-norm text embedding at row " + std::to_string(i));
    }
  }
  Matrix a(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      a(i, j) = i == j ? 1.0
                       : std::max(0.0, dot(text.row(i), text.row(j)) / (norms[i] * norms[j]));
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    auto row = a.row(i);
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= sum;
  }
  return a;
}

GcnNoiseModule GcnNoiseModule::initialize(const Matrix& text, std::size_t layer_count,
                                          std::uint64_t seed, double leaky_slope) {
  if (text.cols() == 0) throw DomainError("GcnNoiseModule: empty embedding dimension");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("GcnNoiseModule: leaky slope must be in (0, 1)");
  }
  GcnNoiseModule module;
  module.adjacency = build_adjacency(text);
  module.leaky_slope = leaky_slope;
  const std::size_t k = text.cols();
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  Rng rng(seed);
  for (std::size_t l = 0; l < layer_count; ++l) {
    Matrix w(k, k);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    module.layer_weights.push_back(std::move(w));
  }
  return module;
}

Matrix gcn_noise(const Matrix& text, const GcnNoiseModule& module) {
  if (module.adjacency.rows() != text.rows() || module.adjacency.cols() != text.rows()) {
    throw DomainError("gcn_noise: adjacency must be C×C");
  }
  Matrix h = text;
  for (const Matrix& w : module.layer_weights) {
    if (w.rows() != text.cols() || w.cols() != text.cols()) {
      throw DomainError("gcn_noise: layer weights must be K×K");
    }
    h = multiply(multiply(module.adjacency, h), w);
    for (double& v : h.values()) v = v >= 0.0 ? v : module.leaky_slope * v;
  }
  for (std::size_t i = 0; i < h.size(); ++i) h.values()[i] += text.values()[i];
  return h;
}

std::vector<double> pool_view_evidence(const SpatialScoreMap& map, const ViewSpec& view) {
  const double x0 = std::clamp(view.x0, 0.0, 1.0) * static_cast<double>(map.width());
  const double x1 = std::clamp(view.x1, 0.0, 1.0) * static_cast<double>(map.width());
  const double y0 = std::clamp(view.y0, 0.0, 1.0) * static_cast<double>(map.height());
  const double y1 = std::clamp(view.y1, 0.0, 1.0) * static_cast<double>(map.height());
  if (!(x1 > x0 && y1 > y0)) throw DomainError("pool_view_evidence: view has zero area");

  const std::size_t c = map.class_count();
  std::vector<double> pooled(c, 0.0);
  const auto col_begin = static_cast<std::size_t>(std::floor(x0));
  const auto col_end = std::min(map.width(), static_cast<std::size_t>(std::ceil(x1)));
  const auto row_begin = static_cast<std::size_t>(std::floor(y0));
  const auto row_end = std::min(map.height(), static_cast<std::size_t>(std::ceil(y1)));
  for (std::size_t y = row_begin; y < row_end; ++y) {
    const double wy = overlap(y0, y1, static_cast<double>(y));
    if (wy == 0.0) continue;
    for (std::size_t x = col_begin; x < col_end; ++x) {
      const double w = wy * overlap(x0, x1, static_cast<double>(x));
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < c; ++k) pooled[k] += w * map.at(y, x, k);
    }
  }
  return pooled;
}

ScoreDistribution oracle_score_view(const SpatialScoreMap& map, const ViewSpec& view,
                                    const OracleOptions& options, std::uint64_t seed) {
  view.validate();
  std::vector<double> pooled = pool_view_evidence(map, view);
  const double covered_pixels = (view.x1 - view.x0) * (view.y1 - view.y0) *
                                static_cast<double>(map.width() * map.height());
  const double floor = options.evidence_floor * covered_pixels;
  const bool empty = std::all_of(pooled.begin(), pooled.end(), [](double e) { return e == 0.0; });
  if (empty && floor == 0.0) {
    return ScoreDistribution(
        std::vector<double>(pooled.size(), 1.0 / static_cast<double>(pooled.size())));
  }
  Rng rng(seed);
  std::vector<double> log_evidence(pooled.size());
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    // One draw per class keeps the noise stream aligned across classes.
    const double jitter = options.noise_sigma > 0.0 ? options.noise_sigma * rng.normal() : 0.0;
    log_evidence[k] = std::log(pooled[k] + floor) + jitter;
  }
  return temperature_softmax(log_evidence, options.tau);
}

SpatialMapScorer::SpatialMapScorer(std::size_t class_count, MapLookup lookup,
                                   OracleOptions options)
    : class_count_(class_count), lookup_(std::move(lookup)), options_(options) {
  if (class_count == 0) throw DomainError("SpatialMapScorer: no classes");
  if (!(options.tau > 0.0)) throw ConfigError("SpatialMapScorer: tau must be positive");
  if (options.noise_sigma < 0.0 || options.evidence_floor < 0.0) {
    throw ConfigError("SpatialMapScorer: noise and floor must be nonnegative");
  }
}

std::unique_ptr<SpatialMapScorer> SpatialMapScorer::from_maps(std::vector<SpatialScoreMap> maps,
                                                               OracleOptions options) {
  if (maps.empty()) throw DomainError("SpatialMapScorer: no score maps");
  const std::size_t c = maps.front().class_count();
  for (const auto& m : maps) {
    if (m.class_count() != c) throw DomainError("SpatialMapScorer: maps disagree on class count");
  }
  auto shared = std::make_shared<const std::vector<SpatialScoreMap>>(std::move(maps));
  auto lookup = [shared](ImageId id) -> const SpatialScoreMap& {
    if (id >= shared->size()) {
      throw DomainError("SpatialMapScorer: no score map for image " + std::to_string(id));
    }
    return (*shared)[id];
  };
  return std::make_unique<SpatialMapScorer>(c, std::move(lookup), options);
}

std::unique_ptr<SpatialMapScorer> SpatialMapScorer::from_directory(
    const std::filesystem::path& dir, OracleOptions options) {
  return from_maps(load_score_map_directory(dir), options);
}

ScoreDistribution SpatialMapScorer::score_view(ImageId image, const ViewSpec& view) const {
  const SpatialScoreMap& map = lookup_(image);
  if (map.class_count() != class_count_) {
    throw DomainError("SpatialMapScorer: score map class count mismatch for image " +
                      std::to_string(image));
  }
  return oracle_score_view(map, view, options_, view.augmentation_seed);
}

EmbeddingScorer::EmbeddingScorer(Matrix text_embeddings, ViewEmbedder embedder, double tau)
    : text_(std::move(text_embeddings)), embedder_(std::move(embedder)), tau_(tau) {
  if (text_.rows() == 0 || text_.cols() == 0) throw DomainError("EmbeddingScorer: empty text");
  if (!(tau > 0.0)) throw ConfigError("EmbeddingScorer: tau must be positive");
  for (std::size_t i = 0; i < text_.rows(); ++i) {
    if (norm(text_.row(i)) == 0.0) throw DomainError("EmbeddingScorer: zero-norm text row");
  }
}

ScoreDistribution EmbeddingScorer::score_view(ImageId image, const ViewSpec& view) const {
  const std::vector<double> h = embedder_(image, view);
  return temperature_softmax(cosine_scores(h, text_), tau_);
}

EmbeddingScorer::ViewEmbedder make_prototype_embedder(SpatialMapScorer::MapLookup lookup,
                                                      Matrix prototypes, double noise_sigma) {
  return [lookup = std::move(lookup), prototypes = std::move(prototypes), noise_sigma](
             ImageId image, const ViewSpec& view) {
    const SpatialScoreMap& map = lookup(image);
    if (map.class_count() != prototypes.rows()) {
      throw DomainError("prototype embedder: prototype count does not match class count");
    }
    const std::vector<double> pooled = pool_view_evidence(map, view);
    const std::size_t k = prototypes.cols();
    std::vector<double> h(k, 0.0);
    for (std::size_t c = 0; c < pooled.size(); ++c) {
      for (std::size_t j = 0; j < k; ++j) h[j] += pooled[c] * prototypes(c, j);
    }
    const double h_norm = norm(h);
    const double scale =
        (h_norm > 0.0 ? noise_sigma * h_norm : 1.0) / std::sqrt(static_cast<double>(k));
    Rng rng(view.augmentation_seed);
    for (double& v : h) v += scale * rng.normal();
    return h;
  };
}

}  // namespace spml
