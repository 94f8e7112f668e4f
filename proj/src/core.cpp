#include "spml/core.hpp"

#include <algorithm>
#include <cmath>

namespace spml {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DomainError("Matrix: value count does not match shape");
  }
}

AnnotationVector::AnnotationVector(std::size_t class_count, ClassIndex positive)
    : class_count_(class_count), positive_(positive) {
  if (class_count == 0 || positive >= class_count) {
    throw DomainError("AnnotationVector: positive class out of range");
  }
}

AnnotationVector AnnotationVector::from_entries(std::span<const std::uint8_t> entries) {
  std::size_t ones = 0;
  ClassIndex positive = 0;
  for (std::size_t c = 0; c < entries.size(); ++c) {
    if (entries[c] > 1) throw DomainError("AnnotationVector: entries must be 0 or 1");
    if (entries[c] == 1) {
      ++ones;
      positive = c;
    }
  }
  if (ones != 1) {
    throw DomainError("AnnotationVector: expected exactly one positive entry, found " +
                      std::to_string(ones));
  }
  return AnnotationVector(entries.size(), positive);
}

GroundTruthVector::GroundTruthVector(std::vector<std::uint8_t> entries)
    : entries_(std::move(entries)) {
  for (auto e : entries_) {
    if (e > 1) throw DomainError("GroundTruthVector: entries must be 0 or 1");
  }
}

std::size_t GroundTruthVector::positive_count() const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), 1));
}

bool GroundTruthVector::consistent_with(const AnnotationVector& annotation) const {
  return annotation.size() == size() && (*this)[annotation.positive()];
}

PseudoLabel pseudo_label_from_int(int value) {
  switch (value) {
    case -1: return PseudoLabel::kNegative;
    case 0: return PseudoLabel::kUndefined;
    case 1: return PseudoLabel::kPositive;
    default: throw DomainError("pseudo-label must be -1, 0 or +1, got " + std::to_string(value));
  }
}

std::size_t PseudoLabelVector::count(PseudoLabel value) const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), value));
}

double sigmoid(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

double clamp_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("clamp_probability: input outside [0, 1]");
  }
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

PredictionBatch PredictionBatch::from_logits(Matrix logits) {
  Matrix probabilities(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double s = logits.values()[i];
    if (!std::isfinite(s)) throw DomainError("PredictionBatch: non-finite logit");
    probabilities.values()[i] = clamp_probability(sigmoid(s));
  }
  return PredictionBatch(std::move(logits), std::move(probabilities));
}

PredictionBatch PredictionBatch::from_probabilities(const Matrix& probabilities) {
  Matrix clamped(probabilities.rows(), probabilities.cols());
  Matrix logits(probabilities.rows(), probabilities.cols());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = clamp_probability(probabilities.values()[i]);
    clamped.values()[i] = p;
    logits.values()[i] = std::log(p) - std::log1p(-p);
  }
  return PredictionBatch(std::move(logits), std::move(clamped));
}

void GprConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("GprConfig: ") + what);
  };
  require(q1 > 0.0 && q1 <= 1.0, "q1 must be in (0, 1]");
  require(q2 > 0.0 && q2 <= 1.0, "q2 must be in (0, 1]");
  require(q3 >= 0.0 && q3 <= 1.0, "q3 must be in [0, 1]");
  require(lambda1 >= 0.0 && lambda1 <= 1.0, "lambda1 must be in [0, 1]");
  require(lambda2 >= 0.0 && lambda2 <= 1.0, "lambda2 must be in [0, 1]");
  require(lambda1 <= lambda2, "lambda1 must not exceed lambda2");
  require(eta >= 0.0, "eta must be nonnegative");
  require(beta > 0.0, "beta must be positive");
  require(sigma_start > 0.0 && sigma_end > 0.0, "sigma endpoints must be positive");
  require(std::isfinite(mu_start) && std::isfinite(mu_end), "mu endpoints must be finite");
  require(std::isfinite(m), "m must be finite");
  require(epsilon_confidence > 0.0 && epsilon_confidence <= 1.0,
          "epsilon_confidence must be in (0, 1]");
}

void DampConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("DampConfig: ") + what);
  };
  require(grid_size >= 1, "grid_size must be at least 1");
  require(overlap_ratio_max >= 0.0 && overlap_ratio_max < 0.5,
          "overlap_ratio_max must be in [0, 0.5)");
  require(nu > 0.0 && nu < 1.0, "nu must be in (0, 1)");
  require(zeta_global > 0.0 && zeta_global < 1.0, "zeta_global must be in (0, 1)");
  require(top_k >= 1, "top_k must be at least 1");
  require(delta_neg_pct >= 0.0 && delta_neg_pct < 100.0, "delta_neg_pct must be in [0, 100)");
  require(tau > 0.0, "tau must be positive");
}

std::size_t DampConfig::negative_count(std::size_t class_count) const {
  return static_cast<std::size_t>(
      std::floor(delta_neg_pct * static_cast<double>(class_count) / 100.0));
}

void ViewSpec::validate() const {
  if (!(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0)) {
    throw DomainError("ViewSpec: rectangle must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1");
  }
}

bool ViewSpec::contains(const ViewSpec& other) const {
  return x0 <= other.x0 && y0 <= other.y0 && x1 >= other.x1 && y1 >= other.y1;
}

}  // namespace spml
