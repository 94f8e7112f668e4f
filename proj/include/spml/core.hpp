#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spml {

using ClassIndex = std::size_t;
using ImageId = std::uint64_t;

inline constexpr double kProbabilityEpsilon = 1e-7;

// Input violates a documented precondition (shapes, ranges).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A hyperparameter or experiment setting is outside its valid range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk artifact. `offset` is the byte position of the fault.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Single-positive annotation ŷ: exactly one class is marked relevant.
class AnnotationVector {
 public:
  AnnotationVector(std::size_t class_count, ClassIndex positive);

  // Validates that exactly one entry is set.
  static AnnotationVector from_entries(std::span<const std::uint8_t> entries);

  std::size_t size() const { return class_count_; }
  ClassIndex positive() const { return positive_; }
  bool operator[](ClassIndex c) const { return c == positive_; }
  bool operator==(const AnnotationVector&) const = default;

 private:
  std::size_t class_count_;
  ClassIndex positive_;
};

// Full multi-label truth y. Never consumed by training code paths.
class GroundTruthVector {
 public:
  GroundTruthVector() = default;
  explicit GroundTruthVector(std::vector<std::uint8_t> entries);

  std::size_t size() const { return entries_.size(); }
  bool operator[](ClassIndex c) const { return entries_[c] != 0; }
  std::size_t positive_count() const;
  bool consistent_with(const AnnotationVector& annotation) const;
  const std::vector<std::uint8_t>& entries() const { return entries_; }
  bool operator==(const GroundTruthVector&) const = default;

 private:
  std::vector<std::uint8_t> entries_;
};

enum class PseudoLabel : std::int8_t { kNegative = -1, kUndefined = 0, kPositive = 1 };

PseudoLabel pseudo_label_from_int(int value);

class PseudoLabelVector {
 public:
  PseudoLabelVector() = default;
  explicit PseudoLabelVector(std::size_t class_count)
      : entries_(class_count, PseudoLabel::kUndefined) {}
  explicit PseudoLabelVector(std::vector<PseudoLabel> entries) : entries_(std::move(entries)) {}

  std::size_t size() const { return entries_.size(); }
  PseudoLabel& operator[](ClassIndex c) { return entries_[c]; }
  PseudoLabel operator[](ClassIndex c) const { return entries_[c]; }

  std::size_t count(PseudoLabel value) const;
  bool all_undefined() const { return count(PseudoLabel::kUndefined) == size(); }
  const std::vector<PseudoLabel>& entries() const { return entries_; }
  bool operator==(const PseudoLabelVector&) const = default;

 private:
  std::vector<PseudoLabel> entries_;
};

double sigmoid(double logit);

// Clamps into [kProbabilityEpsilon, 1 - kProbabilityEpsilon]; throws DomainError
// outside [0, 1].
double clamp_probability(double p);

// Classifier output: logits s and probabilities p = clamp(sigmoid(s)).
class PredictionBatch {
 public:
  static PredictionBatch from_logits(Matrix logits);
  // Logits are recovered as log(p / (1 - p)) of the clamped probabilities.
  static PredictionBatch from_probabilities(const Matrix& probabilities);

  std::size_t batch_size() const { return logits_.rows(); }
  std::size_t class_count() const { return logits_.cols(); }
  const Matrix& logits() const { return logits_; }
  const Matrix& probabilities() const { return probabilities_; }

 private:
  PredictionBatch(Matrix logits, Matrix probabilities)
      : logits_(std::move(logits)), probabilities_(std::move(probabilities)) {}

  Matrix logits_;
  Matrix probabilities_;
};

struct GprConfig {
  double q1 = 0.5;
  double q2 = 0.5;
  double q3 = 0.8;
  double lambda1 = 0.2;
  double lambda2 = 0.8;
  double eta = 0.1;
  double beta = 2.0;
  double mu_start = 0.10;
  double mu_end = 0.30;
  double sigma_start = 0.20;
  double sigma_end = 0.10;
  // Expected positives per image. Non-positive means "estimate from data".
  double m = 0.0;
  double epsilon_confidence = 0.05;

  void validate() const;
};

struct DampConfig {
  std::size_t grid_size = 4;
  double overlap_ratio_max = 0.2;
  double nu = 0.5;
  double zeta_global = 0.3;
  std::size_t top_k = 3;
  double delta_neg_pct = 20.0;
  double tau = 1.0;

  void validate() const;
  std::size_t patch_count() const { return grid_size * grid_size; }
  // floor(delta_neg_pct * C / 100).
  std::size_t negative_count(std::size_t class_count) const;
};

// Normalized view rectangle inside [0, 1]^2.
struct ViewSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;
  std::uint64_t augmentation_seed = 0;

  void validate() const;
  bool contains(const ViewSpec& other) const;
  bool operator==(const ViewSpec&) const = default;
};

}  // namespace spml
