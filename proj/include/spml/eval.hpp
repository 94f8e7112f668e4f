#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "spml/core.hpp"

namespace spml {

// Raised when a metric has no defined value (e.g. AP without positives).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-interpolated AP: mean over positives of precision at that positive's
// rank. Ranks sort by score descending, then original index ascending.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MapResult {
  double value = 0.0;
  std::size_t classes_evaluated = 0;
  std::size_t classes_skipped = 0;
};

// Unweighted mean of per-class AP over classes with at least one positive.
MapResult mean_average_precision_detail(const PredictionBatch& preds,
                                        std::span<const GroundTruthVector> truths);
double mean_average_precision(const PredictionBatch& preds,
                              std::span<const GroundTruthVector> truths);

// Which predictions count toward precision in the missing-label universe.
enum class PrecisionReading {
  // A +1 on a true-negative class is a false positive.
  kCountTrueNegatives,
  // Predictions on true-negative classes are dropped entirely.
  kIgnoreTrueNegatives,
};

struct PrecisionRecallCounts {
  std::size_t true_positives = 0;
  std::size_t predicted = 0;        // precision denominator
  std::size_t missing_positives = 0;  // recall denominator
};

// Counts over classes with ŷ = 0 for one image. `predicted_positive[c]` marks
// a +1 prediction.
PrecisionRecallCounts count_missing_label_terms(std::span<const std::uint8_t> predicted_positive,
                                                const GroundTruthVector& truth,
                                                const AnnotationVector& annotation,
                                                PrecisionReading reading);

struct EpochQuality {
  std::optional<double> precision;  // empty when nothing was predicted
  std::optional<double> recall;     // empty when nothing is missing
  PrecisionRecallCounts counts;
};

struct PseudoQualityReport {
  std::vector<EpochQuality> per_epoch;
  // Unweighted means over epochs with a defined value.
  std::optional<double> average_precision;
  std::optional<double> average_recall;
  // On the union of +1 predictions over all epochs.
  std::optional<double> accumulated_precision;
  std::optional<double> accumulated_recall;
  // Per image, the classes predicted +1 in at least one epoch.
  std::vector<std::vector<ClassIndex>> accumulated_positives;
  std::size_t epochs_without_precision = 0;
  std::size_t epochs_without_recall = 0;
};

// epoch_labels[e][n]: pseudo-labels of image n at epoch e. Counts are pooled
// over images within an epoch.
PseudoQualityReport pseudo_quality(
    std::span<const std::vector<PseudoLabelVector>> epoch_labels,
    std::span<const GroundTruthVector> truths, std::span<const AnnotationVector> annotations,
    PrecisionReading reading = PrecisionReading::kCountTrueNegatives);

// Incremental form used by the trainer to report running averages.
class PseudoQualityTracker {
 public:
  PseudoQualityTracker(std::span<const GroundTruthVector> truths,
                       std::span<const AnnotationVector> annotations,
                       PrecisionReading reading = PrecisionReading::kCountTrueNegatives);

  void add_epoch(std::span<const PseudoLabelVector> labels);
  PseudoQualityReport report() const;

 private:
  std::span<const GroundTruthVector> truths_;
  std::span<const AnnotationVector> annotations_;
  PrecisionReading reading_;
  std::vector<std::vector<std::uint8_t>> accumulated_;
  std::vector<EpochQuality> epochs_;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 uniform edges on [0, 1]
  std::vector<std::size_t> positive_counts;
  std::vector<std::size_t> negative_counts;

  std::size_t bins() const { return positive_counts.size(); }
};

// Bin b covers (edges[b], edges[b+1]]; bin 0 also takes p = 0.
std::size_t histogram_bin(double p, std::size_t bins);

Histogram probability_histogram(const PredictionBatch& preds,
                                std::span<const GroundTruthVector> truths, std::size_t bins = 50);

// Fraction of true-positive (n, i) pairs with p > threshold.
double positive_mass_above(const PredictionBatch& preds, std::span<const GroundTruthVector> truths,
                           double threshold = 0.5);

// m': mean count of positives per validation instance.
double validation_positive_mean(std::span<const GroundTruthVector> truths);

void write_histogram_csv(std::ostream& out, const Histogram& histogram);

}  // namespace spml
