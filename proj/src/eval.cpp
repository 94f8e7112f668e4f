#include "spml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "spml/log.hpp"
#include "spml/numeric.hpp"

namespace spml {
namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> mean_defined(const std::vector<EpochQuality>& epochs,
                                   std::optional<double> EpochQuality::*field,
                                   std::size_t& skipped) {
  CompensatedSum sum;
  std::size_t n = 0;
  skipped = 0;
  for (const auto& e : epochs) {
    if (const auto& v = e.*field) {
      sum.add(*v);
      ++n;
    } else {
      ++skipped;
    }
  }
  if (n == 0) return std::nullopt;
  return sum.value() / static_cast<double>(n);
}

void check_truths(std::span<const GroundTruthVector> truths,
                  std::span<const AnnotationVector> annotations) {
  if (truths.size() != annotations.size()) {
    throw DomainError("pseudo_quality: truth and annotation counts differ");
  }
  for (std::size_t n = 0; n < truths.size(); ++n) {
    if (!truths[n].consistent_with(annotations[n])) {
      throw DomainError("pseudo_quality: annotation inconsistent with ground truth at image " +
                        std::to_string(n));
    }
  }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DomainError("average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) throw UndefinedMetricError("average_precision: no positive labels");
  return sum / static_cast<double>(hits);
}

MapResult mean_average_precision_detail(const PredictionBatch& preds,
                                        std::span<const GroundTruthVector> truths) {
  const std::size_t n = preds.batch_size();
  const std::size_t c = preds.class_count();
  if (truths.size() != n) throw DomainError("mean_average_precision: truth count mismatch");
  for (const auto& t : truths) {
    if (t.size() != c) throw DomainError("mean_average_precision: class count mismatch");
  }
  MapResult result;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = preds.logits()(i, k);
      labels[i] = truths[i][k] ? 1 : 0;
      any = any || labels[i];
    }
    if (!any) {
      ++result.classes_skipped;
      continue;
    }
    sum += average_precision(scores, labels);
    ++result.classes_evaluated;
  }
  if (result.classes_evaluated == 0) {
    throw UndefinedMetricError("mean_average_precision: no class has a positive");
  }
  if (result.classes_skipped > 0) {
    log_warning("mean_average_precision: skipped " + std::to_string(result.classes_skipped) +
                " class(es) without positives");
  }
  result.value = sum / static_cast<double>(result.classes_evaluated);
  return result;
}

double mean_average_precision(const PredictionBatch& preds,
                              std::span<const GroundTruthVector> truths) {
  return mean_average_precision_detail(preds, truths).value;
}

PrecisionRecallCounts count_missing_label_terms(std::span<const std::uint8_t> predicted_positive,
                                                const GroundTruthVector& truth,
                                                const AnnotationVector& annotation,
                                                PrecisionReading reading) {
  if (predicted_positive.size() != truth.size()) {
    throw DomainError("count_missing_label_terms: class count mismatch");
  }
  PrecisionRecallCounts counts;
  for (ClassIndex c = 0; c < truth.size(); ++c) {
    if (annotation[c]) continue;
    const bool actual = truth[c];
    const bool predicted = predicted_positive[c] != 0;
    if (actual) ++counts.missing_positives;
    if (!predicted) continue;
    if (actual) {
      ++counts.true_positives;
      ++counts.predicted;
    } else if (reading == PrecisionReading::kCountTrueNegatives) {
      ++counts.predicted;
    }
  }
  return counts;
}

PseudoQualityTracker::PseudoQualityTracker(std::span<const GroundTruthVector> truths,
                                           std::span<const AnnotationVector> annotations,
                                           PrecisionReading reading)
    : truths_(truths), annotations_(annotations), reading_(reading) {
  check_truths(truths, annotations);
  accumulated_.reserve(truths.size());
  for (const auto& t : truths) accumulated_.emplace_back(t.size(), 0);
}

void PseudoQualityTracker::add_epoch(std::span<const PseudoLabelVector> labels) {
  if (labels.size() != truths_.size()) throw DomainError("pseudo_quality: image count mismatch");
  PrecisionRecallCounts total;
  std::vector<std::uint8_t> predicted;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].size() != truths_[n].size()) {
      throw DomainError("pseudo_quality: class count mismatch");
    }
    predicted.assign(labels[n].size(), 0);
    for (ClassIndex c = 0; c < labels[n].size(); ++c) {
      if (labels[n][c] == PseudoLabel::kPositive) {
        predicted[c] = 1;
        accumulated_[n][c] = 1;
      }
    }
    const auto counts = count_missing_label_terms(predicted, truths_[n], annotations_[n], reading_);
    total.true_positives += counts.true_positives;
    total.predicted += counts.predicted;
    total.missing_positives += counts.missing_positives;
  }
  epochs_.push_back({ratio(total.true_positives, total.predicted),
                     ratio(total.true_positives, total.missing_positives), total});
}

PseudoQualityReport PseudoQualityTracker::report() const {
  PseudoQualityReport report;
  report.per_epoch = epochs_;
  report.average_precision =
      mean_defined(epochs_, &EpochQuality::precision, report.epochs_without_precision);
  report.average_recall = mean_defined(epochs_, &EpochQuality::recall, report.epochs_without_recall);
  PrecisionRecallCounts total;
  report.accumulated_positives.resize(truths_.size());
  for (std::size_t n = 0; n < truths_.size(); ++n) {
    for (ClassIndex c = 0; c < accumulated_[n].size(); ++c) {
      if (accumulated_[n][c]) report.accumulated_positives[n].push_back(c);
    }
    const auto counts = count_missing_label_terms(accumulated_[n], truths_[n], annotations_[n], reading_);
    total.true_positives += counts.true_positives;
    total.predicted += counts.predicted;
    total.missing_positives += counts.missing_positives;
  }
  if (!epochs_.empty()) {
    report.accumulated_precision = ratio(total.true_positives, total.predicted);
    report.accumulated_recall = ratio(total.true_positives, total.missing_positives);
  }
  return report;
}

PseudoQualityReport pseudo_quality(std::span<const std::vector<PseudoLabelVector>> epoch_labels,
                                   std::span<const GroundTruthVector> truths,
                                   std::span<const AnnotationVector> annotations,
                                   PrecisionReading reading) {
  PseudoQualityTracker tracker(truths, annotations, reading);
  for (const auto& labels : epoch_labels) tracker.add_epoch(labels);
  return tracker.report();
}

std::size_t histogram_bin(double p, std::size_t bins) {
  if (bins == 0) throw DomainError("histogram: bins must be at least 1");
  const double scaled = std::ceil(p * static_cast<double>(bins));
  if (scaled <= 1.0) return 0;
  return std::min(bins - 1, static_cast<std::size_t>(scaled) - 1);
}

Histogram probability_histogram(const PredictionBatch& preds,
                                std::span<const GroundTruthVector> truths, std::size_t bins) {
  if (bins == 0) throw DomainError("probability_histogram: bins must be at least 1");
  if (truths.size() != preds.batch_size()) {
    throw DomainError("probability_histogram: truth count mismatch");
  }
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  }
  h.positive_counts.assign(bins, 0);
  h.negative_counts.assign(bins, 0);
  for (std::size_t n = 0; n < preds.batch_size(); ++n) {
    if (truths[n].size() != preds.class_count()) {
      throw DomainError("probability_histogram: class count mismatch");
    }
    for (ClassIndex c = 0; c < preds.class_count(); ++c) {
      const std::size_t b = histogram_bin(preds.probabilities()(n, c), bins);
      ++(truths[n][c] ? h.positive_counts : h.negative_counts)[b];
    }
  }
  return h;
}

double positive_mass_above(const PredictionBatch& preds, std::span<const GroundTruthVector> truths,
                           double threshold) {
  if (truths.size() != preds.batch_size()) throw DomainError("positive_mass_above: size mismatch");
  std::size_t positives = 0;
  std::size_t above = 0;
  for (std::size_t n = 0; n < preds.batch_size(); ++n) {
    for (ClassIndex c = 0; c < preds.class_count(); ++c) {
      if (!truths[n][c]) continue;
      ++positives;
      if (preds.probabilities()(n, c) > threshold) ++above;
    }
  }
  if (positives == 0) throw UndefinedMetricError("positive_mass_above: no positives");
  return static_cast<double>(above) / static_cast<double>(positives);
}

double validation_positive_mean(std::span<const GroundTruthVector> truths) {
  if (truths.empty()) throw UndefinedMetricError("validation_positive_mean: empty validation set");
  std::size_t total = 0;
  for (const auto& t : truths) total += t.positive_count();
  return static_cast<double>(total) / static_cast<double>(truths.size());
}

void write_histogram_csv(std::ostream& out, const Histogram& histogram) {
  out << "bin_lo,bin_hi,count_pos,count_neg\n";
  for (std::size_t b = 0; b < histogram.bins(); ++b) {
    out << histogram.edges[b] << ',' << histogram.edges[b + 1] << ','
        << histogram.positive_counts[b] << ',' << histogram.negative_counts[b] << '\n';
  }
}

}  // namespace spml
