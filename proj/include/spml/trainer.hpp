#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spml/core.hpp"
#include "spml/damp.hpp"
#include "spml/eval.hpp"
#include "spml/gpr_loss.hpp"
#include "spml/model.hpp"
#include "spml/scorers.hpp"
#include "spml/world.hpp"

namespace spml {

enum class Method {
  kAssumeNegativeBce,  // BCE on ŷ, every unannotated label negative
  kGrLoss,             // GR loss, no pseudo-labels
  kBceDamp,            // BCE with DAMP positives as targets
  kGprDamp,            // GPR loss on DAMP pseudo-labels
  kBceRandom,          // BCE with random pseudo-positives
  kGprRandom,          // GPR loss on random pseudo-positives
  kGprFileScorer,      // GPR loss on DAMP over SSM1 maps from disk
};

std::string_view method_name(Method method);
Method parse_method(std::string_view name);
bool uses_damp(Method method);
bool uses_random_labels(Method method);
bool uses_gpr(Method method);

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double validation_fraction = 0.2;
  std::size_t hidden_units = 0;
  Method method = Method::kGprDamp;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Seeded permutation; the last round(fraction·N) instances form validation.
DatasetSplit split_world(const SyntheticWorld& world, double validation_fraction,
                         std::uint64_t seed);

struct PseudoSnapshot {
  std::optional<double> precision_avg;
  std::optional<double> recall_avg;
  std::optional<double> precision_acc;
  std::optional<double> recall_acc;
  std::size_t positive_labels = 0;
  std::size_t negative_labels = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  // Mean of the per-batch breakdowns.
  LossBreakdown loss;
  double validation_map = 0.0;
  PseudoSnapshot pseudo;
  AlphaState alpha;
  std::optional<double> confidence;
  bool gate_active = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_map = 0.0;
};

// Per-instance counters, indexed like world.instances.
struct TrainCounters {
  std::vector<std::size_t> pseudo_label_visits;
  std::vector<std::size_t> gradient_visits;
};

class Trainer {
 public:
  // `scorer` must outlive the trainer and is required for DAMP methods.
  Trainer(const SyntheticWorld& world, GprConfig gpr, DampConfig damp, TrainConfig train,
          const ViewScorer* scorer = nullptr);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const DatasetSplit& split() const { return split_; }
  // m used by the regularizer: configured value, else training-set E_pos.
  double expected_positives() const { return m_; }
  // Rate for random pseudo-positives among ŷ = 0 classes.
  double random_positive_rate() const { return random_rate_; }
  const TrainCounters& counters() const { return counters_; }

  // Pseudo-labels for every training instance at `epoch`, gate applied.
  EpochPseudoLabels pseudo_labels(std::size_t epoch);

  // Regenerates pseudo-labels, then one shuffled pass of minibatch updates.
  EpochRecord train_epoch(ClassifierModel& model, AdamOptimizer& optimizer, std::size_t epoch);

  ClassifierModel make_model() const;
  PredictionBatch predict_validation(const ClassifierModel& model) const;
  std::vector<GroundTruthVector> validation_truths() const;
  double validation_map(const ClassifierModel& model) const;

 private:
  const SyntheticWorld& world_;
  GprConfig gpr_;
  DampConfig damp_;
  TrainConfig train_;
  const ViewScorer* scorer_;
  DatasetSplit split_;
  double m_ = 0.0;
  double random_rate_ = 0.0;
  std::vector<AnnotationVector> train_annotations_;
  std::vector<GroundTruthVector> train_truths_;
  std::vector<ImageId> train_ids_;
  std::unique_ptr<PseudoQualityTracker> tracker_;
  TrainCounters counters_;
  Matrix validation_features_;
};

struct FitResult {
  ClassifierModel model;  // parameters from the best validation epoch
  TrainHistory history;
  TrainCounters counters;
};

FitResult fit(const SyntheticWorld& world, const GprConfig& gpr, const DampConfig& damp,
              const TrainConfig& train, const ViewScorer* scorer = nullptr);

}  // namespace spml
