#include "spml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spml/numeric.hpp"
#include "spml/seed.hpp"

namespace spml {
namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::kAssumeNegativeBce, "assume_negative_bce"},
    {Method::kGrLoss, "gr_loss"},
    {Method::kBceDamp, "bce_damp"},
    {Method::kGprDamp, "gpr_damp"},
    {Method::kBceRandom, "bce_random"},
    {Method::kGprRandom, "gpr_random"},
    {Method::kGprFileScorer, "gpr_file_scorer"},
};

struct BreakdownMean {
  CompensatedSum total;
  std::array<CompensatedSum, 4> per_case;
  CompensatedSum regularizer;
  CompensatedSum m_hat;
  std::size_t batches = 0;

  void add(const LossBreakdown& b) {
    total.add(b.total);
    for (std::size_t k = 0; k < 4; ++k) per_case[k].add(b.per_case_sums[k]);
    regularizer.add(b.regularizer_value);
    m_hat.add(b.m_hat);
    ++batches;
  }

  LossBreakdown mean() const {
    LossBreakdown out;
    if (batches == 0) return out;
    const double n = static_cast<double>(batches);
    out.total = total.value() / n;
    for (std::size_t k = 0; k < 4; ++k) out.per_case_sums[k] = per_case[k].value() / n;
    out.regularizer_value = regularizer.value() / n;
    out.m_hat = m_hat.value() / n;
    return out;
  }
};

}  // namespace

std::string_view method_name(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  throw ConfigError("unknown training method '" + std::string(name) + "'");
}

bool uses_damp(Method method) {
  return method == Method::kBceDamp || method == Method::kGprDamp ||
         method == Method::kGprFileScorer;
}

bool uses_random_labels(Method method) {
  return method == Method::kBceRandom || method == Method::kGprRandom;
}

bool uses_gpr(Method method) {
  return method == Method::kGprDamp || method == Method::kGprRandom ||
         method == Method::kGprFileScorer;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be nonnegative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must be in [0, 1)");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must be in (0, 1)");
  }
}

DatasetSplit split_world(const SyntheticWorld& world, double validation_fraction,
                         std::uint64_t seed) {
  const std::size_t n = world.instances.size();
  const auto n_val = static_cast<std::size_t>(
      std::lround(validation_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) {
    throw ConfigError("split: need at least one training and one validation instance");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, 0, 0, kSplitStream}));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);
  }
  DatasetSplit split;
  split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  split.validation.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

Trainer::Trainer(const SyntheticWorld& world, GprConfig gpr, DampConfig damp, TrainConfig train,
                 const ViewScorer* scorer)
    : world_(world), gpr_(gpr), damp_(damp), train_(train), scorer_(scorer) {
  gpr_.validate();
  damp_.validate();
  train_.validate();
  if (uses_damp(train_.method)) {
    if (scorer_ == nullptr) throw ConfigError("train: method requires a view scorer");
    if (scorer_->class_count() != world.class_count) {
      throw ConfigError("train: scorer class count does not match the world");
    }
  }
  split_ = split_world(world, train_.validation_fraction, train_.seed);

  std::size_t positives = 0;
  for (std::size_t idx : split_.train) {
    const auto& inst = world.instances[idx];
    train_annotations_.push_back(inst.annotation);
    train_truths_.push_back(inst.truth);
    train_ids_.push_back(inst.image_id);
    positives += inst.truth.positive_count();
  }
  const double e_pos = static_cast<double>(positives) / static_cast<double>(split_.train.size());
  m_ = gpr_.m > 0.0 ? gpr_.m : e_pos;
  gpr_.m = m_;
  random_rate_ = std::clamp((e_pos - 1.0) / static_cast<double>(world.class_count - 1), 0.0, 1.0);
  tracker_ = std::make_unique<PseudoQualityTracker>(train_truths_, train_annotations_);
  counters_.pseudo_label_visits.assign(world.instances.size(), 0);
  counters_.gradient_visits.assign(world.instances.size(), 0);
  validation_features_ = gather_features(world, split_.validation);
}

EpochPseudoLabels Trainer::pseudo_labels(std::size_t epoch) {
  const std::size_t c = world_.class_count;
  EpochPseudoLabels out;
  if (uses_damp(train_.method)) {
    out = generate_epoch_pseudo_labels(train_ids_, train_annotations_, *scorer_, damp_, gpr_,
                                       train_.seed, epoch);
  } else if (uses_random_labels(train_.method)) {
    out.labels.reserve(train_ids_.size());
    for (std::size_t i = 0; i < train_ids_.size(); ++i) {
      Rng rng(derive_seed({train_.seed, epoch, train_ids_[i], kRandomLabelStream}));
      PseudoLabelVector labels(c);
      for (ClassIndex k = 0; k < c; ++k) {
        const bool draw = rng.uniform() < random_rate_;
        if (draw && !train_annotations_[i][k]) labels[k] = PseudoLabel::kPositive;
      }
      out.labels.push_back(std::move(labels));
    }
  } else {
    out.labels.assign(train_ids_.size(), PseudoLabelVector(c));
    return out;
  }
  for (std::size_t idx : split_.train) ++counters_.pseudo_label_visits[idx];
  return out;
}

ClassifierModel Trainer::make_model() const {
  ClassifierModel model =
      train_.hidden_units == 0
          ? ClassifierModel::linear(world_.feature_dim, world_.class_count)
          : ClassifierModel::with_hidden(world_.feature_dim, train_.hidden_units, world_.class_count);
  model.initialize(derive_seed({train_.seed, 0, 0, kInitStream}));
  return model;
}

PredictionBatch Trainer::predict_validation(const ClassifierModel& model) const {
  return forward(model, validation_features_);
}

std::vector<GroundTruthVector> Trainer::validation_truths() const {
  std::vector<GroundTruthVector> truths;
  truths.reserve(split_.validation.size());
  for (std::size_t idx : split_.validation) truths.push_back(world_.instances[idx].truth);
  return truths;
}

double Trainer::validation_map(const ClassifierModel& model) const {
  return mean_average_precision(predict_validation(model), validation_truths());
}

EpochRecord Trainer::train_epoch(ClassifierModel& model, AdamOptimizer& optimizer,
                                 std::size_t epoch) {
  if (epoch >= train_.epochs) throw DomainError("train_epoch: epoch beyond configured total");
  EpochRecord record;
  record.epoch = epoch;
  record.alpha = alpha_schedule(epoch, train_.epochs, gpr_);

  EpochPseudoLabels pseudo = pseudo_labels(epoch);
  if (uses_damp(train_.method)) {
    record.confidence = pseudo.confidence;
    record.gate_active = pseudo.gate_active;
  }
  if (uses_damp(train_.method) || uses_random_labels(train_.method)) {
    tracker_->add_epoch(pseudo.labels);
    const PseudoQualityReport report = tracker_->report();
    record.pseudo.precision_avg = report.average_precision;
    record.pseudo.recall_avg = report.average_recall;
    record.pseudo.precision_acc = report.accumulated_precision;
    record.pseudo.recall_acc = report.accumulated_recall;
    for (const auto& l : pseudo.labels) {
      record.pseudo.positive_labels += l.count(PseudoLabel::kPositive);
      record.pseudo.negative_labels += l.count(PseudoLabel::kNegative);
    }
  }

  std::vector<std::size_t> order(train_ids_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({train_.seed, epoch, 0, kShuffleStream}));
  for (std::size_t i = order.size(); i-- > 1;) {
    std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);
  }

  BreakdownMean losses;
  std::vector<std::size_t> batch_rows;
  std::vector<AnnotationVector> batch_annotations;
  std::vector<PseudoLabelVector> batch_pseudo;
  for (std::size_t start = 0; start < order.size(); start += train_.batch_size) {
    const std::size_t end = std::min(order.size(), start + train_.batch_size);
    batch_rows.clear();
    batch_annotations.clear();
    batch_pseudo.clear();
    for (std::size_t j = start; j < end; ++j) {
      const std::size_t pos = order[j];
      batch_rows.push_back(split_.train[pos]);
      batch_annotations.push_back(train_annotations_[pos]);
      batch_pseudo.push_back(pseudo.labels[pos]);
    }
    const Matrix features = gather_features(world_, batch_rows);
    const PredictionBatch preds = forward(model, features);

    LossResult loss;
    try {
      switch (train_.method) {
        case Method::kAssumeNegativeBce:
          loss = bce_loss_batch(preds, batch_annotations, {});
          break;
        case Method::kBceDamp:
        case Method::kBceRandom:
          loss = bce_loss_batch(preds, batch_annotations, batch_pseudo);
          break;
        case Method::kGrLoss:
          loss = gr_loss_batch(preds, batch_annotations, gpr_, record.alpha);
          break;
        case Method::kGprDamp:
        case Method::kGprRandom:
        case Method::kGprFileScorer:
          loss = gpr_loss_batch(preds, batch_annotations, batch_pseudo, gpr_, record.alpha);
          break;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("epoch " + std::to_string(epoch) + ", batch starting at " +
                               std::to_string(start) + ": " + e.what());
    }
    losses.add(loss.breakdown);
    const std::vector<double> grad = model.backward(features, loss.logit_gradient);
    optimizer.step(model.parameters(), grad);
    for (std::size_t idx : batch_rows) ++counters_.gradient_visits[idx];
  }
  record.loss = losses.mean();
  record.validation_map = validation_map(model);
  return record;
}

FitResult fit(const SyntheticWorld& world, const GprConfig& gpr, const DampConfig& damp,
              const TrainConfig& train, const ViewScorer* scorer) {
  Trainer trainer(world, gpr, damp, train, scorer);
  ClassifierModel model = trainer.make_model();
  AdamOptimizer optimizer(model.parameters().size(),
                          {train.learning_rate, train.adam_beta1, train.adam_beta2, 1e-8});
  FitResult result;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    EpochRecord record = trainer.train_epoch(model, optimizer, epoch);
    if (epoch == 0 || record.validation_map > result.history.best_validation_map) {
      result.history.best_epoch = epoch;
      result.history.best_validation_map = record.validation_map;
      result.model = model;
    }
    result.history.epochs.push_back(std::move(record));
  }
  result.counters = trainer.counters();
  return result;
}

}  // namespace spml
