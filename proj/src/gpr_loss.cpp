#include "spml/gpr_loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spml/log.hpp"
#include "spml/numeric.hpp"

namespace spml {
namespace {

struct ElementTerm {
  double weight;
  double loss;
  double dloss_dlogit;  // d loss / d s with weight excluded
};

void check_shapes(const PredictionBatch& preds, std::span<const AnnotationVector> annotations,
                  std::span<const PseudoLabelVector> pseudo, bool pseudo_required) {
  const std::size_t n = preds.batch_size();
  const std::size_t c = preds.class_count();
  if (n == 0 || c == 0) throw DomainError("loss: empty prediction batch");
  if (annotations.size() != n) {
    throw DomainError("loss: annotation count " + std::to_string(annotations.size()) +
                      " does not match batch size " + std::to_string(n));
  }
  for (const auto& a : annotations) {
    if (a.size() != c) throw DomainError("loss: annotation class count mismatch");
  }
  if (pseudo_required || !pseudo.empty()) {
    if (pseudo.size() != n) throw DomainError("loss: pseudo-label count does not match batch size");
    for (const auto& l : pseudo) {
      if (l.size() != c) throw DomainError("loss: pseudo-label class count mismatch");
    }
  }
}

ElementTerm gpr_element(LossCase which, double p, AlphaState alpha, const GprConfig& cfg,
                        const FalseNegativeEstimator& estimator) {
  switch (which) {
    case LossCase::kConfirmedPositive:
      return {1.0, loss_confirmed_positive(p), -(1.0 - p)};
    case LossCase::kUndefined: {
      const double k = estimator(p, cfg.beta);
      const double grad =
          (1.0 - k) * std::pow(1.0 - p, cfg.q1) * p - k * std::pow(p, cfg.q2) * (1.0 - p);
      return {gaussian_weight(p, alpha), loss_undefined(p, k, cfg), grad};
    }
    case LossCase::kNegativePseudo:
      return {gaussian_weight(p, alpha), loss_negative_pseudo(p), p};
    case LossCase::kPositivePseudo:
      return {clamped_inverse_weight(p, alpha, cfg), loss_positive_pseudo(p, cfg.q3),
              (1.0 - cfg.q3) * p - cfg.q3 * (1.0 - p)};
  }
  return {0.0, 0.0, 0.0};
}

// Shared reduction: fixed row-major order, compensated per case.
template <typename CaseFn, typename TermFn>
LossResult reduce_batch(const PredictionBatch& preds, CaseFn&& case_of, TermFn&& term_of) {
  const std::size_t n = preds.batch_size();
  const std::size_t c = preds.class_count();
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(c));
  std::array<CompensatedSum, 4> sums;
  LossResult result;
  result.logit_gradient = Matrix(n, c);
  const Matrix& probs = preds.probabilities();
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < c; ++col) {
      const LossCase which = case_of(row, col);
      const ElementTerm term = term_of(which, probs(row, col));
      sums[static_cast<std::size_t>(which)].add(term.weight * term.loss);
      result.logit_gradient(row, col) = scale * term.weight * term.dloss_dlogit;
    }
  }
  CompensatedSum total;
  for (std::size_t k = 0; k < 4; ++k) {
    result.breakdown.per_case_sums[k] = scale * sums[k].value();
    total.add(result.breakdown.per_case_sums[k]);
  }
  result.breakdown.total = total.value();
  return result;
}

}  // namespace

AlphaState alpha_schedule(std::size_t epoch, std::size_t total_epochs, const GprConfig& cfg) {
  if (total_epochs == 0 || epoch >= total_epochs) {
    throw DomainError("alpha_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(total_epochs) + ")");
  }
  if (total_epochs == 1) return {cfg.mu_start, cfg.sigma_start};
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return {cfg.mu_start + (cfg.mu_end - cfg.mu_start) * t,
          cfg.sigma_start + (cfg.sigma_end - cfg.sigma_start) * t};
}

double gaussian_weight(double p, AlphaState alpha) {
  const double d = p - alpha.mu;
  return std::exp(-(d * d) / (2.0 * alpha.sigma * alpha.sigma));
}

double clamped_inverse_weight(double p, AlphaState alpha, const GprConfig& cfg) {
  return std::min(std::max(1.0 - gaussian_weight(p, alpha), cfg.lambda1), cfg.lambda2);
}

double false_negative_estimate(double p, double beta) { return std::pow(p, beta); }

double loss_confirmed_positive(double p) { return -std::log(p); }

double loss_undefined(double p, double k_hat, const GprConfig& cfg) {
  if (!(cfg.q1 > 0.0) || !(cfg.q2 > 0.0)) {
    throw ConfigError("loss_undefined: q1 and q2 must be positive");
  }
  const double negative_term = (1.0 - std::pow(1.0 - p, cfg.q1)) / cfg.q1;
  const double positive_term = (1.0 - std::pow(p, cfg.q2)) / cfg.q2;
  return (1.0 - k_hat) * negative_term + k_hat * positive_term;
}

double loss_negative_pseudo(double p) { return -std::log1p(-p); }

double loss_positive_pseudo(double p, double q3) {
  return -(1.0 - q3) * std::log1p(-p) - q3 * std::log(p);
}

LossCase dispatch_case(bool annotated, PseudoLabel label) {
  if (annotated) return LossCase::kConfirmedPositive;
  switch (label) {
    case PseudoLabel::kNegative: return LossCase::kNegativePseudo;
    case PseudoLabel::kPositive: return LossCase::kPositivePseudo;
    case PseudoLabel::kUndefined: break;
  }
  return LossCase::kUndefined;
}

RegularizerResult positive_count_regularizer(const PredictionBatch& preds, double m) {
  const std::size_t n = preds.batch_size();
  const std::size_t c = preds.class_count();
  if (n == 0 || c == 0) throw DomainError("positive_count_regularizer: empty batch");
  CompensatedSum sum;
  for (double p : preds.probabilities().values()) sum.add(p);
  RegularizerResult result;
  result.m_hat = sum.value() / static_cast<double>(n);
  const double cd = static_cast<double>(c);
  const double gap = (result.m_hat - m) / cd;
  result.value = gap * gap;
  const double grad = 2.0 * (result.m_hat - m) / (static_cast<double>(n) * cd * cd);
  result.gradient = Matrix(n, c, grad);
  return result;
}

double log_method_confidence(std::span<const double> positive_pseudo_probs) {
  CompensatedSum sum;
  for (double p : positive_pseudo_probs) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("method_confidence: probability outside (0, 1]");
    sum.add(std::log(p));
  }
  return sum.value();
}

double method_confidence(std::span<const double> positive_pseudo_probs) {
  if (positive_pseudo_probs.empty()) {
    log_warning("method_confidence: no confirmed positives supplied; returning 1");
    return 1.0;
  }
  return std::exp(log_method_confidence(positive_pseudo_probs));
}

double method_confidence_per_positive(std::span<const double> positive_pseudo_probs) {
  if (positive_pseudo_probs.empty()) {
    log_warning("method_confidence: no confirmed positives supplied; returning 1");
    return 1.0;
  }
  return std::exp(log_method_confidence(positive_pseudo_probs) /
                  static_cast<double>(positive_pseudo_probs.size()));
}

LossResult gpr_loss_batch(const PredictionBatch& preds,
                          std::span<const AnnotationVector> annotations,
                          std::span<const PseudoLabelVector> pseudo, const GprConfig& cfg,
                          AlphaState alpha, const FalseNegativeEstimator& estimator) {
  check_shapes(preds, annotations, pseudo, /*pseudo_required=*/true);
  LossResult result = reduce_batch(
      preds,
      [&](std::size_t row, std::size_t col) {
        return dispatch_case(annotations[row][col], pseudo[row][col]);
      },
      [&](LossCase which, double p) { return gpr_element(which, p, alpha, cfg, estimator); });

  const RegularizerResult reg = positive_count_regularizer(preds, cfg.m);
  result.breakdown.regularizer_value = reg.value;
  result.breakdown.m_hat = reg.m_hat;
  if (cfg.eta != 0.0) {
    result.breakdown.total += cfg.eta * reg.value;
    const Matrix& probs = preds.probabilities();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = probs.values()[i];
      result.logit_gradient.values()[i] += cfg.eta * reg.gradient.values()[i] * p * (1.0 - p);
    }
  }
  return result;
}

LossResult gr_loss_batch(const PredictionBatch& preds,
                         std::span<const AnnotationVector> annotations, const GprConfig& cfg,
                         AlphaState alpha, const FalseNegativeEstimator& estimator) {
  check_shapes(preds, annotations, {}, /*pseudo_required=*/false);
  LossResult result = reduce_batch(
      preds,
      [&](std::size_t row, std::size_t col) {
        return annotations[row][col] ? LossCase::kConfirmedPositive : LossCase::kUndefined;
      },
      [&](LossCase which, double p) { return gpr_element(which, p, alpha, cfg, estimator); });
  const RegularizerResult reg = positive_count_regularizer(preds, cfg.m);
  result.breakdown.regularizer_value = reg.value;
  result.breakdown.m_hat = reg.m_hat;
  return result;
}

LossResult bce_loss_batch(const PredictionBatch& preds,
                          std::span<const AnnotationVector> annotations,
                          std::span<const PseudoLabelVector> pseudo) {
  check_shapes(preds, annotations, pseudo, /*pseudo_required=*/false);
  LossResult result = reduce_batch(
      preds,
      [&](std::size_t row, std::size_t col) {
        const PseudoLabel label = pseudo.empty() ? PseudoLabel::kUndefined : pseudo[row][col];
        return dispatch_case(annotations[row][col], label);
      },
      [](LossCase which, double p) -> ElementTerm {
        const bool positive_target =
            which == LossCase::kConfirmedPositive || which == LossCase::kPositivePseudo;
        if (positive_target) return {1.0, -std::log(p), -(1.0 - p)};
        return {1.0, -std::log1p(-p), p};
      });
  const RegularizerResult reg = positive_count_regularizer(preds, 0.0);
  result.breakdown.m_hat = reg.m_hat;
  return result;
}

}  // namespace spml
