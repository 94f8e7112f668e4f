#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>

#include "spml/core.hpp"

namespace spml {

// α = [σ, μ] of the Gaussian sample weight.
struct AlphaState {
  double mu = 0.0;
  double sigma = 1.0;
};

// Linear interpolation between the configured endpoints over the run.
AlphaState alpha_schedule(std::size_t epoch, std::size_t total_epochs, const GprConfig& cfg);

// v²(p) = v³(p) = exp(-(p - μ)² / 2σ²).
double gaussian_weight(double p, AlphaState alpha);

// v⁴(p) = min(max(1 - v²(p), λ1), λ2).
double clamped_inverse_weight(double p, AlphaState alpha, const GprConfig& cfg);

// k̂(p; β): estimated probability that an assumed-negative label is a false
// negative. Any map [0, 1] -> [0, 1] may be plugged in.
using FalseNegativeEstimator = std::function<double(double p, double beta)>;

// Default estimator k̂(p; β) = p^β.
double false_negative_estimate(double p, double beta);

// Per-element loss branches. `p` is expected to be clamped already.
double loss_confirmed_positive(double p);
double loss_undefined(double p, double k_hat, const GprConfig& cfg);
double loss_negative_pseudo(double p);
double loss_positive_pseudo(double p, double q3);

enum class LossCase : std::size_t {
  kConfirmedPositive = 0,  // ŷ = 1
  kUndefined = 1,          // ŷ = 0, l = 0
  kNegativePseudo = 2,     // ŷ = 0, l = -1
  kPositivePseudo = 3,     // ŷ = 0, l = +1
};

// ŷ = 1 wins regardless of the pseudo-label.
LossCase dispatch_case(bool annotated, PseudoLabel label);

struct RegularizerResult {
  double value = 0.0;
  double m_hat = 0.0;
  // d value / d p_{n,i}; identical for every entry.
  Matrix gradient;
};

// R = ((m̂ - m) / C)², m̂ = (1/N) Σ_n Σ_i p_{n,i}.
RegularizerResult positive_count_regularizer(const PredictionBatch& preds, double m);

// C(M): product of the supplied probabilities, computed as exp(Σ log). An
// empty list gives 1 and logs a warning.
double method_confidence(std::span<const double> positive_pseudo_probs);
double log_method_confidence(std::span<const double> positive_pseudo_probs);
// exp(mean log): the per-positive geometric mean of C(M). Empty list gives 1.
double method_confidence_per_positive(std::span<const double> positive_pseudo_probs);

struct LossBreakdown {
  double total = 0.0;
  // Weighted branch contributions, each already scaled by 1/(N·C), indexed by
  // LossCase. total = Σ per_case_sums + η·R.
  std::array<double, 4> per_case_sums{};
  double regularizer_value = 0.0;
  double m_hat = 0.0;
};

struct LossResult {
  LossBreakdown breakdown;
  Matrix logit_gradient;  // N×C, d total / d s_{n,i}
};

// Generalized pseudo-label robust loss. Weights v and k̂ are held constant
// when differentiating.
LossResult gpr_loss_batch(const PredictionBatch& preds,
                          std::span<const AnnotationVector> annotations,
                          std::span<const PseudoLabelVector> pseudo, const GprConfig& cfg,
                          AlphaState alpha,
                          const FalseNegativeEstimator& estimator = false_negative_estimate);

// Generalized robust loss: the two-case form without pseudo-labels or R.
LossResult gr_loss_batch(const PredictionBatch& preds,
                         std::span<const AnnotationVector> annotations, const GprConfig& cfg,
                         AlphaState alpha,
                         const FalseNegativeEstimator& estimator = false_negative_estimate);

// Plain binary cross entropy. Target is 1 where ŷ = 1 or l = +1, else 0. An
// empty `pseudo` span means Assume Negative. Contributions are reported under
// the same case slots as gpr_loss_batch with unit weights.
LossResult bce_loss_batch(const PredictionBatch& preds,
                          std::span<const AnnotationVector> annotations,
                          std::span<const PseudoLabelVector> pseudo);

}  // namespace spml
