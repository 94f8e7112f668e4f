#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "spml/core.hpp"

namespace spml {

// Affine classifier, optionally with one tanh hidden layer. Parameters live in
// one flat vector: [W1 (D×H), b1 (H), W2 (H×C), b2 (C)] with hidden, or
// [W (D×C), b (C)] without.
class ClassifierModel {
 public:
  ClassifierModel() = default;
  static ClassifierModel linear(std::size_t input_dim, std::size_t class_count);
  static ClassifierModel with_hidden(std::size_t input_dim, std::size_t hidden_dim,
                                     std::size_t class_count);

  // Weights uniform on ±1/√fan_in, biases zero.
  void initialize(std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t class_count() const { return class_count_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Matrix logits(const Matrix& features) const;
  // d loss / d parameters given d loss / d logits, laid out like parameters().
  std::vector<double> backward(const Matrix& features, const Matrix& logit_gradient) const;

  bool operator==(const ClassifierModel&) const = default;

 private:
  ClassifierModel(std::size_t input_dim, std::size_t hidden_dim, std::size_t class_count);
  std::size_t output_inputs() const { return hidden_dim_ == 0 ? input_dim_ : hidden_dim_; }
  Matrix hidden_activations(const Matrix& features) const;

  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t class_count_ = 0;
  std::vector<double> params_;
};

// p = clamp(sigmoid(logits)).
PredictionBatch forward(const ClassifierModel& model, const Matrix& features);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamConfig cfg);

  void step(std::span<double> parameters, std::span<const double> gradient);
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
  std::size_t steps_ = 0;
};

// Key/value text checkpoint: shape keys then `params <count>` followed by the
// values in shortest round-trip decimal.
void save_checkpoint(std::ostream& out, const ClassifierModel& model);
ClassifierModel load_checkpoint(std::istream& in);

}  // namespace spml
