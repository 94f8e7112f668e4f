#include "spml/model.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "spml/seed.hpp"

namespace spml {

ClassifierModel::ClassifierModel(std::size_t input_dim, std::size_t hidden_dim,
                                 std::size_t class_count)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), class_count_(class_count) {
  if (input_dim == 0 || class_count == 0) throw DomainError("ClassifierModel: empty shape");
  const std::size_t count =
      hidden_dim == 0 ? input_dim * class_count + class_count
                      : input_dim * hidden_dim + hidden_dim + hidden_dim * class_count + class_count;
  params_.assign(count, 0.0);
}

ClassifierModel ClassifierModel::linear(std::size_t input_dim, std::size_t class_count) {
  return ClassifierModel(input_dim, 0, class_count);
}

ClassifierModel ClassifierModel::with_hidden(std::size_t input_dim, std::size_t hidden_dim,
                                             std::size_t class_count) {
  if (hidden_dim == 0) throw DomainError("ClassifierModel: hidden layer must be nonempty");
  return ClassifierModel(input_dim, hidden_dim, class_count);
}

void ClassifierModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t offset = 0;
  auto fill_layer = [&](std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) params_[offset++] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < fan_out; ++i) params_[offset++] = 0.0;
  };
  if (hidden_dim_ == 0) {
    fill_layer(input_dim_, class_count_);
  } else {
    fill_layer(input_dim_, hidden_dim_);
    fill_layer(hidden_dim_, class_count_);
  }
}

Matrix ClassifierModel::hidden_activations(const Matrix& features) const {
  Matrix hidden(features.rows(), hidden_dim_);
  const double* w = params_.data();
  const double* b = w + input_dim_ * hidden_dim_;
  for (std::size_t n = 0; n < features.rows(); ++n) {
    for (std::size_t j = 0; j < hidden_dim_; ++j) hidden(n, j) = b[j];
    for (std::size_t d = 0; d < input_dim_; ++d) {
      const double x = features(n, d);
      for (std::size_t j = 0; j < hidden_dim_; ++j) hidden(n, j) += x * w[d * hidden_dim_ + j];
    }
    for (std::size_t j = 0; j < hidden_dim_; ++j) hidden(n, j) = std::tanh(hidden(n, j));
  }
  return hidden;
}

Matrix ClassifierModel::logits(const Matrix& features) const {
  if (features.cols() != input_dim_) {
    throw DomainError("ClassifierModel: feature dimension " + std::to_string(features.cols()) +
                      " does not match model input " + std::to_string(input_dim_));
  }
  const Matrix inputs = hidden_dim_ == 0 ? features : hidden_activations(features);
  const std::size_t fan_in = output_inputs();
  const double* w = params_.data() + (hidden_dim_ == 0 ? 0 : input_dim_ * hidden_dim_ + hidden_dim_);
  const double* b = w + fan_in * class_count_;
  Matrix out(features.rows(), class_count_);
  for (std::size_t n = 0; n < features.rows(); ++n) {
    for (std::size_t c = 0; c < class_count_; ++c) out(n, c) = b[c];
    for (std::size_t d = 0; d < fan_in; ++d) {
      const double x = inputs(n, d);
      for (std::size_t c = 0; c < class_count_; ++c) out(n, c) += x * w[d * class_count_ + c];
    }
  }
  return out;
}

std::vector<double> ClassifierModel::backward(const Matrix& features,
                                              const Matrix& logit_gradient) const {
  if (features.cols() != input_dim_ || logit_gradient.cols() != class_count_ ||
      features.rows() != logit_gradient.rows()) {
    throw DomainError("ClassifierModel::backward: shape mismatch");
  }
  std::vector<double> grad(params_.size(), 0.0);
  const std::size_t n_rows = features.rows();
  if (hidden_dim_ == 0) {
    double* gw = grad.data();
    double* gb = gw + input_dim_ * class_count_;
    for (std::size_t n = 0; n < n_rows; ++n) {
      for (std::size_t d = 0; d < input_dim_; ++d) {
        const double x = features(n, d);
        for (std::size_t c = 0; c < class_count_; ++c) gw[d * class_count_ + c] += x * logit_gradient(n, c);
      }
      for (std::size_t c = 0; c < class_count_; ++c) gb[c] += logit_gradient(n, c);
    }
    return grad;
  }

  const Matrix hidden = hidden_activations(features);
  const std::size_t w2_offset = input_dim_ * hidden_dim_ + hidden_dim_;
  const double* w2 = params_.data() + w2_offset;
  double* gw1 = grad.data();
  double* gb1 = gw1 + input_dim_ * hidden_dim_;
  double* gw2 = grad.data() + w2_offset;
  double* gb2 = gw2 + hidden_dim_ * class_count_;
  std::vector<double> delta(hidden_dim_);
  for (std::size_t n = 0; n < n_rows; ++n) {
    for (std::size_t j = 0; j < hidden_dim_; ++j) {
      double back = 0.0;
      for (std::size_t c = 0; c < class_count_; ++c) {
        gw2[j * class_count_ + c] += hidden(n, j) * logit_gradient(n, c);
        back += w2[j * class_count_ + c] * logit_gradient(n, c);
      }
      delta[j] = back * (1.0 - hidden(n, j) * hidden(n, j));
    }
    for (std::size_t c = 0; c < class_count_; ++c) gb2[c] += logit_gradient(n, c);
    for (std::size_t d = 0; d < input_dim_; ++d) {
      const double x = features(n, d);
      for (std::size_t j = 0; j < hidden_dim_; ++j) gw1[d * hidden_dim_ + j] += x * delta[j];
    }
    for (std::size_t j = 0; j < hidden_dim_; ++j) gb1[j] += delta[j];
  }
  return grad;
}

PredictionBatch forward(const ClassifierModel& model, const Matrix& features) {
  return PredictionBatch::from_logits(model.logits(features));
}

AdamOptimizer::AdamOptimizer(std::size_t parameter_count, AdamConfig cfg)
    : cfg_(cfg), first_moment_(parameter_count, 0.0), second_moment_(parameter_count, 0.0) {
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("Adam: learning rate must be nonnegative");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("Adam: betas must be in [0, 1)");
  }
  if (!(cfg.epsilon > 0.0)) throw ConfigError("Adam: epsilon must be positive");
}

void AdamOptimizer::step(std::span<double> parameters, std::span<const double> gradient) {
  if (parameters.size() != first_moment_.size() || gradient.size() != first_moment_.size()) {
    throw DomainError("Adam: parameter/gradient size mismatch");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(cfg_.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    const double g = gradient[i];
    first_moment_[i] = cfg_.beta1 * first_moment_[i] + (1.0 - cfg_.beta1) * g;
    second_moment_[i] = cfg_.beta2 * second_moment_[i] + (1.0 - cfg_.beta2) * g * g;
    const double m_hat = first_moment_[i] / correction1;
    const double v_hat = second_moment_[i] / correction2;
    parameters[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void save_checkpoint(std::ostream& out, const ClassifierModel& model) {
  out << "format spml-checkpoint-1\n";
  out << "input_dim " << model.input_dim() << '\n';
  out << "hidden_dim " << model.hidden_dim() << '\n';
  out << "class_count " << model.class_count() << '\n';
  out << "params " << model.parameters().size() << '\n';
  char buf[64];
  for (double v : model.parameters()) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
    out.put('\n');
  }
}

ClassifierModel load_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) throw std::runtime_error("checkpoint: expected key '" + key + "'");
  };
  std::string format;
  expect("format");
  in >> format;
  if (format != "spml-checkpoint-1") throw std::runtime_error("checkpoint: unknown format");
  std::size_t input_dim = 0, hidden_dim = 0, class_count = 0, count = 0;
  expect("input_dim");
  in >> input_dim;
  expect("hidden_dim");
  in >> hidden_dim;
  expect("class_count");
  in >> class_count;
  expect("params");
  in >> count;
  ClassifierModel model = hidden_dim == 0
                              ? ClassifierModel::linear(input_dim, class_count)
                              : ClassifierModel::with_hidden(input_dim, hidden_dim, class_count);
  if (count != model.parameters().size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  std::string token;
  for (double& v : model.parameters()) {
    if (!(in >> token)) throw std::runtime_error("checkpoint: truncated parameter list");
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{}) throw std::runtime_error("checkpoint: bad number '" + token + "'");
  }
  return model;
}

}  // namespace spml
