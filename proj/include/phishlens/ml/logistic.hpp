#pragma once

#include <array>
#include <cmath>

#include "phishlens/ml/common.hpp"

namespace phishlens::ml {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct LogisticModel {
  std::array<double, kFeatureCount> weights{};
  double bias = 0;

  double logit(const FeatureVector& x) const {
    double z = bias;
    for (std::size_t j = 0; j < kFeatureCount; ++j) z += weights[j] * static_cast<double>(x.values[j]);
    return z;
  }

  double score(const FeatureVector& x) const { return sigmoid(logit(x)); }

  bool operator==(const LogisticModel&) const = default;
};

/// Mean log-loss plus (l2 / 2) * |w|^2. The bias is not regularized.
inline double logistic_loss(const LogisticModel& m, const TrainingSet& data, double l2) {
  double loss = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double z = m.logit(data.x[i]);
    loss += softplus(z) - (data.y[i] == Label::phishing ? z : 0.0);
  }
  loss /= static_cast<double>(data.size());
  double norm = 0;
  for (double w : m.weights) norm += w * w;
  return loss + 0.5 * l2 * norm;
}

/// Gradient of logistic_loss with respect to (weights, bias).
inline LogisticModel logistic_gradient(const LogisticModel& m, const TrainingSet& data, double l2) {
  LogisticModel g;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = sigmoid(m.logit(data.x[i])) - (data.y[i] == Label::phishing ? 1.0 : 0.0);
    for (std::size_t j = 0; j < kFeatureCount; ++j) g.weights[j] += r * static_cast<double>(data.x[i].values[j]);
    g.bias += r;
  }
  const double n = static_cast<double>(data.size());
  for (std::size_t j = 0; j < kFeatureCount; ++j) g.weights[j] = g.weights[j] / n + l2 * m.weights[j];
  g.bias /= n;
  return g;
}

/// Full-batch gradient descent from zero weights.
inline LogisticModel train_logistic(const TrainingSet& data, double learning_rate, double l2, int epochs) {
  require_both_classes(data);
  LogisticModel m;
  for (int e = 0; e < epochs; ++e) {
    const LogisticModel g = logistic_gradient(m, data, l2);
    for (std::size_t j = 0; j < kFeatureCount; ++j) m.weights[j] -= learning_rate * g.weights[j];
    m.bias -= learning_rate * g.bias;
  }
  return m;
}

}  // namespace phishlens::ml
