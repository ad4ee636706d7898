#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "phishlens/ml/common.hpp"

namespace phishlens::ml {

/// Categorical naive Bayes. Binary and ternary features use their value as
/// the category; URL_Depth is bucketed into {0, 1, 2, 3+}.
struct NaiveBayesModel {
  static constexpr std::size_t kMaxCategories = 4;

  std::array<double, 2> log_prior{};
  // [feature][class][category]; unused categories stay 0.
  std::array<std::array<std::array<double, kMaxCategories>, 2>, kFeatureCount> log_likelihood{};

  static std::size_t category_count(Feature f) {
    switch (domain_of(f)) {
      case FeatureDomain::Binary: return 2;
      case FeatureDomain::Ternary: return 3;
      case FeatureDomain::Count: return 4;
    }
    return 0;
  }

  static std::size_t category_of(Feature f, FeatureValue v) {
    switch (domain_of(f)) {
      case FeatureDomain::Binary: return static_cast<std::size_t>(v);
      case FeatureDomain::Ternary: return static_cast<std::size_t>(v + 1);
      case FeatureDomain::Count: return static_cast<std::size_t>(std::min(v, 3));
    }
    return 0;
  }

  std::array<double, 2> log_joint(const FeatureVector& x) const {
    std::array<double, 2> lj = log_prior;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const std::size_t cat = category_of(static_cast<Feature>(j), x.values[j]);
      for (std::size_t c = 0; c < 2; ++c) lj[c] += log_likelihood[j][c][cat];
    }
    return lj;
  }

  /// P(legitimate | x), P(phishing | x).
  std::array<double, 2> posteriors(const FeatureVector& x) const {
    const auto lj = log_joint(x);
    const double m = std::max(lj[0], lj[1]);
    const double e0 = std::exp(lj[0] - m), e1 = std::exp(lj[1] - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  double score(const FeatureVector& x) const { return posteriors(x)[1]; }

  bool operator==(const NaiveBayesModel&) const = default;
};

inline NaiveBayesModel train_naive_bayes(const TrainingSet& data, double smoothing) {
  require_both_classes(data);
  const auto n_c = data.class_counts();
  NaiveBayesModel m;
  for (std::size_t c = 0; c < 2; ++c)
    m.log_prior[c] = std::log(static_cast<double>(n_c[c]) / static_cast<double>(data.size()));

  std::array<std::array<std::array<std::size_t, NaiveBayesModel::kMaxCategories>, 2>, kFeatureCount> counts{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = static_cast<std::size_t>(data.y[i]);
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      ++counts[j][c][NaiveBayesModel::category_of(static_cast<Feature>(j), data.x[i].values[j])];
  }
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    const std::size_t k = NaiveBayesModel::category_count(static_cast<Feature>(j));
    for (std::size_t c = 0; c < 2; ++c) {
      const double denom = static_cast<double>(n_c[c]) + smoothing * static_cast<double>(k);
      for (std::size_t cat = 0; cat < k; ++cat)
        m.log_likelihood[j][c][cat] = std::log((static_cast<double>(counts[j][c][cat]) + smoothing) / denom);
    }
  }
  return m;
}

}  // namespace phishlens::ml
