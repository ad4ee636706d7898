#pragma once

#include <cstddef>

#include "phishlens/feature_schema.hpp"

namespace phishlens::ml {

/// Binary classification metrics with phishing as the positive class.
/// Ratios whose denominator is zero are defined as 0.
struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  // Unweighted mean over both classes, and the support-weighted mean.
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  static Metrics from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    auto f1_of = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const double n = static_cast<double>(tp + fp + tn + fn);
    m.accuracy = ratio(static_cast<double>(tp + tn), n);
    m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.f1 = f1_of(m.precision, m.recall);

    const double neg_precision = ratio(static_cast<double>(tn), static_cast<double>(tn + fn));
    const double neg_recall = ratio(static_cast<double>(tn), static_cast<double>(tn + fp));
    const double neg_f1 = f1_of(neg_precision, neg_recall);
    m.macro_precision = (m.precision + neg_precision) / 2;
    m.macro_recall = (m.recall + neg_recall) / 2;
    m.macro_f1 = (m.f1 + neg_f1) / 2;

    const double pos_support = static_cast<double>(tp + fn), neg_support = static_cast<double>(tn + fp);
    m.weighted_precision = ratio(m.precision * pos_support + neg_precision * neg_support, n);
    m.weighted_recall = ratio(m.recall * pos_support + neg_recall * neg_support, n);
    m.weighted_f1 = ratio(m.f1 * pos_support + neg_f1 * neg_support, n);
    return m;
  }

  void add(Label truth, Label predicted) {
    if (truth == Label::phishing) {
      predicted == Label::phishing ? ++tp : ++fn;
    } else {
      predicted == Label::phishing ? ++fp : ++tn;
    }
  }

  /// Recomputes every ratio from the confusion counts.
  Metrics finalized() const { return from_counts(tp, fp, tn, fn); }
};

}  // namespace phishlens::ml
