#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "phishlens/csv.hpp"
#include "phishlens/ml/model.hpp"

namespace phishlens::ml {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold split. Each class is shuffled under the seed, then the
/// classes are dealt round-robin into folds one after the other, so fold
/// sizes differ by at most one overall and per class. With k > n some test
/// folds are empty.
inline std::vector<Fold> k_fold_split(const std::vector<Label>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidConfig("k must be >= 2");
  Rng rng(seed);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t pos = 0;
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (auto i : members) fold_of[i] = pos++ % k;
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
  return folds;
}

/// Unstratified variant over row indices 0..n-1.
inline std::vector<Fold> k_fold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  return k_fold_split(std::vector<Label>(n, Label::legitimate), k, seed);
}

inline constexpr std::array<std::string_view, 8> kSummaryMetrics = {
    "accuracy", "precision", "recall", "f1", "macro_precision", "macro_recall", "macro_f1", "weighted_f1"};

inline double metric_value(const Metrics& m, std::string_view name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "f1") return m.f1;
  if (name == "macro_precision") return m.macro_precision;
  if (name == "macro_recall") return m.macro_recall;
  if (name == "macro_f1") return m.macro_f1;
  if (name == "weighted_f1") return m.weighted_f1;
  throw std::invalid_argument("unknown metric " + std::string(name));
}

struct CvSummary {
  std::vector<Metrics> folds;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;  // population standard deviation across folds
};

inline CvSummary summarize(std::vector<Metrics> folds) {
  CvSummary s;
  s.folds = std::move(folds);
  const double n = static_cast<double>(s.folds.size());
  for (auto name : kSummaryMetrics) {
    double sum = 0;
    for (const auto& m : s.folds) sum += metric_value(m, name);
    const double mean = n > 0 ? sum / n : 0;
    double var = 0;
    for (const auto& m : s.folds) var += (metric_value(m, name) - mean) * (metric_value(m, name) - mean);
    s.mean[std::string(name)] = mean;
    s.stddev[std::string(name)] = n > 0 ? std::sqrt(var / n) : 0;
  }
  return s;
}

/// k-fold cross-validation; folds with an empty test set are skipped.
inline CvSummary cross_validate(const TrainingSet& data, const TrainConfig& cfg, std::size_t k, std::uint64_t seed) {
  validate(cfg);
  require_both_classes(data);
  std::vector<Metrics> results;
  for (const auto& fold : k_fold_split(data.y, k, seed)) {
    if (fold.test.empty()) continue;
    const auto model = train(data.subset(fold.train), cfg);
    results.push_back(evaluate(model, data.subset(fold.test)));
  }
  return summarize(std::move(results));
}

/// Ordered axes; the first axis varies slowest when expanded.
using Grid = std::vector<std::pair<std::string, std::vector<double>>>;

inline Grid default_grid(ModelKind kind) {
  switch (kind) {
    case ModelKind::naive_bayes: return {{"smoothing", {0.5, 1.0, 2.0}}};
    case ModelKind::logistic: return {{"learning_rate", {0.05, 0.1, 0.5}}, {"l2", {0.0, 1e-3, 1e-2}}};
    case ModelKind::random_forest: return {{"n_trees", {50, 100, 200}}, {"max_depth", {8, 16, 0}}};
  }
  return {};
}

inline std::vector<Hyperparams> expand_grid(const Grid& grid) {
  std::vector<Hyperparams> points{{}};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw InvalidConfig("grid axis " + name + " has no values");
    std::vector<Hyperparams> next;
    for (const auto& p : points)
      for (double v : values) {
        auto q = p;
        q[name] = v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

struct GridRow {
  Hyperparams point;
  CvSummary cv;
};

struct GridResult {
  ModelKind kind = ModelKind::random_forest;
  std::vector<std::string> axes;
  std::vector<GridRow> rows;  // in grid order
  std::size_t best_index = 0;
  TrainConfig best;

  const GridRow& best_row() const { return rows[best_index]; }
};

/// Evaluates every grid point by k-fold CV (same folds for all points) and
/// picks the highest mean accuracy, then the higher mean f1, then the first
/// point in grid order.
inline GridResult grid_search(const TrainingSet& data, ModelKind kind, const Grid& grid, std::size_t k,
                              std::uint64_t seed, const Hyperparams& base = {}) {
  GridResult result;
  result.kind = kind;
  for (const auto& [name, values] : grid) result.axes.push_back(name);
  for (const auto& point : expand_grid(grid)) {
    TrainConfig cfg{kind, seed, base};
    for (const auto& [name, v] : point) cfg.hyperparams[name] = v;
    result.rows.push_back({point, cross_validate(data, cfg, k, seed)});
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& cand = result.rows[i].cv.mean;
    const auto& best = result.rows[result.best_index].cv.mean;
    if (cand.at("accuracy") > best.at("accuracy") ||
        (cand.at("accuracy") == best.at("accuracy") && cand.at("f1") > best.at("f1")))
      result.best_index = i;
  }
  result.best = TrainConfig{kind, seed, base};
  for (const auto& [name, v] : result.best_row().point) result.best.hyperparams[name] = v;
  return result;
}

/// CSV: Classifier, one column per grid axis, mean and std of each metric,
/// and a best flag.
inline void write_grid_report(std::ostream& out, const GridResult& r) {
  std::vector<std::string> header{"Classifier"};
  for (const auto& a : r.axes) header.push_back(a);
  for (const char* h : {"Accuracy", "Precision", "Recall", "F1-score", "Accuracy_std", "Precision_std",
                        "Recall_std", "F1_std", "Macro_Precision", "Macro_Recall", "Macro_F1", "Weighted_F1", "best"})
    header.emplace_back(h);
  out << csv::join(header) << '\n';
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    std::vector<std::string> cells{std::string(display_name(r.kind))};
    for (const auto& a : r.axes) cells.push_back(format_double(row.point.at(a)));
    for (const char* m : {"accuracy", "precision", "recall", "f1"}) cells.push_back(format_double(row.cv.mean.at(m)));
    for (const char* m : {"accuracy", "precision", "recall", "f1"}) cells.push_back(format_double(row.cv.stddev.at(m)));
    for (const char* m : {"macro_precision", "macro_recall", "macro_f1", "weighted_f1"})
      cells.push_back(format_double(row.cv.mean.at(m)));
    cells.push_back(i == r.best_index ? "1" : "0");
    out << csv::join(cells) << '\n';
  }
}

}  // namespace phishlens::ml
