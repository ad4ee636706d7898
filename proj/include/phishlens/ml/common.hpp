#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "phishlens/dataset.hpp"
#include "phishlens/error.hpp"
#include "phishlens/feature_schema.hpp"

namespace phishlens::ml {

enum class ModelKind { naive_bayes, logistic, random_forest };

constexpr std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::naive_bayes: return "naive_bayes";
    case ModelKind::logistic: return "logistic";
    case ModelKind::random_forest: return "random_forest";
  }
  return "unknown";
}

/// Accepts the canonical names plus the short forms nb / lr / rf.
inline std::optional<ModelKind> model_kind_from_string(std::string_view s) {
  const std::string k = text::to_lower(s);
  if (k == "naive_bayes" || k == "nb" || k == "naive-bayes") return ModelKind::naive_bayes;
  if (k == "logistic" || k == "lr" || k == "logistic_regression") return ModelKind::logistic;
  if (k == "random_forest" || k == "rf" || k == "random-forest") return ModelKind::random_forest;
  return std::nullopt;
}

/// Display name used in report tables.
constexpr std::string_view display_name(ModelKind k) {
  switch (k) {
    case ModelKind::naive_bayes: return "Naive-Bayes";
    case ModelKind::logistic: return "Logistic Regression";
    case ModelKind::random_forest: return "Random Forest";
  }
  return "unknown";
}

using Hyperparams = std::map<std::string, double>;

// max_depth 0 means unbounded.
inline Hyperparams default_hyperparams(ModelKind kind) {
  switch (kind) {
    case ModelKind::naive_bayes: return {{"smoothing", 1.0}};
    case ModelKind::logistic: return {{"learning_rate", 0.1}, {"l2", 1e-3}, {"epochs", 500}};
    case ModelKind::random_forest:
      return {{"n_trees", 100}, {"max_depth", 0}, {"min_samples_split", 2}, {"features_per_split", 5}, {"bootstrap", 1}};
  }
  return {};
}

struct TrainConfig {
  ModelKind kind = ModelKind::random_forest;
  std::uint64_t seed = 42;
  // Overrides on top of default_hyperparams(kind).
  Hyperparams hyperparams;

  double param(const std::string& name) const {
    if (auto it = hyperparams.find(name); it != hyperparams.end()) return it->second;
    const auto defaults = default_hyperparams(kind);
    if (auto it = defaults.find(name); it != defaults.end()) return it->second;
    throw InvalidConfig("unknown hyperparameter " + name + " for " + std::string(to_string(kind)));
  }

  /// Defaults merged with overrides.
  Hyperparams resolved() const {
    Hyperparams out = default_hyperparams(kind);
    for (const auto& [k, v] : hyperparams) out[k] = v;
    return out;
  }

  bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& cfg) {
  const auto defaults = default_hyperparams(cfg.kind);
  for (const auto& [name, value] : cfg.hyperparams) {
    if (defaults.count(name) == 0)
      throw InvalidConfig("unknown hyperparameter " + name + " for " + std::string(to_string(cfg.kind)));
    if (!std::isfinite(value)) throw InvalidConfig(name + " must be finite");
  }
  auto whole = [&](const std::string& name, double min) {
    const double v = cfg.param(name);
    if (v != std::floor(v) || v < min) throw InvalidConfig(name + " must be an integer >= " + std::to_string(int(min)));
  };
  switch (cfg.kind) {
    case ModelKind::naive_bayes:
      if (!(cfg.param("smoothing") > 0)) throw InvalidConfig("smoothing must be > 0");
      break;
    case ModelKind::logistic:
      if (!(cfg.param("learning_rate") > 0)) throw InvalidConfig("learning_rate must be > 0");
      if (cfg.param("l2") < 0) throw InvalidConfig("l2 must be >= 0");
      whole("epochs", 1);
      break;
    case ModelKind::random_forest:
      whole("n_trees", 1);
      whole("max_depth", 0);
      whole("min_samples_split", 2);
      whole("features_per_split", 1);
      if (cfg.param("features_per_split") > static_cast<double>(kFeatureCount))
        throw InvalidConfig("features_per_split must be <= " + std::to_string(kFeatureCount));
      if (cfg.param("bootstrap") != 0 && cfg.param("bootstrap") != 1) throw InvalidConfig("bootstrap must be 0 or 1");
      break;
  }
}

/// Labeled feature vectors in training order.
struct TrainingSet {
  std::vector<FeatureVector> x;
  std::vector<Label> y;

  std::size_t size() const { return x.size(); }

  std::array<std::size_t, 2> class_counts() const {
    std::array<std::size_t, 2> c{};
    for (auto l : y) ++c[static_cast<std::size_t>(l)];
    return c;
  }

  static TrainingSet from_rows(const std::vector<FeatureRow>& rows) {
    TrainingSet set;
    set.x.reserve(rows.size());
    set.y.reserve(rows.size());
    for (const auto& row : rows) {
      if (!row.label) throw UnlabeledRow("row without label: " + row.url);
      validate(row.features);
      set.x.push_back(row.features);
      set.y.push_back(*row.label);
    }
    return set;
  }

  TrainingSet subset(const std::vector<std::size_t>& indices) const {
    TrainingSet s;
    s.x.reserve(indices.size());
    s.y.reserve(indices.size());
    for (auto i : indices) {
      s.x.push_back(x[i]);
      s.y.push_back(y[i]);
    }
    return s;
  }
};

inline void require_both_classes(const TrainingSet& data) {
  const auto c = data.class_counts();
  if (data.size() < 2 || c[0] == 0 || c[1] == 0)
    throw SingleClassData("training needs at least one row of each class (got " + std::to_string(c[0]) +
                          " legitimate, " + std::to_string(c[1]) + " phishing)");
}

// Deterministic randomness. Only the standardized engine output is used;
// bounded draws and shuffles are done here so results do not depend on the
// standard library's distribution implementations.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform in [0, n).
  std::size_t below(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Shortest text form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace phishlens::ml
