#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "phishlens/ml/common.hpp"

namespace phishlens::ml {

using ClassCounts = std::array<std::uint32_t, 2>;

inline double gini(const ClassCounts& c) {
  const double n = static_cast<double>(c[0]) + c[1];
  if (n == 0) return 0;
  const double p0 = c[0] / n, p1 = c[1] / n;
  return 1 - p0 * p0 - p1 * p1;
}

/// Samples go left when x[feature] <= threshold.
struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0;
  std::int32_t left = -1, right = -1;
  ClassCounts counts{};

  bool is_leaf() const { return feature < 0; }
  // Ties vote phishing.
  Label vote() const { return counts[1] >= counts[0] ? Label::phishing : Label::legitimate; }

  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(const FeatureVector& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(static_cast<double>(x.values[static_cast<std::size_t>(n.feature)]) <= n.threshold
                                       ? n.left
                                       : n.right);
    }
    return nodes[i];
  }

  Label predict(const FeatureVector& x) const { return leaf_for(x).vote(); }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes[i].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
      }
    }
    return best;
  }

  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;

  /// Fraction of trees voting phishing.
  double score(const FeatureVector& x) const {
    std::size_t votes = 0;
    for (const auto& t : trees) votes += t.predict(x) == Label::phishing;
    return static_cast<double>(votes) / static_cast<double>(trees.size());
  }

  bool operator==(const ForestModel&) const = default;
};

struct Split {
  int feature = -1;
  double threshold = 0;
  double impurity = 0;  // size-weighted Gini of the two children
  ClassCounts left{}, right{};
};

namespace detail {

// Weighted child Gini times n equals n - (sum_sq_l / n_l + sum_sq_r / n_r), so
// a split is better when sum_sq_l * n_r + sum_sq_r * n_l over n_l * n_r is
// larger. Compared as exact integer fractions.
struct SplitScore {
  __int128 num = 0, den = 1;

  static SplitScore of(const ClassCounts& l, const ClassCounts& r) {
    const __int128 nl = static_cast<__int128>(l[0]) + l[1], nr = static_cast<__int128>(r[0]) + r[1];
    const __int128 sl = static_cast<__int128>(l[0]) * l[0] + static_cast<__int128>(l[1]) * l[1];
    const __int128 sr = static_cast<__int128>(r[0]) * r[0] + static_cast<__int128>(r[1]) * r[1];
    return {sl * nr + sr * nl, nl * nr};
  }

  bool better_than(const SplitScore& o) const { return num * o.den > o.num * den; }
};

inline double weighted_gini(const ClassCounts& l, const ClassCounts& r) {
  const double nl = static_cast<double>(l[0]) + l[1], nr = static_cast<double>(r[0]) + r[1];
  return (nl * gini(l) + nr * gini(r)) / (nl + nr);
}

}  // namespace detail

/// Lowest weighted-Gini split over the candidate features, trying midpoints
/// between consecutive distinct values. Ties keep the earlier candidate
/// feature, then the lower threshold. Empty when no candidate has two
/// distinct values in the node.
inline std::optional<Split> find_best_split(const TrainingSet& data, std::span<const std::size_t> indices,
                                            std::span<const int> features) {
  std::optional<Split> best;
  detail::SplitScore best_score;
  ClassCounts total{};
  for (auto i : indices) ++total[static_cast<std::size_t>(data.y[i])];

  std::vector<std::pair<int, int>> column;
  column.reserve(indices.size());
  for (int f : features) {
    column.clear();
    for (auto i : indices)
      column.emplace_back(data.x[i].values[static_cast<std::size_t>(f)], static_cast<int>(data.y[i]));
    std::sort(column.begin(), column.end());
    ClassCounts left{};
    for (std::size_t k = 0; k + 1 < column.size(); ++k) {
      ++left[static_cast<std::size_t>(column[k].second)];
      if (column[k].first == column[k + 1].first) continue;
      const ClassCounts right{total[0] - left[0], total[1] - left[1]};
      const auto score = detail::SplitScore::of(left, right);
      if (!best || score.better_than(best_score)) {
        best_score = score;
        best = Split{f, (column[k].first + column[k + 1].first) / 2.0, detail::weighted_gini(left, right), left, right};
      }
    }
  }
  return best;
}

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // 0 = unbounded
  std::size_t min_samples_split = 2;
  std::size_t features_per_split = 5;
  bool bootstrap = true;
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Reported for every internal decision while growing a tree.
struct SplitEvent {
  std::size_t tree = 0;
  std::vector<std::size_t> indices;
  std::vector<int> candidates;
  std::optional<Split> chosen;
};
using SplitObserver = std::function<void(const SplitEvent&)>;

inline std::uint64_t tree_seed(std::uint64_t seed, std::size_t tree) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tree) + 1));
}

inline DecisionTree grow_tree(const TrainingSet& data, const ForestParams& p, std::size_t tree_index,
                              const SplitObserver& observer = {}) {
  Rng rng(tree_seed(p.seed, tree_index));
  std::vector<std::size_t> sample(data.size());
  for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = p.bootstrap ? rng.below(data.size()) : i;

  DecisionTree tree;
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> indices;
    std::size_t depth;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, std::move(sample), 0});
  std::vector<int> order(kFeatureCount);

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    ClassCounts counts{};
    for (auto i : cur.indices) ++counts[static_cast<std::size_t>(data.y[i])];
    tree.nodes[cur.node].counts = counts;

    const bool pure = counts[0] == 0 || counts[1] == 0;
    const bool too_small = cur.indices.size() < p.min_samples_split;
    const bool too_deep = p.max_depth > 0 && cur.depth >= p.max_depth;
    if (pure || too_small || too_deep) continue;

    // Draw features in random order, skipping ones constant in this node,
    // until features_per_split usable candidates are collected.
    for (std::size_t j = 0; j < kFeatureCount; ++j) order[j] = static_cast<int>(j);
    rng.shuffle(order);
    std::vector<int> candidates;
    for (int f : order) {
      const auto first = data.x[cur.indices.front()].values[static_cast<std::size_t>(f)];
      const bool varies = std::any_of(cur.indices.begin(), cur.indices.end(), [&](std::size_t i) {
        return data.x[i].values[static_cast<std::size_t>(f)] != first;
      });
      if (!varies) continue;
      candidates.push_back(f);
      if (candidates.size() == p.features_per_split) break;
    }
    const auto split = find_best_split(data, cur.indices, candidates);
    if (observer) observer({tree_index, cur.indices, candidates, split});
    if (!split) continue;

    std::vector<std::size_t> left, right;
    for (auto i : cur.indices)
      (static_cast<double>(data.x[i].values[static_cast<std::size_t>(split->feature)]) <= split->threshold ? left : right)
          .push_back(i);
    const auto l = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[cur.node];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = l + 1;
    stack.push_back({static_cast<std::size_t>(l + 1), std::move(right), cur.depth + 1});
    stack.push_back({static_cast<std::size_t>(l), std::move(left), cur.depth + 1});
  }
  return tree;
}

/// Trees are grown in parallel; each tree's randomness depends only on the
/// seed and its index, so the result is independent of the thread count.
inline ForestModel train_forest(const TrainingSet& data, const ForestParams& p, const SplitObserver& observer = {}) {
  require_both_classes(data);
  ForestModel forest;
  forest.trees.resize(p.n_trees);
  std::size_t threads = p.threads ? p.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, p.n_trees);
  if (observer) threads = 1;
  if (threads <= 1) {
    for (std::size_t t = 0; t < p.n_trees; ++t) forest.trees[t] = grow_tree(data, p, t, observer);
    return forest;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < p.n_trees; t += threads) forest.trees[t] = grow_tree(data, p, t);
    });
  for (auto& th : pool) th.join();
  return forest;
}

}  // namespace phishlens::ml
