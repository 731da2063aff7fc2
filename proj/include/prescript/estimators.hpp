#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "prescript/errors.hpp"
#include "prescript/model.hpp"
#include "prescript/rng.hpp"

namespace prescript::estimators {

enum class Kind { kKnn, kForest };

struct EstimatorSpec {
  Kind kind = Kind::kForest;
  int k = 10;          // knn only
  int n_trees = 100;   // forest defaults sized for N ~ a few hundred
  int max_depth = 6;
  int min_leaf = 5;
};

/// Binary CART node; `feature < 0` marks a leaf whose `members` list the
/// original training indices routed to it.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<int> members;
};

struct Tree {
  std::vector<TreeNode> nodes;

  int route(const CovariateVector& zeta) const {
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
      const TreeNode& current = nodes[static_cast<std::size_t>(node)];
      node = zeta[static_cast<std::size_t>(current.feature)] <= current.threshold ? current.left
                                                                                  : current.right;
    }
    return node;
  }
};

/// Fitted conditional-distribution estimator. Produces, for a query context,
/// probability weights over the full pool of training cost scenarios;
/// zero-weight scenarios are kept so indices stay stable.
struct WeightModel {
  Kind kind = Kind::kKnn;
  int k = 1;
  std::uint64_t seed = 0;
  std::vector<CovariateVector> contexts;
  DiscreteConditional::SupportPtr scenario_pool;
  std::vector<Tree> trees;

  std::size_t train_size() const { return contexts.size(); }
};

namespace detail {

struct SplitScan {
  int feature = -1;
  double threshold = 0.0;
  double children_sse = 0.0;
};

/// Sum over cost coordinates of within-child squared deviation from the child
/// mean, for every admissible threshold of one feature; returns the best.
inline bool scan_feature(const Dataset& data, const std::vector<int>& points, int feature,
                         int min_leaf, double& best_sse, SplitScan& best) {
  const std::size_t count = points.size();
  std::vector<int> order(points);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = data.pairs[static_cast<std::size_t>(a)].first[static_cast<std::size_t>(feature)];
    const double vb = data.pairs[static_cast<std::size_t>(b)].first[static_cast<std::size_t>(feature)];
    if (va != vb) return va < vb;
    return a < b;
  });

  const std::size_t q = data.pairs.front().second.size();
  std::vector<double> left_sum(q, 0.0);
  std::vector<double> total_sum(q, 0.0);
  double left_sumsq = 0.0;
  double total_sumsq = 0.0;
  for (int idx : order) {
    const CostVector& cost = data.pairs[static_cast<std::size_t>(idx)].second;
    for (std::size_t c = 0; c < q; ++c) {
      total_sum[c] += cost[c];
      total_sumsq += cost[c] * cost[c];
    }
  }

  bool improved = false;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const int idx = order[i];
    const CostVector& cost = data.pairs[static_cast<std::size_t>(idx)].second;
    for (std::size_t c = 0; c < q; ++c) {
      left_sum[c] += cost[c];
      left_sumsq += cost[c] * cost[c];
    }
    const double lo = data.pairs[static_cast<std::size_t>(order[i])]
                          .first[static_cast<std::size_t>(feature)];
    const double hi = data.pairs[static_cast<std::size_t>(order[i + 1])]
                          .first[static_cast<std::size_t>(feature)];
    if (hi <= lo) continue;  // duplicate value, not a valid cut
    const std::size_t n_left = i + 1;
    const std::size_t n_right = count - n_left;
    if (n_left < static_cast<std::size_t>(min_leaf) || n_right < static_cast<std::size_t>(min_leaf))
      continue;
    double sse = left_sumsq + (total_sumsq - left_sumsq);
    for (std::size_t c = 0; c < q; ++c) {
      const double right_sum = total_sum[c] - left_sum[c];
      sse -= left_sum[c] * left_sum[c] / static_cast<double>(n_left);
      sse -= right_sum * right_sum / static_cast<double>(n_right);
    }
    if (sse < best_sse - 1e-12) {
      best_sse = sse;
      best.feature = feature;
      best.threshold = 0.5 * (lo + hi);
      best.children_sse = sse;
      improved = true;
    }
  }
  return improved;
}

inline double node_sse(const Dataset& data, const std::vector<int>& points) {
  const std::size_t q = data.pairs.front().second.size();
  std::vector<double> sum(q, 0.0);
  double sumsq = 0.0;
  for (int idx : points) {
    const CostVector& cost = data.pairs[static_cast<std::size_t>(idx)].second;
    for (std::size_t c = 0; c < q; ++c) {
      sum[c] += cost[c];
      sumsq += cost[c] * cost[c];
    }
  }
  double sse = sumsq;
  for (std::size_t c = 0; c < q; ++c) sse -= sum[c] * sum[c] / static_cast<double>(points.size());
  return sse;
}

inline int build_node(const Dataset& data, const EstimatorSpec& spec, Rng& rng, Tree& tree,
                      std::vector<int> points, int depth) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();

  const std::size_t n_features = data.pairs.front().first.size();
  const bool can_split = depth < spec.max_depth &&
                         points.size() >= 2 * static_cast<std::size_t>(spec.min_leaf);
  if (can_split) {
    // Feature subsample of size ceil(sqrt(p)), drawn without replacement.
    const std::size_t subset =
        std::min(n_features, static_cast<std::size_t>(
                                 std::ceil(std::sqrt(static_cast<double>(n_features)))));
    std::vector<int> features(n_features);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i < subset; ++i) {
      const std::size_t j = i + rng.uniform_index(n_features - i);
      std::swap(features[i], features[j]);
    }

    double best_sse = node_sse(data, points) - 1e-12;
    SplitScan best;
    for (std::size_t i = 0; i < subset; ++i)
      scan_feature(data, points, features[i], spec.min_leaf, best_sse, best);

    if (best.feature >= 0) {
      std::vector<int> left_points, right_points;
      for (int idx : points) {
        const double v = data.pairs[static_cast<std::size_t>(idx)]
                             .first[static_cast<std::size_t>(best.feature)];
        (v <= best.threshold ? left_points : right_points).push_back(idx);
      }
      const int left = build_node(data, spec, rng, tree, std::move(left_points), depth + 1);
      const int right = build_node(data, spec, rng, tree, std::move(right_points), depth + 1);
      tree.nodes[static_cast<std::size_t>(node_id)].feature = best.feature;
      tree.nodes[static_cast<std::size_t>(node_id)].threshold = best.threshold;
      tree.nodes[static_cast<std::size_t>(node_id)].left = left;
      tree.nodes[static_cast<std::size_t>(node_id)].right = right;
      return node_id;
    }
  }
  return node_id;  // leaf; members are filled by routing afterwards
}

}  // namespace detail

/// Fits a weight model on the training set. Forest trees are trained on
/// bootstrap resamples with per-split feature subsampling and a
/// variance-reduction criterion summed over the cost coordinates; leaf
/// membership is then rebuilt by routing every original training point, so
/// each index lands in exactly one leaf per tree. Deterministic given `seed`.
inline WeightModel fit(const Dataset& dataset, const EstimatorSpec& spec, std::uint64_t seed) {
  dataset.validate();
  const std::size_t n = dataset.size();

  WeightModel model;
  model.kind = spec.kind;
  model.seed = seed;
  model.contexts.reserve(n);
  for (const auto& pair : dataset.pairs) model.contexts.push_back(pair.first);
  model.scenario_pool = std::make_shared<const std::vector<CostVector>>(dataset.costs());

  if (spec.kind == Kind::kKnn) {
    if (spec.k < 1 || static_cast<std::size_t>(spec.k) > n)
      throw InvalidInput("knn needs 1 <= k <= training size");
    model.k = spec.k;
    return model;
  }

  if (spec.n_trees < 1) throw InvalidInput("forest needs at least one tree");
  if (spec.max_depth < 0 || spec.min_leaf < 1) throw InvalidInput("invalid forest shape");

  model.trees.resize(static_cast<std::size_t>(spec.n_trees));
  for (int t = 0; t < spec.n_trees; ++t) {
    Rng rng(seed_chain(seed, {0xf0u, static_cast<std::uint64_t>(t)}));
    std::vector<int> bootstrap(n);
    for (std::size_t i = 0; i < n; ++i) bootstrap[i] = static_cast<int>(rng.uniform_index(n));
    std::sort(bootstrap.begin(), bootstrap.end());

    Tree& tree = model.trees[static_cast<std::size_t>(t)];
    detail::build_node(dataset, spec, rng, tree, std::move(bootstrap), 0);

    for (std::size_t i = 0; i < n; ++i) {
      const int leaf = tree.route(dataset.pairs[i].first);
      tree.nodes[static_cast<std::size_t>(leaf)].members.push_back(static_cast<int>(i));
    }
  }
  return model;
}

/// Conditional distribution of the cost scenarios given a query context.
///
/// knn: mass 1/k on each of the k nearest training points (Euclidean
/// distance, smaller index wins ties). forest: the leaf-membership weights
/// w_i = (1/T) sum_t [i in leaf_t(zeta)] / |leaf_t(zeta)|.
inline DiscreteConditional weights(const WeightModel& model, const CovariateVector& zeta) {
  const std::size_t n = model.train_size();
  if (n == 0) throw InvalidInput("weight model is empty");
  if (zeta.size() != model.contexts.front().size())
    throw InvalidInput("query context dimension mismatch");

  std::vector<double> w(n, 0.0);
  if (model.kind == Kind::kKnn) {
    std::vector<std::pair<double, int>> by_distance(n);
    for (std::size_t i = 0; i < n; ++i) {
      double dist = 0.0;
      for (std::size_t f = 0; f < zeta.size(); ++f) {
        const double diff = zeta[f] - model.contexts[i][f];
        dist += diff * diff;
      }
      by_distance[i] = {dist, static_cast<int>(i)};
    }
    std::sort(by_distance.begin(), by_distance.end());
    for (int i = 0; i < model.k; ++i)
      w[static_cast<std::size_t>(by_distance[static_cast<std::size_t>(i)].second)] =
          1.0 / static_cast<double>(model.k);
  } else {
    const double tree_share = 1.0 / static_cast<double>(model.trees.size());
    for (const Tree& tree : model.trees) {
      const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.route(zeta))];
      const double share = tree_share / static_cast<double>(leaf.members.size());
      for (int idx : leaf.members) w[static_cast<std::size_t>(idx)] += share;
    }
  }

  // Exact renormalization guards against accumulated rounding.
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return DiscreteConditional(model.scenario_pool, std::move(w));
}

namespace detail {

inline nlohmann::json tree_node_to_json(const Tree& tree, int node_id) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
  if (node.feature < 0) return {{"members", node.members}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"left", tree_node_to_json(tree, node.left)},
          {"right", tree_node_to_json(tree, node.right)}};
}

inline int tree_node_from_json(const nlohmann::json& j, Tree& tree) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("members")) {
    tree.nodes[static_cast<std::size_t>(node_id)].members = j.at("members").get<std::vector<int>>();
    return node_id;
  }
  const int feature = j.at("feature").get<int>();
  const double threshold = j.at("threshold").get<double>();
  const int left = tree_node_from_json(j.at("left"), tree);
  const int right = tree_node_from_json(j.at("right"), tree);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return node_id;
}

}  // namespace detail

inline void save_model(const WeightModel& model, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = model.kind == Kind::kKnn ? "knn" : "forest";
  j["k"] = model.k;
  j["seed"] = model.seed;
  j["contexts"] = model.contexts;
  j["scenarios"] = *model.scenario_pool;
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : model.trees) trees.push_back(detail::tree_node_to_json(tree, 0));
  j["trees"] = std::move(trees);
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model file: " + path);
  out << j.dump() << "\n";
}

inline WeightModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse model file " + path + ": " + e.what());
  }
  if (j.value("version", 0) != 1) throw InvalidInput("unsupported model file version");
  WeightModel model;
  model.kind = j.at("kind").get<std::string>() == "knn" ? Kind::kKnn : Kind::kForest;
  model.k = j.at("k").get<int>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.contexts = j.at("contexts").get<std::vector<CovariateVector>>();
  model.scenario_pool = std::make_shared<const std::vector<CostVector>>(
      j.at("scenarios").get<std::vector<CostVector>>());
  for (const auto& tree_json : j.at("trees")) {
    Tree tree;
    detail::tree_node_from_json(tree_json, tree);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace prescript::estimators
