#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "prescript/errors.hpp"

namespace prescript {

/// Arc travel times, indexed by the arc order of the owning graph.
using CostVector = std::vector<double>;

/// Covariate (side information) vector.
using CovariateVector = std::vector<double>;

namespace detail {

inline bool all_finite(const std::vector<double>& values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

/// Directed graph with a fixed origin/destination pair.
///
/// Arc ids are dense 0..|A|-1 in the order of the `arcs` list; every cost
/// vector in the artifact indexes arcs in exactly that order.
struct DirectedGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> arcs;  // (tail, head)
  int origin = 0;
  int destination = 0;

  std::size_t arc_count() const { return arcs.size(); }

  /// Checks structural invariants: ids in range, no self loops, origin !=
  /// destination, and every node both reachable from the origin and able to
  /// reach the destination. Throws InvalidInput on the first violation.
  void validate() const {
    if (node_count <= 1) throw InvalidInput("graph needs at least two nodes");
    if (origin == destination) throw InvalidInput("origin equals destination");
    if (origin < 0 || origin >= node_count || destination < 0 || destination >= node_count)
      throw InvalidInput("origin/destination out of range");
    if (arcs.empty()) throw InvalidInput("graph has no arcs");
    for (const auto& [tail, head] : arcs) {
      if (tail < 0 || tail >= node_count || head < 0 || head >= node_count)
        throw InvalidInput("arc endpoint out of range");
      if (tail == head) throw InvalidInput("self loops are not allowed");
    }
    const auto reach = [&](int start, bool forward) {
      std::vector<char> seen(static_cast<std::size_t>(node_count), 0);
      std::vector<int> stack{start};
      seen[static_cast<std::size_t>(start)] = 1;
      while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        for (const auto& [tail, head] : arcs) {
          const int from = forward ? tail : head;
          const int to = forward ? head : tail;
          if (from == node && !seen[static_cast<std::size_t>(to)]) {
            seen[static_cast<std::size_t>(to)] = 1;
            stack.push_back(to);
          }
        }
      }
      return seen;
    };
    const auto from_origin = reach(origin, true);
    const auto to_destination = reach(destination, false);
    for (int v = 0; v < node_count; ++v) {
      if (!from_origin[static_cast<std::size_t>(v)])
        throw InvalidInput("node " + std::to_string(v) + " unreachable from origin");
      if (!to_destination[static_cast<std::size_t>(v)])
        throw InvalidInput("node " + std::to_string(v) + " cannot reach destination");
    }
  }
};

enum class DatasetRole { kTrain, kValidation, kTest };

/// Paired covariate/cost observations with homogeneous dimensions.
struct Dataset {
  std::vector<std::pair<CovariateVector, CostVector>> pairs;
  DatasetRole role = DatasetRole::kTrain;

  std::size_t size() const { return pairs.size(); }

  void validate() const {
    if (pairs.empty()) throw InvalidInput("dataset is empty");
    const std::size_t n_zeta = pairs.front().first.size();
    const std::size_t n_xi = pairs.front().second.size();
    for (const auto& [zeta, xi] : pairs) {
      if (zeta.size() != n_zeta || xi.size() != n_xi)
        throw InvalidInput("dataset has inhomogeneous dimensions");
      if (!detail::all_finite(zeta) || !detail::all_finite(xi))
        throw InvalidInput("dataset contains non-finite values");
      for (double c : xi)
        if (c < 0.0) throw InvalidInput("negative cost entry");
    }
  }

  std::vector<CostVector> costs() const {
    std::vector<CostVector> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.second);
    return out;
  }
};

/// Probability weights over a shared pool of cost scenarios.
///
/// The support is shared (not copied) between all conditionals built from the
/// same training set, so scenario indices stay globally stable; zero-weight
/// scenarios are retained for the same reason.
class DiscreteConditional {
 public:
  using SupportPtr = std::shared_ptr<const std::vector<CostVector>>;

  DiscreteConditional() = default;

  DiscreteConditional(SupportPtr support, std::vector<double> weights)
      : support_(std::move(support)), weights_(std::move(weights)) {
    validate();
  }

  DiscreteConditional(std::vector<CostVector> support, std::vector<double> weights)
      : DiscreteConditional(std::make_shared<const std::vector<CostVector>>(std::move(support)),
                            std::move(weights)) {}

  const std::vector<CostVector>& support() const { return *support_; }
  SupportPtr support_ptr() const { return support_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }

  /// Weighted average cost vector; the objective of the plain CSO problem.
  CostVector mean_cost() const {
    CostVector mean(support().front().size(), 0.0);
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] == 0.0) continue;
      const CostVector& xi = support()[i];
      for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += weights_[i] * xi[a];
    }
    return mean;
  }

 private:
  void validate() const {
    if (!support_ || support_->empty()) throw InvalidInput("conditional has empty support");
    if (weights_.size() != support_->size())
      throw InvalidInput("conditional weights and support lengths differ");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw InvalidInput("conditional weight is negative or NaN");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("conditional weights do not sum to 1");
  }

  SupportPtr support_;
  std::vector<double> weights_;
};

/// Joint distribution over contexts and cost scenarios: an empirical marginal
/// over contexts composed with one conditional per context.
struct JointModel {
  std::vector<CovariateVector> contexts;
  std::vector<double> context_weights;
  std::vector<DiscreteConditional> conditionals;

  void validate() const {
    if (contexts.empty()) throw InvalidInput("joint model has no contexts");
    if (context_weights.size() != contexts.size() || conditionals.size() != contexts.size())
      throw InvalidInput("joint model has mismatched lengths");
    double total = 0.0;
    for (double w : context_weights) {
      if (!(w >= 0.0)) throw InvalidInput("context weight is negative or NaN");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("context weights do not sum to 1");
  }
};

/// A (possibly fractional) unit flow from origin to destination.
struct Decision {
  std::vector<double> flow;
  bool binary = false;
};

/// Inner product of a decision with realized arc costs.
inline double evaluate_cost(const Decision& decision, const CostVector& xi) {
  if (decision.flow.size() != xi.size())
    throw InvalidInput("decision/cost dimension mismatch: " + std::to_string(decision.flow.size()) +
                       " vs " + std::to_string(xi.size()));
  double total = 0.0;
  for (std::size_t a = 0; a < xi.size(); ++a) total += decision.flow[a] * xi[a];
  return total;
}

/// Maximum absolute violation of the unit-flow polytope constraints:
/// flow balance at every node plus the 0 <= x <= 1 variable bounds.
/// Zero for feasible decisions.
inline double feasibility_residual(const Decision& decision, const DirectedGraph& graph) {
  if (decision.flow.size() != graph.arc_count())
    throw InvalidInput("decision/graph dimension mismatch");
  double worst = 0.0;
  std::vector<double> balance(static_cast<std::size_t>(graph.node_count), 0.0);
  for (std::size_t a = 0; a < graph.arcs.size(); ++a) {
    const double x = decision.flow[a];
    worst = std::max(worst, std::max(-x, x - 1.0));
    balance[static_cast<std::size_t>(graph.arcs[a].first)] += x;
    balance[static_cast<std::size_t>(graph.arcs[a].second)] -= x;
  }
  for (int v = 0; v < graph.node_count; ++v) {
    double target = 0.0;
    if (v == graph.origin) target = 1.0;
    if (v == graph.destination) target = -1.0;
    worst = std::max(worst, std::abs(balance[static_cast<std::size_t>(v)] - target));
  }
  return worst;
}

/// Per-context decisions with a guaranteed-feasible fallback for contexts the
/// table has never seen.
struct PolicyTable {
  std::map<int, Decision> entries;
  Decision fallback;

  const Decision& lookup(int context_index) const {
    const auto it = entries.find(context_index);
    return it == entries.end() ? fallback : it->second;
  }
};

}  // namespace prescript
