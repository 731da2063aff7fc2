#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "prescript/errors.hpp"

namespace prescript::metrics {

/// Per-observation costs of the evaluated policy, the static benchmark, and
/// the fully anticipative (hindsight) decisions.
struct CostTriple {
  std::vector<double> policy_costs;
  std::vector<double> benchmark_costs;
  std::vector<double> hindsight_costs;

  void validate() const {
    if (policy_costs.empty()) throw InvalidInput("cost triple is empty");
    if (benchmark_costs.size() != policy_costs.size() ||
        hindsight_costs.size() != policy_costs.size())
      throw InvalidInput("cost triple length mismatch");
    for (std::size_t i = 0; i < policy_costs.size(); ++i) {
      if (hindsight_costs[i] >
          std::min(policy_costs[i], benchmark_costs[i]) + 1e-7 * (1.0 + std::abs(hindsight_costs[i])))
        throw InvalidInput("hindsight cost exceeds a policy cost");
    }
  }
};

namespace detail {

inline double mean(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace detail

/// Prescriptiveness competitive ratio of the policy against the benchmark:
///
///   1 - (E[policy] - E[hindsight]) / (E[benchmark] - E[hindsight])
///
/// when the denominator is positive; 1 when both the benchmark and the policy
/// already match the hindsight expectation; -infinity otherwise. "Zero" is
/// decided against tau = 1e-9 * (1 + |E[hindsight]|), since the exact-zero
/// case of the definition never occurs verbatim in floating point.
inline double pcr(const CostTriple& triple) {
  if (triple.policy_costs.empty()) throw InvalidInput("cost triple is empty");
  if (triple.benchmark_costs.size() != triple.policy_costs.size() ||
      triple.hindsight_costs.size() != triple.policy_costs.size())
    throw InvalidInput("cost triple length mismatch");

  const double policy = detail::mean(triple.policy_costs);
  const double benchmark = detail::mean(triple.benchmark_costs);
  const double hindsight = detail::mean(triple.hindsight_costs);
  const double tau = 1e-9 * (1.0 + std::abs(hindsight));

  const double denominator = benchmark - hindsight;
  const double numerator = policy - hindsight;
  if (denominator > tau) return 1.0 - numerator / denominator;
  if (std::abs(denominator) <= tau && std::abs(numerator) <= tau) return 1.0;
  return -std::numeric_limits<double>::infinity();
}

}  // namespace prescript::metrics
