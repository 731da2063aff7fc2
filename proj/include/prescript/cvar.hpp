#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "prescript/errors.hpp"

namespace prescript::cvar {

/// Size parameter of the capped-probability ambiguity set: admissible
/// conditional weights satisfy q_i <= cap * p_i with cap = 1/(1-alpha).
///
/// alpha = 0 collapses the set to the nominal distribution; alpha -> 1 makes
/// every distribution on the nominal support admissible. alpha = 1 itself is
/// excluded (infinite cap); callers that want the max-over-support behaviour
/// use `clamped`, which maps near-one requests onto a finite cap that already
/// saturates any support.
class AmbiguityLevel {
 public:
  explicit AmbiguityLevel(double alpha) : alpha_(alpha) {
    if (!(alpha >= 0.0) || alpha >= 1.0) throw InvalidInput("alpha must lie in [0, 1)");
  }

  static AmbiguityLevel clamped(double alpha) {
    return AmbiguityLevel(std::min(std::max(alpha, 0.0), 1.0 - 1e-9));
  }

  double alpha() const { return alpha_; }
  double cap() const { return 1.0 / (1.0 - alpha_); }

 private:
  double alpha_;
};

/// Worst-case expectation value together with a distribution attaining it.
struct WorstCase {
  double value = 0.0;
  std::vector<double> distribution;
};

/// Maximum of sum_i q_i * values_i over {q >= 0, sum q = 1, q_i <= cap * p_i}.
///
/// Computed by the greedy fill: visit scenarios by decreasing value and give
/// each its cap until the unit mass is spent; this is the discrete CVaR at
/// level alpha of `values` under `nominal`. Ties in the ordering are broken
/// by scenario index, so the maximizer returned is unique and deterministic.
inline WorstCase worst_case_expectation(const std::vector<double>& values,
                                        const std::vector<double>& nominal,
                                        const AmbiguityLevel& level) {
  if (values.empty()) throw InvalidInput("worst-case expectation over empty support");
  if (values.size() != nominal.size())
    throw InvalidInput("values/weights length mismatch in worst-case expectation");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });

  WorstCase result;
  result.distribution.assign(values.size(), 0.0);
  double remaining = 1.0;
  for (std::size_t idx : order) {
    if (remaining <= 0.0) break;
    const double take = std::min(remaining, level.cap() * nominal[idx]);
    if (take <= 0.0) continue;
    result.distribution[idx] = take;
    result.value += take * values[idx];
    remaining -= take;
  }
  if (remaining > 1e-9) throw InvalidInput("nominal weights sum to less than 1");
  return result;
}

/// The Rockafellar-Uryasev objective t + 1/(1-alpha) * E_p[(values - t)^+]
/// evaluated at the probe t. Its infimum over t equals the worst-case
/// expectation above.
inline double cvar_from_infimum(const std::vector<double>& values,
                                const std::vector<double>& nominal, const AmbiguityLevel& level,
                                double probe) {
  if (values.empty()) throw InvalidInput("cvar_from_infimum over empty support");
  if (values.size() != nominal.size())
    throw InvalidInput("values/weights length mismatch in cvar_from_infimum");
  double excess = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    excess += nominal[i] * std::max(0.0, values[i] - probe);
  return probe + level.cap() * excess;
}

}  // namespace prescript::cvar
