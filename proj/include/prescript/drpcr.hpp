#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prescript/cvar.hpp"
#include "prescript/errors.hpp"
#include "prescript/io.hpp"
#include "prescript/model.hpp"
#include "prescript/parallel.hpp"
#include "prescript/simplex.hpp"
#include "prescript/solvers.hpp"

namespace prescript::drpcr {

/// Feasibility cutoff for psi values. The per-context values are LP optima,
/// so "psi <= 0" can only be decided up to the solver's noise floor; without
/// the slack, an identically-zero psi (benchmark already hindsight-optimal)
/// would be rejected on sign noise instead of accepting every midpoint.
constexpr double kPsiFeasibilityTol = 1e-7;

/// Search interval for the competitive ratio.
struct GammaInterval {
  double lo = 0.0;
  double hi = 1.0;
  double epsilon = 1e-3;

  void validate() const {
    if (!(epsilon > 0.0)) throw InvalidInput("bisection tolerance must be positive");
    if (lo < 0.0 || hi > 1.0 || lo > hi) throw InvalidInput("gamma interval must satisfy 0 <= lo <= hi <= 1");
  }
};

/// Solution of the per-context subproblem: the optimal value, the minimizing
/// decision, the worst-case conditional weights (from the scenario-row duals),
/// and the VaR/excess variables of the epigraph program.
struct PhiResult {
  double value = 0.0;
  Decision decision;
  std::vector<double> worst_weights;
  double var_level = 0.0;
  std::vector<double> excess;
};

/// Per-context subproblem phi_omega(gamma): the CVaR at level alpha, under
/// the conditional scenario weights, of
///   h(x, xi) - ((1 - gamma) h(xbar, xi) + gamma * min_x' h(x', xi)),
/// minimized over the flow polytope. Solved as the scenario epigraph LP
/// (MILP when `binary`); nondecreasing in gamma.
inline PhiResult phi_omega(const DirectedGraph& graph, const DiscreteConditional& conditional,
                           double gamma, const cvar::AmbiguityLevel& level,
                           const Decision& benchmark, const solvers::HindsightTable& hindsight,
                           bool binary = false) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0, 1]");
  const std::size_t support_size = conditional.size();

  std::vector<double> benchmark_costs(support_size);
  std::vector<double> offsets(support_size);
  for (std::size_t w = 0; w < support_size; ++w) {
    benchmark_costs[w] = evaluate_cost(benchmark, conditional.support()[w]);
    offsets[w] = (1.0 - gamma) * benchmark_costs[w] + gamma * hindsight.value(w);
  }

  const auto program = solvers::detail::epigraph_lp(graph, conditional, level, offsets, binary);
  simplex::LpSolution solution = solvers::detail::solve(program.lp, binary);

  PhiResult result;
  result.value = solution.objective;
  result.decision = solvers::detail::decision_from(solution.primal, graph.arc_count(), binary);

  if (binary) {
    // Re-solve with the flow fixed to the incumbent so the scenario-row duals
    // certify the worst case for that decision.
    simplex::LinearProgram fixed = program.lp;
    fixed.integrality.assign(fixed.num_vars(), false);
    for (std::size_t a = 0; a < graph.arc_count(); ++a)
      fixed.lower[a] = fixed.upper[a] = result.decision.flow[a];
    solution = solvers::detail::solve(fixed, false);
  }

  result.var_level = solution.primal[program.t_index];

  // Gamma-adjusted values of the chosen decision; fills the excess variables
  // of dropped scenarios and backs the certificate check below.
  std::vector<double> adjusted(support_size);
  for (std::size_t w = 0; w < support_size; ++w)
    adjusted[w] = evaluate_cost(result.decision, conditional.support()[w]) - offsets[w];

  result.excess.assign(support_size, 0.0);
  for (std::size_t r = 0; r < program.scenario_rows.size(); ++r)
    result.excess[program.scenario_rows[r]] = solution.primal[program.s_begin + r];
  for (std::size_t w = 0; w < support_size; ++w)
    if (conditional.weights()[w] == 0.0)
      result.excess[w] = std::max(0.0, adjusted[w] - result.var_level);

  result.worst_weights.assign(support_size, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < program.scenario_rows.size(); ++r) {
    const std::size_t w = program.scenario_rows[r];
    const double raw = -solution.dual[program.balance_rows + r];
    const double capped = std::min(std::max(raw, 0.0), level.cap() * conditional.weights()[w]);
    result.worst_weights[w] = capped;
    total += capped;
  }
  if (total > 0.0)
    for (double& q : result.worst_weights) q /= total;

  // The duals must certify the objective; under heavy degeneracy they may
  // not, in which case the greedy CVaR maximizer for the fixed decision is an
  // equally valid worst case.
  double certified = 0.0;
  for (std::size_t w = 0; w < support_size; ++w)
    certified += result.worst_weights[w] * adjusted[w];
  if (total <= 0.5 || std::abs(certified - result.value) > 1e-6 * (1.0 + std::abs(result.value))) {
    result.worst_weights =
        cvar::worst_case_expectation(adjusted, conditional.weights(), level).distribution;
  }
  return result;
}

namespace detail {

/// psi(gamma) with the byproducts the accelerated bisection needs: the
/// subgradient line psi(g) >= offset + slope * g built from the saddle-point
/// weights, and the per-context decisions.
struct PsiEvaluation {
  double value = 0.0;
  double line_offset = 0.0;
  double line_slope = 0.0;
  std::vector<Decision> decisions;
};

inline PsiEvaluation evaluate_psi(const DirectedGraph& graph, const JointModel& joint, double gamma,
                                  const cvar::AmbiguityLevel& level, const Decision& benchmark,
                                  const solvers::HindsightTable& hindsight, bool binary,
                                  unsigned jobs) {
  joint.validate();
  const std::size_t contexts = joint.contexts.size();
  std::vector<PhiResult> results(contexts);
  parallel_for(contexts, jobs, [&](std::size_t omega) {
    results[omega] = phi_omega(graph, joint.conditionals[omega], gamma, level, benchmark,
                               hindsight, binary);
  });

  PsiEvaluation out;
  out.decisions.reserve(contexts);
  for (std::size_t omega = 0; omega < contexts; ++omega) {
    const double p_context = joint.context_weights[omega];
    const PhiResult& phi = results[omega];
    out.value += p_context * phi.value;
    const auto& support = joint.conditionals[omega].support();
    double offset = 0.0;
    double slope = 0.0;
    for (std::size_t w = 0; w < phi.worst_weights.size(); ++w) {
      const double q = phi.worst_weights[w];
      if (q == 0.0) continue;
      const double policy_cost = evaluate_cost(phi.decision, support[w]);
      const double benchmark_cost = evaluate_cost(benchmark, support[w]);
      offset += q * (policy_cost - benchmark_cost);
      slope += q * (benchmark_cost - hindsight.value(w));
    }
    out.line_offset += p_context * offset;
    out.line_slope += p_context * slope;
    out.decisions.push_back(phi.decision);
  }
  return out;
}

}  // namespace detail

/// Probability-weighted aggregate of the per-context subproblem values.
inline double psi(const JointModel& joint, const DirectedGraph& graph, double gamma,
                  const cvar::AmbiguityLevel& level, const Decision& benchmark,
                  const solvers::HindsightTable& hindsight, bool binary = false,
                  unsigned jobs = 1) {
  return detail::evaluate_psi(graph, joint, gamma, level, benchmark, hindsight, binary, jobs).value;
}

struct TraceEntry {
  int iteration = 0;
  double gamma = 0.0;
  double psi_value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct BisectionResult {
  double gamma_star = 0.0;
  std::vector<TraceEntry> trace;
  PolicyTable policy;
  int psi_evaluations = 0;
};

/// Writes a convergence trace as CSV (iteration, gamma_mid, psi_value, lo, hi).
inline void write_trace_csv(const std::vector<TraceEntry>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write trace file: " + path);
  out << "iteration,gamma_mid,psi_value,lo,hi\n";
  for (const TraceEntry& entry : trace)
    out << entry.iteration << "," << format_double(entry.gamma) << ","
        << format_double(entry.psi_value) << "," << format_double(entry.lo) << ","
        << format_double(entry.hi) << "\n";
}

/// Plain bisection on gamma: the largest gamma with psi(gamma) <= 0, within
/// `epsilon`. Returns the certified lower bound of the final interval; the
/// policy table holds the per-context decisions of the last feasible midpoint
/// (they differ from the decisions at gamma_star by at most epsilon in gamma),
/// with the benchmark as fallback.
inline BisectionResult bisection(const JointModel& joint, const DirectedGraph& graph,
                                 const cvar::AmbiguityLevel& level, const Decision& benchmark,
                                 const solvers::HindsightTable& hindsight, double epsilon,
                                 bool binary = false, unsigned jobs = 1) {
  if (!(epsilon > 0.0)) throw InvalidInput("bisection tolerance must be positive");
  BisectionResult result;
  result.policy.fallback = benchmark;
  double lo = 0.0;
  double hi = 1.0;
  int iteration = 0;
  while (hi - lo > epsilon) {
    const double mid = 0.5 * (lo + hi);
    const auto eval = detail::evaluate_psi(graph, joint, mid, level, benchmark, hindsight, binary, jobs);
    ++result.psi_evaluations;
    if (eval.value <= kPsiFeasibilityTol) {
      lo = mid;
      result.policy.entries.clear();
      for (std::size_t omega = 0; omega < eval.decisions.size(); ++omega)
        result.policy.entries[static_cast<int>(omega)] = eval.decisions[omega];
    } else {
      hi = mid;
    }
    result.trace.push_back(TraceEntry{++iteration, mid, eval.value, lo, hi});
  }
  result.gamma_star = lo;
  return result;
}

/// Accelerated bisection (relaxed decisions only; the speedup leans on the
/// convexity of psi over a convex feasible set).
///
/// On top of the plain interval update, each iteration
///   (a) tightens the upper bound with the root of the subgradient line
///       a + b*gamma built from the saddle-point weights of the midpoint
///       solve, whenever that root lands inside the interval, and
///   (b) tightens the lower bound with the root of the secant through the two
///       most recent evaluations, evaluating psi at the interval endpoint
///       when the secant needs it.
/// Intervals never expand. Evaluations that land strictly above an earlier
/// secant by more than 1e-6 contradict convexity and raise NonConvexDetected
/// (the signature of binary decisions being passed in).
inline BisectionResult accelerated_bisection(const JointModel& joint, const DirectedGraph& graph,
                                             const cvar::AmbiguityLevel& level,
                                             const Decision& benchmark,
                                             const solvers::HindsightTable& hindsight,
                                             double epsilon, bool binary = false,
                                             unsigned jobs = 1) {
  if (!(epsilon > 0.0)) throw InvalidInput("bisection tolerance must be positive");

  BisectionResult result;
  result.policy.fallback = benchmark;
  double best_feasible_gamma = -1.0;

  struct Secant {
    double g1, v1, g2, v2;
    double at(double g) const { return v1 + (v2 - v1) * (g - g1) / (g2 - g1); }
  };
  std::vector<Secant> secants;
  std::map<double, detail::PsiEvaluation> cache;
  int iteration = 0;

  const auto evaluate = [&](double gamma) -> const detail::PsiEvaluation& {
    const auto hit = cache.find(gamma);
    if (hit != cache.end()) return hit->second;
    auto eval = detail::evaluate_psi(graph, joint, gamma, level, benchmark, hindsight, binary, jobs);
    ++result.psi_evaluations;
    for (const Secant& secant : secants) {
      const double left = std::min(secant.g1, secant.g2);
      const double right = std::max(secant.g1, secant.g2);
      if (gamma >= left && gamma <= right && eval.value > secant.at(gamma) + 1e-6)
        throw NonConvexDetected("psi evaluation exceeds an overestimating secant");
    }
    if (eval.value <= kPsiFeasibilityTol && gamma > best_feasible_gamma) {
      best_feasible_gamma = gamma;
      result.policy.entries.clear();
      for (std::size_t omega = 0; omega < eval.decisions.size(); ++omega)
        result.policy.entries[static_cast<int>(omega)] = eval.decisions[omega];
    }
    return cache.emplace(gamma, std::move(eval)).first->second;
  };

  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > epsilon) {
    if (++iteration > 200) throw SolverStalled("accelerated bisection failed to converge", iteration);
    const double mid = 0.5 * (lo + hi);
    const auto& eval = evaluate(mid);

    if (eval.value <= kPsiFeasibilityTol)
      lo = mid;
    else
      hi = mid;

    // (a) subgradient underestimator: psi(g) >= offset + slope * g, so gamma*
    // cannot exceed the line's root.
    if (eval.line_slope > 1e-12) {
      const double root = -eval.line_offset / eval.line_slope;
      if (root < hi) hi = std::max(lo, root);
    }

    // (b) secant overestimator through the midpoint and the endpoint on the
    // far side of the sign change.
    if (hi - lo > epsilon) {
      const double endpoint = eval.value > kPsiFeasibilityTol ? lo : hi;
      if (endpoint != mid) {
        const auto& end_eval = evaluate(endpoint);
        const Secant secant{mid, eval.value, endpoint, end_eval.value};
        secants.push_back(secant);
        const double left_value = mid < endpoint ? eval.value : end_eval.value;
        const double right_value = mid < endpoint ? end_eval.value : eval.value;
        if (left_value <= kPsiFeasibilityTol && right_value > kPsiFeasibilityTol) {
          const double root =
              secant.g1 - secant.v1 * (secant.g2 - secant.g1) / (secant.v2 - secant.v1);
          if (root > lo) lo = std::min(hi, root);
        } else if (right_value <= kPsiFeasibilityTol) {
          // The far endpoint itself is feasible: the interval collapses upward.
          lo = std::max(lo, endpoint);
        }
      }
    }
    result.trace.push_back(TraceEntry{iteration, mid, eval.value, lo, hi});
  }
  result.gamma_star = lo;
  return result;
}

/// Policy retrieval for a fresh context: solves the per-context subproblem at
/// gamma_star with the conditional weights inferred for that context and
/// returns the minimizing decision.
inline Decision extract_policy(const DirectedGraph& graph, const DiscreteConditional& conditional,
                               double gamma_star, const cvar::AmbiguityLevel& level,
                               const Decision& benchmark, const solvers::HindsightTable& hindsight,
                               bool binary = false) {
  return phi_omega(graph, conditional, gamma_star, level, benchmark, hindsight, binary).decision;
}

/// Nearest-training-context lookup (Euclidean, smaller index wins ties); the
/// alternative policy extension that reuses a stored table instead of
/// re-solving with fresh weights.
inline std::size_t nearest_context(const std::vector<CovariateVector>& contexts,
                                   const CovariateVector& zeta) {
  if (contexts.empty()) throw InvalidInput("no contexts to match against");
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].size() != zeta.size()) throw InvalidInput("context dimension mismatch");
    double distance = 0.0;
    for (std::size_t f = 0; f < zeta.size(); ++f) {
      const double diff = contexts[i][f] - zeta[f];
      distance += diff * diff;
    }
    if (distance < best_distance) {
      best_distance = distance;
      best = i;
    }
  }
  return best;
}

}  // namespace prescript::drpcr
