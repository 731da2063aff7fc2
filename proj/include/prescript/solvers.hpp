#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "prescript/cvar.hpp"
#include "prescript/errors.hpp"
#include "prescript/model.hpp"
#include "prescript/simplex.hpp"

namespace prescript::solvers {

namespace detail {

/// Flow-balance rows of the unit origin->destination flow polytope, with
/// variable bounds [0, 1]. The explicit upper bound keeps the LP bounded for
/// any cost sign. Rows are one per node, in node order.
inline simplex::LinearProgram flow_lp(const DirectedGraph& graph, const CostVector& costs,
                                      bool binary) {
  const std::size_t n = graph.arc_count();
  simplex::LinearProgram lp;
  lp.objective = costs;
  lp.lower.assign(n, 0.0);
  lp.upper.assign(n, 1.0);
  lp.integrality.assign(n, binary);
  lp.rows.resize(static_cast<std::size_t>(graph.node_count));
  for (int v = 0; v < graph.node_count; ++v) {
    auto& row = lp.rows[static_cast<std::size_t>(v)];
    row.coeffs.assign(n, 0.0);
    row.relation = simplex::Relation::kEqual;
    row.rhs = v == graph.origin ? 1.0 : v == graph.destination ? -1.0 : 0.0;
  }
  for (std::size_t a = 0; a < n; ++a) {
    lp.rows[static_cast<std::size_t>(graph.arcs[a].first)].coeffs[a] += 1.0;
    lp.rows[static_cast<std::size_t>(graph.arcs[a].second)].coeffs[a] -= 1.0;
  }
  return lp;
}

/// Scenario-based CVaR epigraph program over the flow polytope:
///
///   min  t + cap * sum_w p_w s_w
///   s.t. x' xi_w - t - s_w <= offset_w      (one row per retained scenario)
///        x in flow polytope, s >= 0, t free
///
/// Scenarios with zero nominal weight cannot receive worst-case mass (their
/// cap is zero) and are dropped from the program; `scenario_rows` maps the
/// retained rows back to support indices. The dual of a scenario row, negated,
/// is the worst-case conditional probability of that scenario.
struct EpigraphLp {
  simplex::LinearProgram lp;
  std::vector<std::size_t> scenario_rows;  // support index per retained row
  std::size_t t_index = 0;                 // column of the VaR variable
  std::size_t s_begin = 0;                 // first excess column
  std::size_t balance_rows = 0;            // scenario rows start after these
};

inline EpigraphLp epigraph_lp(const DirectedGraph& graph, const DiscreteConditional& conditional,
                              const cvar::AmbiguityLevel& level, const std::vector<double>& offsets,
                              bool binary) {
  const std::size_t n_arcs = graph.arc_count();
  const auto& weights = conditional.weights();
  if (offsets.size() != weights.size())
    throw InvalidInput("offset vector length must match the scenario support");

  EpigraphLp out;
  for (std::size_t w = 0; w < weights.size(); ++w)
    if (weights[w] > 0.0) out.scenario_rows.push_back(w);
  const std::size_t n_scen = out.scenario_rows.size();
  const std::size_t n_vars = n_arcs + 1 + n_scen;
  out.t_index = n_arcs;
  out.s_begin = n_arcs + 1;
  out.balance_rows = static_cast<std::size_t>(graph.node_count);

  simplex::LinearProgram& lp = out.lp;
  lp.objective.assign(n_vars, 0.0);
  lp.objective[out.t_index] = 1.0;
  lp.lower.assign(n_vars, 0.0);
  lp.upper.assign(n_vars, simplex::kInf);
  lp.integrality.assign(n_vars, false);
  for (std::size_t a = 0; a < n_arcs; ++a) {
    lp.upper[a] = 1.0;
    lp.integrality[a] = binary;
  }
  lp.lower[out.t_index] = -simplex::kInf;

  lp.rows.resize(out.balance_rows + n_scen);
  for (int v = 0; v < graph.node_count; ++v) {
    auto& row = lp.rows[static_cast<std::size_t>(v)];
    row.coeffs.assign(n_vars, 0.0);
    row.relation = simplex::Relation::kEqual;
    row.rhs = v == graph.origin ? 1.0 : v == graph.destination ? -1.0 : 0.0;
  }
  for (std::size_t a = 0; a < n_arcs; ++a) {
    lp.rows[static_cast<std::size_t>(graph.arcs[a].first)].coeffs[a] += 1.0;
    lp.rows[static_cast<std::size_t>(graph.arcs[a].second)].coeffs[a] -= 1.0;
  }
  for (std::size_t r = 0; r < n_scen; ++r) {
    const std::size_t w = out.scenario_rows[r];
    auto& row = lp.rows[out.balance_rows + r];
    row.coeffs.assign(n_vars, 0.0);
    const CostVector& xi = conditional.support()[w];
    for (std::size_t a = 0; a < n_arcs; ++a) row.coeffs[a] = xi[a];
    row.coeffs[out.t_index] = -1.0;
    row.coeffs[out.s_begin + r] = -1.0;
    row.relation = simplex::Relation::kLessEqual;
    row.rhs = offsets[w];
    lp.objective[out.s_begin + r] = level.cap() * weights[w];
  }
  return out;
}

inline Decision decision_from(const std::vector<double>& primal, std::size_t n_arcs, bool binary) {
  Decision decision;
  decision.flow.assign(primal.begin(), primal.begin() + static_cast<long>(n_arcs));
  decision.binary = binary;
  if (binary)
    for (double& x : decision.flow) x = std::round(x);
  return decision;
}

inline simplex::LpSolution solve(const simplex::LinearProgram& lp, bool binary) {
  const simplex::LpSolution solution = binary ? simplex::solve_milp(lp) : simplex::solve_lp(lp);
  if (solution.status == simplex::SolveStatus::kInfeasible)
    throw NumericalError("flow subproblem reported infeasible");
  if (solution.status == simplex::SolveStatus::kUnbounded)
    throw NumericalError("flow subproblem reported unbounded");
  return solution;
}

}  // namespace detail

/// Hindsight (fully anticipative) values per scenario index, with the
/// minimizing decisions.
struct HindsightTable {
  std::map<std::size_t, std::pair<double, Decision>> by_scenario;

  double value(std::size_t scenario) const {
    const auto it = by_scenario.find(scenario);
    if (it == by_scenario.end()) throw InvalidInput("hindsight table misses a scenario");
    return it->second.first;
  }

  std::vector<double> values(std::size_t count) const {
    std::vector<double> out(count);
    for (std::size_t w = 0; w < count; ++w) out[w] = value(w);
    return out;
  }
};

/// Optimal decision and value for one realized cost vector.
inline std::pair<double, Decision> hindsight(const DirectedGraph& graph, const CostVector& xi,
                                             bool binary = false) {
  if (xi.size() != graph.arc_count()) throw InvalidInput("cost vector length mismatch");
  const auto solution = detail::solve(detail::flow_lp(graph, xi, binary), binary);
  return {solution.objective, detail::decision_from(solution.primal, graph.arc_count(), binary)};
}

/// Hindsight values for every scenario of a shared support pool.
inline HindsightTable hindsight_table(const DirectedGraph& graph,
                                      const std::vector<CostVector>& support, bool binary = false) {
  HindsightTable table;
  for (std::size_t w = 0; w < support.size(); ++w)
    table.by_scenario[w] = hindsight(graph, support[w], binary);
  return table;
}

/// Sample-average decision: the shortest path under the mean cost vector.
inline Decision solve_saa(const DirectedGraph& graph, const std::vector<CostVector>& costs,
                          bool binary = false) {
  if (costs.empty()) throw InvalidInput("SAA needs at least one cost scenario");
  CostVector mean(graph.arc_count(), 0.0);
  for (const CostVector& xi : costs) {
    if (xi.size() != mean.size()) throw InvalidInput("cost vector length mismatch");
    for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += xi[a];
  }
  for (double& v : mean) v /= static_cast<double>(costs.size());
  return hindsight(graph, mean, binary).second;
}

/// Conditional stochastic optimum: shortest path under the weight-averaged
/// cost vector.
inline Decision solve_cso(const DirectedGraph& graph, const DiscreteConditional& conditional,
                          bool binary = false) {
  return hindsight(graph, conditional.mean_cost(), binary).second;
}

/// Distributionally robust CSO over the capped-probability set: minimizes the
/// worst-case expected cost through the CVaR epigraph program (zero offsets).
inline Decision solve_drcso(const DirectedGraph& graph, const DiscreteConditional& conditional,
                            const cvar::AmbiguityLevel& level, bool binary = false) {
  const std::vector<double> offsets(conditional.size(), 0.0);
  const auto program = detail::epigraph_lp(graph, conditional, level, offsets, binary);
  const auto solution = detail::solve(program.lp, binary);
  return detail::decision_from(solution.primal, graph.arc_count(), binary);
}

/// Distributionally robust regret optimum: the same epigraph program with the
/// per-scenario hindsight values subtracted.
inline Decision solve_drcro(const DirectedGraph& graph, const DiscreteConditional& conditional,
                            const cvar::AmbiguityLevel& level, const HindsightTable& hindsight,
                            bool binary = false) {
  std::vector<double> offsets(conditional.size());
  for (std::size_t w = 0; w < offsets.size(); ++w)
    offsets[w] = conditional.weights()[w] > 0.0 ? hindsight.value(w) : 0.0;
  const auto program = detail::epigraph_lp(graph, conditional, level, offsets, binary);
  const auto solution = detail::solve(program.lp, binary);
  return detail::decision_from(solution.primal, graph.arc_count(), binary);
}

}  // namespace prescript::solvers
