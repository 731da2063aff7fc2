#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "prescript/cvar.hpp"
#include "prescript/drpcr.hpp"
#include "prescript/errors.hpp"
#include "prescript/estimators.hpp"
#include "prescript/io.hpp"
#include "prescript/metrics.hpp"
#include "prescript/model.hpp"
#include "prescript/parallel.hpp"
#include "prescript/solvers.hpp"

namespace prescript::calibration {

/// Candidate ambiguity sizes: strictly increasing, all inside [0, 1).
struct AlphaGrid {
  std::vector<double> values;

  void validate() const {
    if (values.empty()) throw InvalidInput("alpha grid is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0.0) || values[i] >= 1.0) throw InvalidInput("alpha grid entry outside [0, 1)");
      if (i > 0 && values[i] <= values[i - 1]) throw InvalidInput("alpha grid not strictly increasing");
    }
  }
};

/// Default grid: the union of 20 logarithmically spaced points on
/// [0.01, 0.99] and 20 evenly spaced points on [0, 1), deduplicated.
inline AlphaGrid alpha_grid() {
  AlphaGrid grid;
  const int count = 20;
  const double lo = std::log10(0.01);
  const double hi = std::log10(0.99);
  for (int i = 0; i < count; ++i)
    grid.values.push_back(std::pow(10.0, lo + (hi - lo) * i / (count - 1)));
  grid.values[0] = 0.01;
  grid.values[static_cast<std::size_t>(count - 1)] = 0.99;
  for (int i = 0; i < count; ++i) grid.values.push_back(static_cast<double>(i) / count);
  std::sort(grid.values.begin(), grid.values.end());
  grid.values.erase(std::unique(grid.values.begin(), grid.values.end()), grid.values.end());
  grid.validate();
  return grid;
}

enum class Method { kCso, kDrcso, kDrcro, kDrpcr };

inline std::string method_name(Method method) {
  switch (method) {
    case Method::kCso: return "cso";
    case Method::kDrcso: return "drcso";
    case Method::kDrcro: return "drcro";
    case Method::kDrpcr: return "drpcr";
  }
  return "?";
}

/// Everything derived from the training set that calibration and evaluation
/// reuse: the fitted weight model, the composed joint distribution over the
/// training contexts, the SAA benchmark, and the hindsight table of the
/// training scenario pool.
struct TrainedState {
  estimators::WeightModel model;
  JointModel joint;
  Decision benchmark;
  solvers::HindsightTable hindsight;
};

inline TrainedState prepare_training(const Dataset& train, const DirectedGraph& graph,
                                     const estimators::EstimatorSpec& spec, std::uint64_t seed,
                                     bool binary = false, unsigned jobs = 1) {
  TrainedState state;
  state.model = estimators::fit(train, spec, seed);
  const std::size_t n = train.size();
  state.joint.contexts = state.model.contexts;
  state.joint.context_weights.assign(n, 1.0 / static_cast<double>(n));
  state.joint.conditionals.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    state.joint.conditionals[i] = estimators::weights(state.model, train.pairs[i].first);
  });
  state.benchmark = solvers::solve_saa(graph, *state.model.scenario_pool, binary);
  state.hindsight = solvers::hindsight_table(graph, *state.model.scenario_pool, binary);
  return state;
}

struct CalibrationOptions {
  AlphaGrid grid;
  double epsilon = 1e-3;
  bool binary = false;
  bool accelerated = false;
  unsigned jobs = 1;
};

/// Outcome of the validation sweep. `alpha_star` attains the maximum stored
/// score; ties go to the smallest alpha. `gamma_star` is present only for the
/// ratio-maximizing method.
struct CalibrationResult {
  double alpha_star = 0.0;
  std::optional<double> gamma_star;
  std::vector<double> alphas;
  std::vector<double> scores;
  std::vector<std::optional<double>> gammas;
  PolicyTable policy;                     // chosen per-validation-point decisions
  metrics::CostTriple validation_costs;   // of the chosen alpha
};

inline void write_calibration_csv(const CalibrationResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write calibration report: " + path);
  out << "alpha,gamma,validation_pcr\n";
  for (std::size_t i = 0; i < result.alphas.size(); ++i) {
    out << format_double(result.alphas[i]) << ",";
    if (result.gammas[i]) out << format_double(*result.gammas[i]);
    out << "," << format_double(result.scores[i]) << "\n";
  }
}

namespace detail {

/// Validation-side quantities shared by every alpha: fresh conditionals,
/// benchmark costs, and per-point hindsight values.
struct ValidationCache {
  std::vector<DiscreteConditional> conditionals;
  std::vector<double> benchmark_costs;
  std::vector<double> hindsight_values;
};

inline ValidationCache validation_cache(const TrainedState& state, const Dataset& val,
                                        const DirectedGraph& graph, bool binary, unsigned jobs) {
  val.validate();
  ValidationCache cache;
  const std::size_t n = val.size();
  cache.conditionals.resize(n);
  cache.benchmark_costs.resize(n);
  cache.hindsight_values.resize(n);
  parallel_for(n, jobs, [&](std::size_t j) {
    cache.conditionals[j] = estimators::weights(state.model, val.pairs[j].first);
    cache.benchmark_costs[j] = evaluate_cost(state.benchmark, val.pairs[j].second);
    cache.hindsight_values[j] = solvers::hindsight(graph, val.pairs[j].second, binary).first;
  });
  return cache;
}

}  // namespace detail

/// Ambiguity-size selection for the ratio-maximizing method: fits once, then
/// for every alpha on the grid solves the bisection on the training joint,
/// extracts a fresh-weights decision per validation point, and scores the
/// out-of-sample ratio against the SAA benchmark. Returns the argmax alpha
/// (smallest on ties) with its gamma and per-point policy.
inline CalibrationResult calibrate_drpcr(const TrainedState& state, const Dataset& val,
                                         const DirectedGraph& graph,
                                         const CalibrationOptions& options) {
  options.grid.validate();
  const auto cache = detail::validation_cache(state, val, graph, options.binary, options.jobs);
  const std::size_t n_val = val.size();

  CalibrationResult result;
  result.policy.fallback = state.benchmark;
  std::size_t best_index = 0;
  for (std::size_t i = 0; i < options.grid.values.size(); ++i) {
    const cvar::AmbiguityLevel level(options.grid.values[i]);
    const drpcr::BisectionResult root =
        options.accelerated && !options.binary
            ? drpcr::accelerated_bisection(state.joint, graph, level, state.benchmark,
                                           state.hindsight, options.epsilon, options.binary,
                                           options.jobs)
            : drpcr::bisection(state.joint, graph, level, state.benchmark, state.hindsight,
                               options.epsilon, options.binary, options.jobs);

    metrics::CostTriple triple;
    triple.policy_costs.resize(n_val);
    triple.benchmark_costs = cache.benchmark_costs;
    triple.hindsight_costs = cache.hindsight_values;
    std::vector<Decision> decisions(n_val);
    parallel_for(n_val, options.jobs, [&](std::size_t j) {
      decisions[j] = drpcr::extract_policy(graph, cache.conditionals[j], root.gamma_star, level,
                                           state.benchmark, state.hindsight, options.binary);
      triple.policy_costs[j] = evaluate_cost(decisions[j], val.pairs[j].second);
    });

    const double score = metrics::pcr(triple);
    result.alphas.push_back(options.grid.values[i]);
    result.scores.push_back(score);
    result.gammas.push_back(root.gamma_star);
    if (score > result.scores[best_index]) best_index = result.scores.size() - 1;
    if (result.scores.size() - 1 == best_index) {
      result.policy.entries.clear();
      for (std::size_t j = 0; j < n_val; ++j)
        result.policy.entries[static_cast<int>(j)] = decisions[j];
      result.validation_costs = triple;
    }
  }
  result.alpha_star = result.alphas[best_index];
  result.gamma_star = *result.gammas[best_index];
  return result;
}

/// Ambiguity-size selection for the worst-case loss/regret methods (and plain
/// CSO when called with the singleton grid {0}): per validation point the
/// decision comes straight from the corresponding solver.
inline CalibrationResult calibrate_dr(const TrainedState& state, const Dataset& val,
                                      const DirectedGraph& graph, Method method,
                                      const CalibrationOptions& options) {
  if (method == Method::kDrpcr) throw InvalidInput("use calibrate_drpcr for the ratio method");
  options.grid.validate();
  const auto cache = detail::validation_cache(state, val, graph, options.binary, options.jobs);
  const std::size_t n_val = val.size();

  CalibrationResult result;
  result.policy.fallback = state.benchmark;
  std::size_t best_index = 0;
  for (std::size_t i = 0; i < options.grid.values.size(); ++i) {
    const cvar::AmbiguityLevel level(options.grid.values[i]);
    metrics::CostTriple triple;
    triple.policy_costs.resize(n_val);
    triple.benchmark_costs = cache.benchmark_costs;
    triple.hindsight_costs = cache.hindsight_values;
    std::vector<Decision> decisions(n_val);
    parallel_for(n_val, options.jobs, [&](std::size_t j) {
      switch (method) {
        case Method::kCso:
          decisions[j] = solvers::solve_cso(graph, cache.conditionals[j], options.binary);
          break;
        case Method::kDrcso:
          decisions[j] = solvers::solve_drcso(graph, cache.conditionals[j], level, options.binary);
          break;
        case Method::kDrcro:
          decisions[j] = solvers::solve_drcro(graph, cache.conditionals[j], level, state.hindsight,
                                              options.binary);
          break;
        case Method::kDrpcr:
          break;
      }
      triple.policy_costs[j] = evaluate_cost(decisions[j], val.pairs[j].second);
    });

    const double score = metrics::pcr(triple);
    result.alphas.push_back(options.grid.values[i]);
    result.scores.push_back(score);
    result.gammas.push_back(std::nullopt);
    if (score > result.scores[best_index]) best_index = result.scores.size() - 1;
    if (result.scores.size() - 1 == best_index) {
      result.policy.entries.clear();
      for (std::size_t j = 0; j < n_val; ++j)
        result.policy.entries[static_cast<int>(j)] = decisions[j];
      result.validation_costs = triple;
    }
  }
  result.alpha_star = result.alphas[best_index];
  return result;
}

}  // namespace prescript::calibration
