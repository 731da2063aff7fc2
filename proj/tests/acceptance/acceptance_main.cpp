// Acceptance suite: one named criterion per check, one PASS/FAIL line each.
// Exit code is the number of failed criteria. Individual criteria can be
// selected by listing their ids on the command line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "prescript/calibration.hpp"
#include "prescript/cvar.hpp"
#include "prescript/datagen.hpp"
#include "prescript/drpcr.hpp"
#include "prescript/experiment.hpp"
#include "prescript/metrics.hpp"
#include "prescript/simplex.hpp"
#include "prescript/solvers.hpp"

#include "../test_support.hpp"

using namespace prescript;

namespace {

struct Harness {
  int failures = 0;

  void criterion(int id, const std::string& name, const std::function<std::string()>& body) {
    std::string detail;
    bool passed = true;
    try {
      detail = body();
    } catch (const std::exception& e) {
      passed = false;
      detail = std::string("exception: ") + e.what();
    }
    if (!passed || detail.rfind("FAIL", 0) == 0) {
      ++failures;
      std::cout << "[FAIL] criterion " << id << " (" << name << "): " << detail << "\n";
    } else {
      std::cout << "[PASS] criterion " << id << " (" << name << "): " << detail << "\n";
    }
    std::cout.flush();
  }
};

std::string fail(const std::string& message) { return "FAIL " + message; }

double capped_simplex_lp(const std::vector<double>& values, const std::vector<double>& weights,
                         const cvar::AmbiguityLevel& level) {
  simplex::LinearProgram lp;
  const std::size_t n = values.size();
  lp.objective.resize(n);
  lp.lower.assign(n, 0.0);
  lp.upper.resize(n);
  lp.integrality.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    lp.objective[i] = -values[i];
    lp.upper[i] = level.cap() * weights[i];
  }
  lp.rows.push_back({std::vector<double>(n, 1.0), simplex::Relation::kEqual, 1.0});
  const auto solution = simplex::solve_lp(lp);
  if (solution.status != simplex::SolveStatus::kOptimal)
    throw NumericalError("capped simplex oracle LP failed");
  return -solution.objective;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) {
    v = rng.uniform01() < 0.15 && n > 1 ? 0.0 : rng.uniform01() + 1e-3;
    total += v;
  }
  if (total == 0.0) {
    w[0] = 1.0;
    total = 1.0;
  }
  for (double& v : w) v /= total;
  return w;
}

std::string check_cvar_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    std::vector<double> values(n);
    for (double& v : values) v = rng.uniform(-6.0, 6.0);
    const auto weights = random_weights(rng, n);
    const cvar::AmbiguityLevel level(rng.uniform01() * 0.99);
    const double greedy = cvar::worst_case_expectation(values, weights, level).value;
    const double lp = capped_simplex_lp(values, weights, level);
    if (std::abs(greedy - lp) > 1e-8)
      return fail("trial " + std::to_string(trial) + ": greedy " + std::to_string(greedy) +
                  " vs LP " + std::to_string(lp));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (seconds >= 10.0) return fail("took " + std::to_string(seconds) + " s (limit 10)");
  return "500 supports within 1e-8 of the capped-simplex LP in " + std::to_string(seconds) + " s";
}

std::string check_lp_oracle() {
  Rng rng(202);
  int optimal = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto lp = test_support::random_boxed_lp(rng);
    double oracle = 0.0;
    const bool oracle_feasible = test_support::vertex_enumeration_optimum(lp, oracle);
    const auto solution = simplex::solve_lp(lp);
    if (!oracle_feasible) {
      if (solution.status != simplex::SolveStatus::kInfeasible)
        return fail("trial " + std::to_string(trial) + ": oracle infeasible, solver disagreed");
      continue;
    }
    if (solution.status != simplex::SolveStatus::kOptimal)
      return fail("trial " + std::to_string(trial) + ": solver missed a feasible program");
    if (std::abs(solution.objective - oracle) > 1e-6)
      return fail("trial " + std::to_string(trial) + ": objective " +
                  std::to_string(solution.objective) + " vs oracle " + std::to_string(oracle));
    const double gap = std::abs(solution.objective - simplex::dual_objective(lp, solution));
    if (gap > 1e-6 * (1.0 + std::abs(solution.objective)))
      return fail("trial " + std::to_string(trial) + ": duality gap " + std::to_string(gap));
    ++optimal;
  }
  return "200 programs matched vertex enumeration (" + std::to_string(optimal) +
         " optimal) with duality gaps under 1e-6";
}

std::string check_interval_and_singleton() {
  Rng rng(303);
  for (int trial = 0; trial < 100; ++trial) {
    const auto instance = test_support::random_small_instance(rng, 5);
    const auto table = solvers::hindsight_table(instance.graph, instance.support);
    const cvar::AmbiguityLevel level(rng.uniform01() * 0.95);
    const auto result =
        drpcr::bisection(instance.joint, instance.graph, level, instance.benchmark, table, 1e-3);
    if (result.gamma_star < 0.0 || result.gamma_star > 1.0)
      return fail("gamma outside [0,1]: " + std::to_string(result.gamma_star));

    // Singleton ambiguity: the extracted ratio policy matches CSO in expected
    // cost under the nominal joint distribution.
    const cvar::AmbiguityLevel zero(0.0);
    const auto at_zero =
        drpcr::bisection(instance.joint, instance.graph, zero, instance.benchmark, table, 1e-3);
    for (std::size_t c = 0; c < instance.joint.contexts.size(); ++c) {
      const auto& conditional = instance.joint.conditionals[c];
      const Decision ratio_policy =
          drpcr::extract_policy(instance.graph, conditional, at_zero.gamma_star, zero,
                                instance.benchmark, table);
      const Decision cso_policy = solvers::solve_cso(instance.graph, conditional);
      const CostVector mean = conditional.mean_cost();
      if (std::abs(evaluate_cost(ratio_policy, mean) - evaluate_cost(cso_policy, mean)) > 1e-6)
        return fail("trial " + std::to_string(trial) + ": ratio policy cost differs from CSO");
    }
  }
  return "100 instances: gamma in [0,1]; alpha=0 policies match CSO expected cost within 1e-6";
}

std::string check_monotonicity_convexity() {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const auto instance = test_support::random_small_instance(rng, 5);
    const auto table = solvers::hindsight_table(instance.graph, instance.support);
    const cvar::AmbiguityLevel level(rng.uniform01() * 0.9);
    std::vector<double> psi_values;
    std::vector<std::vector<double>> phi_values(instance.joint.contexts.size());
    for (int i = 0; i <= 10; ++i) {
      const double gamma = i / 10.0;
      double aggregate = 0.0;
      for (std::size_t c = 0; c < instance.joint.contexts.size(); ++c) {
        const double phi = drpcr::phi_omega(instance.graph, instance.joint.conditionals[c], gamma,
                                            level, instance.benchmark, table)
                               .value;
        phi_values[c].push_back(phi);
        aggregate += instance.joint.context_weights[c] * phi;
      }
      psi_values.push_back(aggregate);
    }
    for (const auto& series : phi_values)
      for (std::size_t i = 0; i + 1 < series.size(); ++i)
        if (series[i] > series[i + 1] + 1e-7)
          return fail("phi not monotone at trial " + std::to_string(trial));
    for (std::size_t i = 0; i + 1 < psi_values.size(); ++i)
      if (psi_values[i] > psi_values[i + 1] + 1e-7)
        return fail("psi not monotone at trial " + std::to_string(trial));
    for (std::size_t i = 0; i + 2 < psi_values.size(); i += 2)
      if (psi_values[i + 1] > 0.5 * (psi_values[i] + psi_values[i + 2]) + 1e-6)
        return fail("psi not midpoint convex at trial " + std::to_string(trial));
  }
  return "50 instances, 11-point gamma grids: phi/psi nondecreasing, psi midpoint convex";
}

std::string check_accelerated_bisection() {
  Rng rng(505);
  const double epsilon = 1e-4;
  int not_more_evals = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto instance = test_support::random_small_instance(rng, 5);
    const auto table = solvers::hindsight_table(instance.graph, instance.support);
    const cvar::AmbiguityLevel level(rng.uniform01() * 0.9);
    const auto plain = drpcr::bisection(instance.joint, instance.graph, level, instance.benchmark,
                                        table, epsilon);
    const auto fast = drpcr::accelerated_bisection(instance.joint, instance.graph, level,
                                                   instance.benchmark, table, epsilon);
    if (std::abs(plain.gamma_star - fast.gamma_star) > 2 * epsilon)
      return fail("trial " + std::to_string(trial) + ": roots differ by " +
                  std::to_string(std::abs(plain.gamma_star - fast.gamma_star)));
    if (fast.psi_evaluations <= plain.psi_evaluations) ++not_more_evals;
  }
  if (not_more_evals < 40)
    return fail("accelerated used fewer-or-equal evaluations in only " +
                std::to_string(not_more_evals) + "/50 instances");
  return "50 instances: |gamma_accel - gamma_plain| <= 2e-4; accelerated needed <= plain "
         "evaluations in " +
         std::to_string(not_more_evals) + "/50";
}

std::string check_alpha_zero_closed_form() {
  Rng rng(606);
  const double epsilon = 1e-4;
  for (int trial = 0; trial < 30; ++trial) {
    const auto instance = test_support::random_small_instance(rng, 5, false);
    const auto table = solvers::hindsight_table(instance.graph, instance.support);
    std::vector<double> hind_values(instance.support.size());
    for (std::size_t w = 0; w < instance.support.size(); ++w) hind_values[w] = table.value(w);
    const double formula = test_support::alpha_zero_gamma(instance, hind_values);
    const cvar::AmbiguityLevel zero(0.0);
    const auto result = drpcr::bisection(instance.joint, instance.graph, zero, instance.benchmark,
                                         table, epsilon);
    if (std::abs(result.gamma_star - formula) > epsilon + 1e-9)
      return fail("trial " + std::to_string(trial) + ": bisection " +
                  std::to_string(result.gamma_star) + " vs formula " + std::to_string(formula));
    // Cross-check against the 1e-3 grid oracle.
    double oracle = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double gamma = i / 1000.0;
      if (drpcr::psi(instance.joint, instance.graph, gamma, zero, instance.benchmark, table) <=
          1e-7)
        oracle = gamma;
    }
    if (std::abs(result.gamma_star - oracle) > epsilon + 1e-3)
      return fail("trial " + std::to_string(trial) + ": grid oracle " + std::to_string(oracle) +
                  " vs bisection " + std::to_string(result.gamma_star));
  }
  return "30 instances: bisection matches the closed form within 1e-4 and the 1e-3 grid oracle";
}

std::string check_integrality() {
  const auto graph = datagen::make_graph(5, 9);
  Rng rng(707);
  for (int trial = 0; trial < 100; ++trial) {
    CostVector xi(graph.arc_count());
    for (double& c : xi) c = rng.uniform(0.0, 10.0);
    const double relaxed = solvers::hindsight(graph, xi, false).first;
    const double binary = solvers::hindsight(graph, xi, true).first;
    if (std::abs(relaxed - binary) > 1e-6)
      return fail("trial " + std::to_string(trial) + ": relaxed " + std::to_string(relaxed) +
                  " vs binary " + std::to_string(binary));
  }
  return "100 random cost vectors on the 5x9 grid: relaxed and binary optima agree within 1e-6";
}

std::string check_trend_reproduction() {
  const auto start = std::chrono::steady_clock::now();
  experiment::ExperimentConfig config;
  config.instances = 30;
  config.perturbations = {0.0, 0.2, 0.4, 0.6};
  config.accelerated = true;
  config.seed = 7;
  const auto outcome = experiment::run_experiment(config, "acceptance_out");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto mean_of = [&](const std::string& method, double m) {
    for (const auto& stats : outcome.summary)
      if (stats.method == method && stats.perturbation == m) return stats.mean_pcr;
    throw NumericalError("missing summary cell " + method);
  };

  std::ostringstream detail;
  for (const std::string method : {"cso", "drcso", "drcro", "drpcr"}) {
    double previous = 1e300;
    for (double m : config.perturbations) {
      const double mean = mean_of(method, m);
      if (mean > previous + 1e-12)
        return fail("mean pcr of " + method + " increases at m=" + std::to_string(m));
      previous = mean;
    }
  }
  const double at0_max = std::max({mean_of("cso", 0.0), mean_of("drcso", 0.0),
                                   mean_of("drcro", 0.0), mean_of("drpcr", 0.0)});
  const double at0_min = std::min({mean_of("cso", 0.0), mean_of("drcso", 0.0),
                                   mean_of("drcro", 0.0), mean_of("drpcr", 0.0)});
  if (at0_max - at0_min > 0.1)
    return fail("m=0 method means spread " + std::to_string(at0_max - at0_min) + " > 0.1");

  const double ratio6 = mean_of("drpcr", 0.6);
  for (const std::string method : {"cso", "drcso", "drcro"})
    if (ratio6 - mean_of(method, 0.6) < 0.1)
      return fail("drpcr lead over " + method + " at m=0.6 is " +
                  std::to_string(ratio6 - mean_of(method, 0.6)) + " < 0.1");
  if (ratio6 < -0.05) return fail("drpcr mean at m=0.6 is " + std::to_string(ratio6) + " < -0.05");
  if (mean_of("cso", 0.6) > 0.0)
    return fail("cso mean at m=0.6 is " + std::to_string(mean_of("cso", 0.6)) + " > 0");

  // Budget: 45 minutes on 8 cores, scaled to this machine's core count.
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const double budget = 45.0 * 60.0 * 8.0 / static_cast<double>(cores);
  if (seconds > budget)
    return fail("runtime " + std::to_string(seconds) + " s exceeds scaled budget " +
                std::to_string(budget) + " s");
  std::ostringstream out;
  out << "trends hold (m=0 spread " << at0_max - at0_min << "; drpcr at 0.6 " << ratio6
      << " vs cso " << mean_of("cso", 0.6) << "); " << seconds << " s on " << cores << " cores";
  return out.str();
}

std::string check_metric_identities() {
  Rng rng(909);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(40);
    std::vector<double> y(n), f(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform(-2.0, 2.0);
      f[i] = y[i] + rng.uniform(-1.0, 1.0);
    }
    double y_bar = 0.0;
    for (double v : y) y_bar += v;
    y_bar /= static_cast<double>(n);
    metrics::CostTriple triple;
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      triple.policy_costs.push_back((f[i] - y[i]) * (f[i] - y[i]));
      triple.benchmark_costs.push_back((y_bar - y[i]) * (y_bar - y[i]));
      triple.hindsight_costs.push_back(0.0);
      sse += triple.policy_costs.back();
      sst += triple.benchmark_costs.back();
    }
    if (std::abs(metrics::pcr(triple) - (1.0 - sse / sst)) > 1e-9)
      return fail("R^2 equivalence violated at trial " + std::to_string(trial));
  }

  metrics::CostTriple zero;
  zero.policy_costs = {4.0, 4.0};
  zero.benchmark_costs = {4.0, 4.0};
  zero.hindsight_costs = {1.0, 1.0};
  if (metrics::pcr(zero) != 0.0) return fail("policy == benchmark should score 0");
  metrics::CostTriple one;
  one.policy_costs = {3.0};
  one.benchmark_costs = {3.0};
  one.hindsight_costs = {3.0};
  if (metrics::pcr(one) != 1.0) return fail("benchmark == hindsight == policy should score 1");
  metrics::CostTriple bottom;
  bottom.policy_costs = {5.0};
  bottom.benchmark_costs = {3.0};
  bottom.hindsight_costs = {3.0};
  if (!std::isinf(metrics::pcr(bottom)) || metrics::pcr(bottom) > 0.0)
    return fail("unreachable hindsight with a matched benchmark should score -inf");
  return "R^2 equivalence within 1e-9 on 50 draws; 0/1/-inf case structure exact";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string strip_wall_time(const std::string& csv) {
  std::stringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    // Drop the wall_time_ms column (second to last).
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i + 2 == cells.size()) continue;
      out << cells[i] << (i + 1 == cells.size() ? "" : ",");
    }
    out << "\n";
  }
  return out.str();
}

std::string check_determinism() {
  experiment::ExperimentConfig config;
  config.instances = 2;
  config.n_train = 40;
  config.n_val = 25;
  config.n_test = 40;
  config.perturbations = {0.0, 0.4};
  config.estimator.n_trees = 30;
  config.epsilon = 1e-3;
  config.accelerated = true;
  config.seed = 99;
  config.plots = false;
  experiment::run_experiment(config, "acceptance_det_a");
  experiment::run_experiment(config, "acceptance_det_b");

  const std::string results_a = strip_wall_time(read_file("acceptance_det_a/results.csv"));
  const std::string results_b = strip_wall_time(read_file("acceptance_det_b/results.csv"));
  if (results_a != results_b) return fail("results.csv differs between identical runs");
  if (read_file("acceptance_det_a/summary.csv") != read_file("acceptance_det_b/summary.csv"))
    return fail("summary.csv differs between identical runs");

  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator("acceptance_det_a/costs"))
    names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) return fail("no cost files were written");
  for (const auto& name : names)
    if (read_file("acceptance_det_a/costs/" + name) != read_file("acceptance_det_b/costs/" + name))
      return fail("cost file " + name + " differs between identical runs");
  return "two identical runs: results (modulo wall-time column), summary, and " +
         std::to_string(names.size()) + " cost files byte-identical";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  const auto wants = [&](int id) {
    return selected.empty() || std::find(selected.begin(), selected.end(), id) != selected.end();
  };

  Harness harness;
  if (wants(1)) harness.criterion(1, "CVaR oracle equivalence", check_cvar_oracle);
  if (wants(2)) harness.criterion(2, "LP oracle equivalence", check_lp_oracle);
  if (wants(3)) harness.criterion(3, "ratio interval and singleton reduction", check_interval_and_singleton);
  if (wants(4)) harness.criterion(4, "monotonicity and convexity", check_monotonicity_convexity);
  if (wants(5)) harness.criterion(5, "accelerated vs plain bisection", check_accelerated_bisection);
  if (wants(6)) harness.criterion(6, "alpha-zero closed form", check_alpha_zero_closed_form);
  if (wants(7)) harness.criterion(7, "flow integrality", check_integrality);
  if (wants(8)) harness.criterion(8, "trend reproduction at desk scale", check_trend_reproduction);
  if (wants(9)) harness.criterion(9, "metric identities", check_metric_identities);
  if (wants(10)) harness.criterion(10, "pipeline determinism", check_determinism);

  if (harness.failures == 0)
    std::cout << "all selected criteria passed\n";
  else
    std::cout << harness.failures << " criteria failed\n";
  return harness.failures;
}
