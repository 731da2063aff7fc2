#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "prescript/drpcr.hpp"
#include "prescript/rng.hpp"
#include "test_support.hpp"

using namespace prescript;
using namespace prescript::drpcr;
using test_support::three_node_graph;

namespace {

JointModel single_context_joint(const DiscreteConditional& conditional) {
  JointModel joint;
  joint.contexts = {{0.0}};
  joint.context_weights = {1.0};
  joint.conditionals = {conditional};
  return joint;
}

/// Largest grid point with psi <= 0; brute-force oracle for the bisection.
double gamma_grid_oracle(const JointModel& joint, const DirectedGraph& graph,
                         const cvar::AmbiguityLevel& level, const Decision& benchmark,
                         const solvers::HindsightTable& table, double step) {
  double best = 0.0;
  for (double gamma = 0.0; gamma <= 1.0 + 1e-12; gamma += step) {
    const double value = psi(joint, graph, std::min(gamma, 1.0), level, benchmark, table);
    if (value <= 1e-7) best = std::min(gamma, 1.0);
  }
  return best;
}

}  // namespace

TEST_CASE("phi_omega on a single scenario") {
  const auto graph = three_node_graph();
  const DiscreteConditional conditional({{5.0, 2.0, 2.0}}, {1.0});
  const auto table = solvers::hindsight_table(graph, conditional.support());
  const Decision benchmark = test_support::direct_decision();
  const cvar::AmbiguityLevel level(0.3);  // point mass: alpha is irrelevant

  SECTION("gamma 0 regrets against the benchmark") {
    const PhiResult result = phi_omega(graph, conditional, 0.0, level, benchmark, table);
    CHECK(result.value == Catch::Approx(-1.0).margin(1e-7));
    CHECK(result.decision.flow[1] == Catch::Approx(1.0).margin(1e-7));
    CHECK(result.decision.flow[2] == Catch::Approx(1.0).margin(1e-7));
    CHECK(result.worst_weights[0] == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("gamma 1 regrets against hindsight") {
    const PhiResult result = phi_omega(graph, conditional, 1.0, level, benchmark, table);
    CHECK(result.value == Catch::Approx(0.0).margin(1e-7));
  }
  SECTION("gamma outside [0, 1] is invalid") {
    CHECK_THROWS_AS(phi_omega(graph, conditional, 1.5, level, benchmark, table), InvalidInput);
  }
}

TEST_CASE("phi_omega with two scenarios at alpha 0") {
  const auto graph = three_node_graph();
  const DiscreteConditional conditional({{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}}, {0.5, 0.5});
  const auto table = solvers::hindsight_table(graph, conditional.support());
  const PhiResult result = phi_omega(graph, conditional, 0.0, cvar::AmbiguityLevel(0.0),
                                     test_support::direct_decision(), table);
  // Best conditional-mean value 4 minus benchmark mean cost 4.
  CHECK(result.value == Catch::Approx(0.0).margin(1e-7));
}

TEST_CASE("psi aggregates phi over contexts") {
  const auto graph = three_node_graph();
  const cvar::AmbiguityLevel level(0.4);

  SECTION("point masses with the hindsight benchmark vanish identically") {
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}};
    const auto table = solvers::hindsight_table(graph, support);
    JointModel joint;
    joint.contexts = {{0.0}, {1.0}};
    joint.context_weights = {0.5, 0.5};
    joint.conditionals = {DiscreteConditional(support, {1.0}), DiscreteConditional(support, {1.0})};
    const Decision benchmark = table.by_scenario.at(0).second;  // benchmark == hindsight
    for (double gamma : {0.0, 0.5, 1.0})
      CHECK(psi(joint, graph, gamma, level, benchmark, table) == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("a single context reduces to its phi") {
    const DiscreteConditional conditional({{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}}, {0.25, 0.75});
    const auto table = solvers::hindsight_table(graph, conditional.support());
    const auto joint = single_context_joint(conditional);
    const Decision benchmark = test_support::direct_decision();
    const double direct_phi =
        phi_omega(graph, conditional, 0.5, level, benchmark, table).value;
    CHECK(psi(joint, graph, 0.5, level, benchmark, table) == Catch::Approx(direct_phi));
  }
  SECTION("two equally weighted contexts average their phis") {
    // Context A: point mass where the benchmark loses 1 to the best path.
    // Context B: the benchmark is optimal. At gamma = 0 the phis are -1 and 0.
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}};
    const auto table = solvers::hindsight_table(graph, support);
    JointModel joint;
    joint.contexts = {{0.0}, {1.0}};
    joint.context_weights = {0.5, 0.5};
    joint.conditionals = {DiscreteConditional(support, {1.0, 0.0}),
                          DiscreteConditional(support, {0.0, 1.0})};
    const Decision benchmark = test_support::direct_decision();
    CHECK(psi(joint, graph, 0.0, cvar::AmbiguityLevel(0.0), benchmark, table) ==
          Catch::Approx(-0.5).margin(1e-7));
  }
}

TEST_CASE("bisection brackets the ratio root") {
  const auto graph = three_node_graph();
  const double epsilon = 1e-3;

  SECTION("benchmark equal to hindsight accepts every midpoint") {
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}};
    const auto table = solvers::hindsight_table(graph, support);
    const auto joint = single_context_joint(DiscreteConditional(support, {1.0}));
    const Decision benchmark = table.by_scenario.at(0).second;
    const auto result =
        bisection(joint, graph, cvar::AmbiguityLevel(0.2), benchmark, table, epsilon);
    CHECK(result.gamma_star >= 1.0 - epsilon);
    CHECK(result.psi_evaluations <= static_cast<int>(std::ceil(std::log2(1.0 / epsilon))));
    for (const auto& entry : result.trace) CHECK(entry.psi_value <= 1e-7);
  }
  SECTION("no policy beats the benchmark: root at zero") {
    // Symmetric two-scenario conditional; CSO ties the benchmark, hindsight wins.
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}};
    const auto table = solvers::hindsight_table(graph, support);
    const auto joint = single_context_joint(DiscreteConditional(support, {0.5, 0.5}));
    const auto result = bisection(joint, graph, cvar::AmbiguityLevel(0.0),
                                  test_support::direct_decision(), table, epsilon);
    CHECK(result.gamma_star <= epsilon);
  }
  SECTION("alpha 0 closed form with an interior root") {
    // Context A: point mass on (5,2,2); context B: uniform over both scenarios.
    // E[h(xbar)] = 4.5, E_zeta[min_x E[h|zeta]] = 4, E[hindsight] = 3.75, so
    // the root sits at (4.5 - 4) / (4.5 - 3.75) = 2/3.
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}};
    const auto pool = std::make_shared<const std::vector<CostVector>>(support);
    const auto table = solvers::hindsight_table(graph, support);
    JointModel joint;
    joint.contexts = {{0.0}, {1.0}};
    joint.context_weights = {0.5, 0.5};
    joint.conditionals = {DiscreteConditional(pool, {1.0, 0.0}),
                          DiscreteConditional(pool, {0.5, 0.5})};
    test_support::SmallInstance instance;
    instance.graph = graph;
    instance.joint = joint;
    instance.benchmark = test_support::direct_decision();
    instance.support = support;
    std::vector<double> hind_values;
    for (std::size_t w = 0; w < support.size(); ++w) hind_values.push_back(table.value(w));
    const double expected = test_support::alpha_zero_gamma(instance, hind_values);
    REQUIRE(expected == Catch::Approx(2.0 / 3.0));
    const auto result = bisection(joint, graph, cvar::AmbiguityLevel(0.0), instance.benchmark,
                                  table, epsilon);
    CHECK(result.gamma_star == Catch::Approx(expected).margin(epsilon));
    const double oracle = gamma_grid_oracle(joint, graph, cvar::AmbiguityLevel(0.0),
                                            instance.benchmark, table, 1e-3);
    CHECK(std::abs(result.gamma_star - oracle) <= epsilon + 1e-3);
  }
}

TEST_CASE("accelerated bisection") {
  const auto graph = three_node_graph();

  SECTION("affine psi converges in at most three evaluations") {
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}};
    const auto pool = std::make_shared<const std::vector<CostVector>>(support);
    const auto table = solvers::hindsight_table(graph, support);
    JointModel joint;
    joint.contexts = {{0.0}, {1.0}};
    joint.context_weights = {0.5, 0.5};
    joint.conditionals = {DiscreteConditional(pool, {1.0, 0.0}),
                          DiscreteConditional(pool, {0.5, 0.5})};
    const Decision benchmark = test_support::direct_decision();
    const auto plain = bisection(joint, graph, cvar::AmbiguityLevel(0.0), benchmark, table, 1e-4);
    const auto fast =
        accelerated_bisection(joint, graph, cvar::AmbiguityLevel(0.0), benchmark, table, 1e-4);
    CHECK(fast.psi_evaluations <= 3);
    CHECK(std::abs(fast.gamma_star - plain.gamma_star) <= 2e-4);
  }
  SECTION("identically zero psi keeps the full interval") {
    const std::vector<CostVector> support = {{5.0, 2.0, 2.0}};
    const auto table = solvers::hindsight_table(graph, support);
    const auto joint = single_context_joint(DiscreteConditional(support, {1.0}));
    const Decision benchmark = table.by_scenario.at(0).second;
    const auto result =
        accelerated_bisection(joint, graph, cvar::AmbiguityLevel(0.5), benchmark, table, 1e-4);
    CHECK(result.gamma_star >= 1.0 - 1e-4);
    for (const auto& entry : result.trace) {
      CHECK(entry.lo >= 0.0);
      CHECK(entry.hi <= 1.0);
    }
  }
  SECTION("random instances agree with the plain bisection") {
    Rng rng(60601);
    for (int trial = 0; trial < 12; ++trial) {
      const auto instance = test_support::random_small_instance(rng, 4);
      const auto table = solvers::hindsight_table(instance.graph, instance.support);
      const double epsilon = 1e-4;
      const cvar::AmbiguityLevel level(0.3);
      const auto plain =
          bisection(instance.joint, instance.graph, level, instance.benchmark, table, epsilon);
      const auto fast = accelerated_bisection(instance.joint, instance.graph, level,
                                              instance.benchmark, table, epsilon);
      INFO("trial " << trial);
      CHECK(std::abs(plain.gamma_star - fast.gamma_star) <= 2.0 * epsilon);
      CHECK(fast.gamma_star >= 0.0);
      CHECK(fast.gamma_star <= 1.0);
    }
  }
}

TEST_CASE("extract_policy") {
  const auto graph = three_node_graph();
  SECTION("alpha 0 reproduces the CSO value for the same conditional") {
    const DiscreteConditional conditional({{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}}, {0.3, 0.7});
    const auto table = solvers::hindsight_table(graph, conditional.support());
    for (double gamma : {0.0, 0.4, 1.0}) {
      const Decision extracted =
          extract_policy(graph, conditional, gamma, cvar::AmbiguityLevel(0.0),
                         test_support::direct_decision(), table);
      const Decision cso = solvers::solve_cso(graph, conditional);
      const CostVector mean = conditional.mean_cost();
      CHECK(evaluate_cost(extracted, mean) == Catch::Approx(evaluate_cost(cso, mean)).margin(1e-6));
    }
  }
  SECTION("a point mass extracts the hindsight decision") {
    const DiscreteConditional conditional({{3.0, 4.0, 4.0}}, {1.0});
    const auto table = solvers::hindsight_table(graph, conditional.support());
    const Decision extracted = extract_policy(graph, conditional, 0.7, cvar::AmbiguityLevel(0.5),
                                              test_support::direct_decision(), table);
    CHECK(evaluate_cost(extracted, conditional.support()[0]) ==
          Catch::Approx(table.value(0)).margin(1e-6));
  }
  SECTION("gamma 1 at alpha 0.9 is the binary regret decision") {
    const DiscreteConditional conditional({{5.0, 2.0, 2.0}, {3.0, 4.0, 4.0}}, {0.5, 0.5});
    const auto table = solvers::hindsight_table(graph, conditional.support(), true);
    const Decision extracted = extract_policy(graph, conditional, 1.0, cvar::AmbiguityLevel(0.9),
                                              Decision{{1.0, 0.0, 0.0}, true}, table, true);
    CHECK(extracted.flow[0] == Catch::Approx(1.0));  // worst regret 1 beats 5
  }
}

TEST_CASE("structural properties on random instances") {
  Rng rng(24601);
  for (int trial = 0; trial < 10; ++trial) {
    const auto instance = test_support::random_small_instance(rng, 5);
    const auto table = solvers::hindsight_table(instance.graph, instance.support);
    const double alpha = rng.uniform01() * 0.9;
    const cvar::AmbiguityLevel level(alpha);

    // phi and psi are nondecreasing in gamma; psi is midpoint convex.
    const auto& conditional = instance.joint.conditionals[0];
    double previous_phi = -1e300;
    std::vector<double> psi_values;
    for (int i = 0; i <= 10; ++i) {
      const double gamma = i / 10.0;
      const double phi =
          phi_omega(instance.graph, conditional, gamma, level, instance.benchmark, table).value;
      CHECK(phi >= previous_phi - 1e-7);
      previous_phi = phi;
      psi_values.push_back(
          psi(instance.joint, instance.graph, gamma, level, instance.benchmark, table));
    }
    for (std::size_t i = 0; i + 1 < psi_values.size(); ++i)
      CHECK(psi_values[i] <= psi_values[i + 1] + 1e-7);
    for (std::size_t i = 0; i + 2 < psi_values.size(); i += 2)
      CHECK(psi_values[i + 1] <= 0.5 * (psi_values[i] + psi_values[i + 2]) + 1e-6);

    // The bisection root stays inside [0, 1].
    const auto result =
        bisection(instance.joint, instance.graph, level, instance.benchmark, table, 1e-3);
    CHECK(result.gamma_star >= 0.0);
    CHECK(result.gamma_star <= 1.0);

    // Policy-table decisions are feasible; unseen contexts get the fallback.
    for (const auto& [index, decision] : result.policy.entries)
      CHECK(feasibility_residual(decision, instance.graph) <= 1e-7);
    CHECK(result.policy.lookup(9999).flow == instance.benchmark.flow);

    // Certificates: the worst-case weights reproduce phi.
    const double gamma_probe = rng.uniform01();
    const PhiResult probe = phi_omega(instance.graph, conditional, gamma_probe, level,
                                      instance.benchmark, table);
    std::vector<double> adjusted(conditional.size());
    for (std::size_t w = 0; w < conditional.size(); ++w) {
      const double offset = (1.0 - gamma_probe) *
                                evaluate_cost(instance.benchmark, conditional.support()[w]) +
                            gamma_probe * table.value(w);
      adjusted[w] = evaluate_cost(probe.decision, conditional.support()[w]) - offset;
    }
    double certified = 0.0;
    double mass = 0.0;
    for (std::size_t w = 0; w < conditional.size(); ++w) {
      CHECK(probe.worst_weights[w] >= -1e-12);
      CHECK(probe.worst_weights[w] <= level.cap() * conditional.weights()[w] + 1e-9);
      certified += probe.worst_weights[w] * adjusted[w];
      mass += probe.worst_weights[w];
    }
    CHECK(mass == Catch::Approx(1.0).margin(1e-9));
    CHECK(certified == Catch::Approx(probe.value).margin(1e-6));
    const double recomputed =
        cvar::worst_case_expectation(adjusted, conditional.weights(), level).value;
    CHECK(recomputed == Catch::Approx(probe.value).margin(1e-6));

    // At gamma = 1 the subproblem is the worst-case regret problem.
    const PhiResult at_one =
        phi_omega(instance.graph, conditional, 1.0, level, instance.benchmark, table);
    const Decision drcro =
        solvers::solve_drcro(instance.graph, conditional, level, table);
    std::vector<double> regrets(conditional.size());
    for (std::size_t w = 0; w < conditional.size(); ++w)
      regrets[w] = evaluate_cost(drcro, conditional.support()[w]) - table.value(w);
    const double drcro_value =
        cvar::worst_case_expectation(regrets, conditional.weights(), level).value;
    CHECK(at_one.value == Catch::Approx(drcro_value).margin(1e-6));
  }
}

TEST_CASE("bisection trace exports as CSV") {
  const auto graph = three_node_graph();
  const std::vector<CostVector> support = {{6.0, 2.0, 2.0}, {2.0, 2.5, 1.0}};
  const auto table = solvers::hindsight_table(graph, support);
  const auto joint = single_context_joint(DiscreteConditional(support, {0.5, 0.5}));
  const auto result = bisection(joint, graph, cvar::AmbiguityLevel(0.1),
                                test_support::direct_decision(), table, 1e-2);
  const std::string path = "test_trace.csv";
  write_trace_csv(result.trace, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,gamma_mid,psi_value,lo,hi");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == static_cast<int>(result.trace.size()));
  std::remove(path.c_str());
}
