#include <catch_amalgamated.hpp>

#include <cmath>

#include "prescript/rng.hpp"
#include "prescript/simplex.hpp"
#include "test_support.hpp"

using namespace prescript;
using namespace prescript::simplex;

namespace {

LinearProgram single_var_lp() {
  LinearProgram lp;
  lp.objective = {1.0};
  lp.lower = {0.0};
  lp.upper = {10.0};
  lp.integrality = {false};
  lp.rows.push_back({{1.0}, Relation::kGreaterEqual, 1.0});
  return lp;
}

LinearProgram shortest_path_lp(const DirectedGraph& graph, const CostVector& xi, bool binary) {
  LinearProgram lp;
  const std::size_t n = graph.arc_count();
  lp.objective = xi;
  lp.lower.assign(n, 0.0);
  lp.upper.assign(n, 1.0);
  lp.integrality.assign(n, binary);
  lp.rows.resize(static_cast<std::size_t>(graph.node_count));
  for (int v = 0; v < graph.node_count; ++v) {
    lp.rows[static_cast<std::size_t>(v)].coeffs.assign(n, 0.0);
    lp.rows[static_cast<std::size_t>(v)].relation = Relation::kEqual;
    lp.rows[static_cast<std::size_t>(v)].rhs =
        v == graph.origin ? 1.0 : v == graph.destination ? -1.0 : 0.0;
  }
  for (std::size_t a = 0; a < n; ++a) {
    lp.rows[static_cast<std::size_t>(graph.arcs[a].first)].coeffs[a] += 1.0;
    lp.rows[static_cast<std::size_t>(graph.arcs[a].second)].coeffs[a] -= 1.0;
  }
  return lp;
}

double primal_residual(const LinearProgram& lp, const std::vector<double>& x) {
  double worst = 0.0;
  for (std::size_t j = 0; j < lp.num_vars(); ++j) {
    worst = std::max(worst, lp.lower[j] - x[j]);
    worst = std::max(worst, x[j] - lp.upper[j]);
  }
  for (const auto& row : lp.rows) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < lp.num_vars(); ++j) lhs += row.coeffs[j] * x[j];
    switch (row.relation) {
      case Relation::kLessEqual: worst = std::max(worst, lhs - row.rhs); break;
      case Relation::kGreaterEqual: worst = std::max(worst, row.rhs - lhs); break;
      case Relation::kEqual: worst = std::max(worst, std::abs(lhs - row.rhs)); break;
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("bound-active single variable LP") {
  const LpSolution solution = solve_lp(single_var_lp());
  REQUIRE(solution.status == SolveStatus::kOptimal);
  CHECK(solution.primal[0] == Catch::Approx(1.0));
  CHECK(solution.objective == Catch::Approx(1.0));
}

TEST_CASE("three-node shortest path LP picks the two-leg path") {
  const auto graph = test_support::three_node_graph();
  const LpSolution solution = solve_lp(shortest_path_lp(graph, {5.0, 2.0, 2.0}, false));
  REQUIRE(solution.status == SolveStatus::kOptimal);
  CHECK(solution.objective == Catch::Approx(4.0));
  CHECK(solution.primal[1] == Catch::Approx(1.0));
  CHECK(solution.primal[2] == Catch::Approx(1.0));
  CHECK(solution.primal[0] == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("contradictory constraints are infeasible") {
  LinearProgram lp;
  lp.objective = {0.0};
  lp.lower = {-kInf};
  lp.upper = {kInf};
  lp.integrality = {false};
  lp.rows.push_back({{1.0}, Relation::kLessEqual, 0.0});
  lp.rows.push_back({{1.0}, Relation::kGreaterEqual, 1.0});
  CHECK(solve_lp(lp).status == SolveStatus::kInfeasible);
}

TEST_CASE("unbounded detection") {
  LinearProgram lp;
  lp.objective = {-1.0};
  lp.lower = {0.0};
  lp.upper = {kInf};
  lp.integrality = {false};
  lp.rows.push_back({{-1.0}, Relation::kLessEqual, 0.0});
  CHECK(solve_lp(lp).status == SolveStatus::kUnbounded);
}

TEST_CASE("solve_lp rejects integer variables") {
  LinearProgram lp = single_var_lp();
  lp.integrality = {true};
  CHECK_THROWS_AS(solve_lp(lp), InvalidInput);
}

TEST_CASE("LP dump lists the whole program") {
  const std::string text = single_var_lp().dump();
  CHECK(text.find("min") != std::string::npos);
  CHECK(text.find(">=") != std::string::npos);
  CHECK(text.find("x0 in [0, 10]") != std::string::npos);
}

TEST_CASE("random boxed LPs match the vertex-enumeration oracle") {
  Rng rng(20240917);
  int optimal_count = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const LinearProgram lp = test_support::random_boxed_lp(rng);
    double oracle = 0.0;
    const bool oracle_feasible = test_support::vertex_enumeration_optimum(lp, oracle);
    const LpSolution solution = solve_lp(lp);
    INFO("trial " << trial << "\n" << lp.dump());
    if (oracle_feasible) {
      REQUIRE(solution.status == SolveStatus::kOptimal);
      CHECK(solution.objective == Catch::Approx(oracle).margin(1e-6));
      CHECK(primal_residual(lp, solution.primal) <= 1e-7);
      const double gap = std::abs(solution.objective - dual_objective(lp, solution));
      CHECK(gap <= 1e-6 * (1.0 + std::abs(solution.objective)));
      ++optimal_count;
    } else {
      CHECK(solution.status == SolveStatus::kInfeasible);
    }
  }
  CHECK(optimal_count > 50);  // the generator must actually exercise solves
}

TEST_CASE("solve is deterministic for identical input") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const LinearProgram lp = test_support::random_boxed_lp(rng);
    const LpSolution a = solve_lp(lp);
    const LpSolution b = solve_lp(lp);
    REQUIRE(a.status == b.status);
    if (a.status == SolveStatus::kOptimal) {
      CHECK(a.primal == b.primal);
      CHECK(a.dual == b.dual);
    }
  }
}

TEST_CASE("tiny knapsack MILP by enumeration") {
  // max x1 + x2 s.t. 2 x1 + 2 x2 <= 3, x binary: optimum value 1.
  LinearProgram lp;
  lp.objective = {-1.0, -1.0};
  lp.lower = {0.0, 0.0};
  lp.upper = {1.0, 1.0};
  lp.integrality = {true, true};
  lp.rows.push_back({{2.0, 2.0}, Relation::kLessEqual, 3.0});
  const LpSolution solution = solve_milp(lp);
  REQUIRE(solution.status == SolveStatus::kOptimal);
  CHECK(solution.objective == Catch::Approx(-1.0));
  for (double x : solution.primal) CHECK(std::abs(x - std::round(x)) <= 1e-6);
}

TEST_CASE("MILP with integral relaxation equals the LP") {
  const auto graph = test_support::three_node_graph();
  LinearProgram lp = shortest_path_lp(graph, {5.0, 2.0, 2.0}, true);
  const LpSolution milp = solve_milp(lp);
  lp.integrality.assign(lp.num_vars(), false);
  const LpSolution relaxed = solve_lp(lp);
  REQUIRE(milp.status == SolveStatus::kOptimal);
  CHECK(milp.objective == Catch::Approx(relaxed.objective));
  CHECK(milp.objective == Catch::Approx(4.0));
}

TEST_CASE("random binary MILPs match full enumeration") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    LinearProgram lp = test_support::random_boxed_lp(rng);
    for (std::size_t j = 0; j < lp.num_vars(); ++j) {
      lp.upper[j] = 1.0;
      lp.integrality[j] = true;
    }
    // Enumerate all binary points.
    double best = std::numeric_limits<double>::infinity();
    const std::size_t combos = std::size_t(1) << lp.num_vars();
    for (std::size_t mask = 0; mask < combos; ++mask) {
      std::vector<double> x(lp.num_vars());
      for (std::size_t j = 0; j < lp.num_vars(); ++j) x[j] = (mask >> j) & 1 ? 1.0 : 0.0;
      if (primal_residual(lp, x) > 1e-9) continue;
      double objective = 0.0;
      for (std::size_t j = 0; j < lp.num_vars(); ++j) objective += lp.objective[j] * x[j];
      best = std::min(best, objective);
    }
    const LpSolution solution = solve_milp(lp);
    INFO("trial " << trial << "\n" << lp.dump());
    if (std::isfinite(best)) {
      REQUIRE(solution.status == SolveStatus::kOptimal);
      CHECK(solution.objective == Catch::Approx(best).margin(1e-6));
      for (std::size_t j = 0; j < lp.num_vars(); ++j)
        CHECK(std::abs(solution.primal[j] - std::round(solution.primal[j])) <= 1e-6);
    } else {
      CHECK(solution.status == SolveStatus::kInfeasible);
    }
  }
}

TEST_CASE("solve_milp validates integer bounds") {
  LinearProgram lp = single_var_lp();  // upper bound 10
  lp.integrality = {true};
  CHECK_THROWS_AS(solve_milp(lp), InvalidInput);
}

TEST_CASE("flow polytope relaxations are integral") {
  // Grid shortest-path LPs have integral vertices, so the relaxation already
  // solves the binary problem.
  DirectedGraph grid;
  grid.node_count = 6;  // 2x3 grid
  grid.arcs = {{0, 1}, {0, 3}, {1, 2}, {1, 4}, {2, 5}, {3, 4}, {4, 5}};
  grid.origin = 0;
  grid.destination = 5;
  grid.validate();
  Rng rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    CostVector xi(grid.arc_count());
    for (double& c : xi) c = rng.uniform(0.0, 10.0);
    const LpSolution relaxed = solve_lp(shortest_path_lp(grid, xi, false));
    const LpSolution binary = solve_milp(shortest_path_lp(grid, xi, true));
    REQUIRE(relaxed.status == SolveStatus::kOptimal);
    CHECK(relaxed.objective == Catch::Approx(binary.objective).margin(1e-6));
    for (double x : relaxed.primal) CHECK(std::abs(x - std::round(x)) <= 1e-6);
    const auto [oracle_value, oracle_decision] = test_support::shortest_path_oracle(grid, xi);
    CHECK(relaxed.objective == Catch::Approx(oracle_value).margin(1e-6));
  }
}
