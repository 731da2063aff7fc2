// Command-line front end: data generation, estimator fitting, ambiguity-size
// calibration, single-context solves, metric evaluation, plotting, and the
// full distribution-shift experiment.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prescript/calibration.hpp"
#include "prescript/datagen.hpp"
#include "prescript/drpcr.hpp"
#include "prescript/experiment.hpp"
#include "prescript/io.hpp"
#include "prescript/metrics.hpp"
#include "prescript/plot.hpp"

namespace {

using namespace prescript;

struct EstimatorFlags {
  std::string kind = "forest";
  int k = 10;
  int trees = 100;
  int depth = 6;
  int min_leaf = 5;

  estimators::EstimatorSpec spec() const {
    estimators::EstimatorSpec out;
    out.kind = kind == "knn" ? estimators::Kind::kKnn : estimators::Kind::kForest;
    out.k = k;
    out.n_trees = trees;
    out.max_depth = depth;
    out.min_leaf = min_leaf;
    return out;
  }
};

void add_estimator_flags(CLI::App* cmd, EstimatorFlags& flags) {
  cmd->add_option("--estimator", flags.kind, "Weight model: forest or knn")
      ->check(CLI::IsMember({"forest", "knn"}));
  cmd->add_option("--k", flags.k, "Neighbour count for knn");
  cmd->add_option("--trees", flags.trees, "Number of forest trees");
  cmd->add_option("--depth", flags.depth, "Maximum tree depth");
  cmd->add_option("--min-leaf", flags.min_leaf, "Minimum leaf size");
}

calibration::Method parse_method(const std::string& name) {
  if (name == "cso") return calibration::Method::kCso;
  if (name == "drcso") return calibration::Method::kDrcso;
  if (name == "drcro") return calibration::Method::kDrcro;
  if (name == "drpcr") return calibration::Method::kDrpcr;
  throw InvalidInput("unknown method: " + name);
}

int cmd_generate(int rows, int cols, int n_zeta, int n_train, int n_val, int n_test, double shift,
                 std::uint64_t seed, double factor_weight, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const DirectedGraph graph = datagen::make_graph(rows, cols);
  save_graph(graph, out_dir + "/graph.json");

  const std::size_t n_arcs = graph.arc_count();
  const datagen::Matrix spd = datagen::make_spd_matrix(
      static_cast<std::size_t>(n_zeta) + n_arcs, seed_chain(seed, {0, 1}), factor_weight);
  Rng mu_rng(seed_chain(seed, {0, 2}));
  std::vector<double> mu_xi(n_arcs);
  for (double& m : mu_xi) m = mu_rng.uniform(2.0, 10.0);
  datagen::CovarianceSpec cov_spec;
  cov_spec.sigma_zeta.assign(static_cast<std::size_t>(n_zeta), 1.0);
  cov_spec.sigma_xi.resize(n_arcs);
  for (std::size_t a = 0; a < n_arcs; ++a) cov_spec.sigma_xi[a] = 0.25 * mu_xi[a];
  const datagen::Matrix cov = datagen::covariance_with_std(spd, cov_spec);

  std::vector<double> mu(static_cast<std::size_t>(n_zeta), 0.0);
  mu.insert(mu.end(), mu_xi.begin(), mu_xi.end());
  save_dataset(datagen::sample_dataset(mu, cov, static_cast<std::size_t>(n_zeta),
                                       static_cast<std::size_t>(n_train), seed_chain(seed, {0, 3}),
                                       DatasetRole::kTrain),
               out_dir + "/train.csv");

  const auto shifted_set = [&](std::uint64_t shift_stage, std::uint64_t data_stage, int count,
                               DatasetRole role) {
    const auto shifted =
        datagen::perturb_means(mu_xi, datagen::ShiftSpec{shift, seed_chain(seed, {0, shift_stage})});
    std::vector<double> mu_s(static_cast<std::size_t>(n_zeta), 0.0);
    mu_s.insert(mu_s.end(), shifted.begin(), shifted.end());
    return datagen::sample_dataset(mu_s, cov, static_cast<std::size_t>(n_zeta),
                                   static_cast<std::size_t>(count), seed_chain(seed, {0, data_stage}),
                                   role);
  };
  save_dataset(shifted_set(4, 6, n_val, DatasetRole::kValidation), out_dir + "/val.csv");
  save_dataset(shifted_set(5, 7, n_test, DatasetRole::kTest), out_dir + "/test.csv");

  nlohmann::json manifest = {
      {"seed", seed},           {"rows", rows},       {"cols", cols},
      {"n_zeta", n_zeta},       {"n_train", n_train}, {"n_val", n_val},
      {"n_test", n_test},       {"shift", shift},     {"factor_weight", factor_weight},
      {"stage_seeds",
       {{"spd", seed_chain(seed, {0, 1})},
        {"mu", seed_chain(seed, {0, 2})},
        {"train", seed_chain(seed, {0, 3})},
        {"val_shift", seed_chain(seed, {0, 4})},
        {"test_shift", seed_chain(seed, {0, 5})},
        {"val_data", seed_chain(seed, {0, 6})},
        {"test_data", seed_chain(seed, {0, 7})}}}};
  std::ofstream manifest_out(out_dir + "/manifest.json");
  manifest_out << manifest.dump(2) << "\n";
  std::cout << "wrote graph.json, train.csv, val.csv, test.csv, manifest.json to " << out_dir
            << "\n";
  return 0;
}

int cmd_fit(const std::string& train_path, const EstimatorFlags& flags, std::uint64_t seed,
            const std::string& out_path) {
  const Dataset train = load_dataset(train_path, DatasetRole::kTrain);
  const estimators::WeightModel model = estimators::fit(train, flags.spec(), seed);
  estimators::save_model(model, out_path);
  std::cout << "fitted " << (model.kind == estimators::Kind::kKnn ? "knn" : "forest") << " model on "
            << train.size() << " observations -> " << out_path << "\n";
  return 0;
}

int cmd_calibrate(const std::string& graph_path, const std::string& train_path,
                  const std::string& val_path, const std::string& method_name,
                  const EstimatorFlags& flags, std::uint64_t seed, double epsilon, bool binary,
                  bool accelerated, int jobs, const std::string& report_path) {
  const DirectedGraph graph = load_graph(graph_path);
  const Dataset train = load_dataset(train_path, DatasetRole::kTrain);
  const Dataset val = load_dataset(val_path, DatasetRole::kValidation);
  const calibration::Method method = parse_method(method_name);

  const auto trained = calibration::prepare_training(train, graph, flags.spec(), seed, binary,
                                                     effective_jobs(jobs));
  calibration::CalibrationOptions options;
  options.grid = method == calibration::Method::kCso ? calibration::AlphaGrid{{0.0}}
                                                     : calibration::alpha_grid();
  options.epsilon = epsilon;
  options.binary = binary;
  options.accelerated = accelerated;
  options.jobs = effective_jobs(jobs);
  const calibration::CalibrationResult result =
      method == calibration::Method::kDrpcr
          ? calibration::calibrate_drpcr(trained, val, graph, options)
          : calibration::calibrate_dr(trained, val, graph, method, options);

  if (!report_path.empty()) calibration::write_calibration_csv(result, report_path);
  std::cout << "alpha_star=" << format_double(result.alpha_star);
  if (result.gamma_star) std::cout << " gamma_star=" << format_double(*result.gamma_star);
  std::cout << " validation_pcr=" << format_double(metrics::pcr(result.validation_costs)) << "\n";
  return 0;
}

int cmd_solve(const std::string& graph_path, const std::string& train_path,
              const std::string& method_name, double alpha, std::optional<double> gamma,
              const std::string& context_csv, int context_index, const EstimatorFlags& flags,
              std::uint64_t seed, double epsilon, bool binary, bool accelerated, bool nearest,
              const std::string& trace_path, int jobs) {
  const DirectedGraph graph = load_graph(graph_path);
  const Dataset train = load_dataset(train_path, DatasetRole::kTrain);
  const calibration::Method method = parse_method(method_name);
  const auto trained = calibration::prepare_training(train, graph, flags.spec(), seed, binary,
                                                     effective_jobs(jobs));

  CovariateVector zeta;
  if (!context_csv.empty()) {
    std::stringstream stream(context_csv);
    std::string cell;
    while (std::getline(stream, cell, ',')) zeta.push_back(std::strtod(cell.c_str(), nullptr));
  } else {
    if (context_index < 0 || static_cast<std::size_t>(context_index) >= train.size())
      throw InvalidInput("--context-index out of range");
    zeta = train.pairs[static_cast<std::size_t>(context_index)].first;
  }
  const DiscreteConditional conditional = estimators::weights(trained.model, zeta);
  const cvar::AmbiguityLevel level = cvar::AmbiguityLevel::clamped(alpha);

  Decision decision;
  std::optional<double> gamma_star = gamma;
  switch (method) {
    case calibration::Method::kCso:
      decision = solvers::solve_cso(graph, conditional, binary);
      break;
    case calibration::Method::kDrcso:
      decision = solvers::solve_drcso(graph, conditional, level, binary);
      break;
    case calibration::Method::kDrcro:
      decision = solvers::solve_drcro(graph, conditional, level, trained.hindsight, binary);
      break;
    case calibration::Method::kDrpcr: {
      drpcr::BisectionResult root;
      bool ran_bisection = false;
      if (!gamma_star) {
        root = accelerated && !binary
                   ? drpcr::accelerated_bisection(trained.joint, graph, level, trained.benchmark,
                                                  trained.hindsight, epsilon, binary,
                                                  effective_jobs(jobs))
                   : drpcr::bisection(trained.joint, graph, level, trained.benchmark,
                                      trained.hindsight, epsilon, binary, effective_jobs(jobs));
        gamma_star = root.gamma_star;
        ran_bisection = true;
        if (!trace_path.empty()) drpcr::write_trace_csv(root.trace, trace_path);
      }
      if (nearest) {
        if (!ran_bisection)
          throw InvalidInput("--nearest requires an in-run bisection (omit --gamma)");
        decision = root.policy.lookup(
            static_cast<int>(drpcr::nearest_context(trained.joint.contexts, zeta)));
      } else {
        decision = drpcr::extract_policy(graph, conditional, *gamma_star, level, trained.benchmark,
                                         trained.hindsight, binary);
      }
      break;
    }
  }

  double expected_cost = 0.0;
  for (std::size_t w = 0; w < conditional.size(); ++w)
    expected_cost += conditional.weights()[w] * evaluate_cost(decision, conditional.support()[w]);

  std::cout << "method=" << method_name << " alpha=" << format_double(alpha);
  if (gamma_star) std::cout << " gamma=" << format_double(*gamma_star);
  std::cout << " objective=" << format_double(expected_cost) << "\n";
  std::cout << "arcs:";
  for (std::size_t a = 0; a < decision.flow.size(); ++a)
    if (decision.flow[a] > 1e-9)
      std::cout << " " << graph.arcs[a].first << "->" << graph.arcs[a].second << ":"
                << format_double(decision.flow[a]);
  std::cout << "\n";
  return 0;
}

int cmd_evaluate(const std::string& costs_path) {
  const metrics::CostTriple triple = experiment::read_cost_file(costs_path);
  const double value = metrics::pcr(triple);
  std::cout << "points=" << triple.policy_costs.size() << " pcr="
            << (std::isinf(value) && value < 0 ? std::string("-inf") : format_double(value)) << "\n";
  return 0;
}

int cmd_plot(const std::string& summary_path, const std::string& out_path) {
  std::ifstream in(summary_path);
  if (!in) throw InvalidInput("cannot open summary file: " + summary_path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,perturbation,mean_pcr", 0) != 0)
    throw InvalidInput("unexpected summary header");
  std::vector<plot::Series> series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string method, cell;
    std::getline(row, method, ',');
    std::getline(row, cell, ',');
    const double m = std::strtod(cell.c_str(), nullptr);
    std::getline(row, cell, ',');
    const double mean = cell == "-inf" ? -std::numeric_limits<double>::infinity()
                                       : std::strtod(cell.c_str(), nullptr);
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const plot::Series& s) { return s.label == method; });
    if (it == series.end()) {
      series.push_back(plot::Series{method, {}});
      it = series.end() - 1;
    }
    it->points.emplace_back(m, mean);
  }
  plot::write_line_chart(out_path, series, "Mean out-of-sample PCR vs shift", "max perturbation",
                         "mean PCR");
  std::cout << "wrote " << out_path << " with " << series.size() << " series\n";
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<double> epsilon, bool binary, bool accelerated, const std::string& out_dir,
            std::optional<int> jobs) {
  experiment::ExperimentConfig config;
  if (!config_path.empty()) config = experiment::load_config(config_path);
  if (seed) config.seed = *seed;
  if (epsilon) config.epsilon = *epsilon;
  if (binary) config.binary = true;
  if (accelerated) config.accelerated = true;
  if (jobs) config.jobs = *jobs;
  const auto outcome = experiment::run_experiment(config, out_dir);
  std::cout << "wrote " << outcome.rows.size() << " result rows to " << out_dir << "/results.csv\n";
  for (const auto& stats : outcome.summary)
    std::cout << stats.method << " m=" << format_double(stats.perturbation)
              << " mean_pcr=" << format_double(stats.mean_pcr) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributionally robust prescriptiveness optimization toolkit"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Generate a synthetic shortest-path instance");
  int rows = 5, cols = 9, n_zeta = 20, n_train = 100, n_val = 100, n_test = 300;
  double shift = 0.0, factor_weight = 1.0;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "instance";
  generate->add_option("--rows", rows);
  generate->add_option("--cols", cols);
  generate->add_option("--n-zeta", n_zeta);
  generate->add_option("--train", n_train);
  generate->add_option("--val", n_val);
  generate->add_option("--test", n_test);
  generate->add_option("--shift", shift, "Max mean perturbation for val/test sets");
  generate->add_option("--seed", gen_seed);
  generate->add_option("--factor-weight", factor_weight);
  generate->add_option("--out", gen_out)->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a conditional weight model");
  std::string fit_train, fit_out = "model.json";
  EstimatorFlags fit_flags;
  std::uint64_t fit_seed = 1;
  fit->add_option("--train", fit_train)->required()->check(CLI::ExistingFile);
  add_estimator_flags(fit, fit_flags);
  fit->add_option("--seed", fit_seed);
  fit->add_option("--out", fit_out);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the ambiguity size on validation data");
  std::string cal_graph, cal_train, cal_val, cal_method = "drpcr", cal_report;
  EstimatorFlags cal_flags;
  std::uint64_t cal_seed = 1;
  double cal_epsilon = 1e-3;
  bool cal_binary = false, cal_accelerated = false;
  int cal_jobs = 0;
  calibrate->add_option("--graph", cal_graph)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--train", cal_train)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--val", cal_val)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--method", cal_method)
      ->check(CLI::IsMember({"cso", "drcso", "drcro", "drpcr"}));
  add_estimator_flags(calibrate, cal_flags);
  calibrate->add_option("--seed", cal_seed);
  calibrate->add_option("--epsilon", cal_epsilon);
  calibrate->add_flag("--binary", cal_binary);
  calibrate->add_flag("--accelerated", cal_accelerated);
  calibrate->add_option("--jobs", cal_jobs);
  calibrate->add_option("--report", cal_report, "Write per-alpha scores CSV here");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one contextual decision");
  std::string sol_graph, sol_train, sol_method = "cso", sol_context, sol_trace;
  EstimatorFlags sol_flags;
  double sol_alpha = 0.0;
  double sol_gamma = -1.0;
  int sol_context_index = 0, sol_jobs = 0;
  std::uint64_t sol_seed = 1;
  double sol_epsilon = 1e-3;
  bool sol_binary = false, sol_accelerated = false, sol_nearest = false;
  solve->add_option("--graph", sol_graph)->required()->check(CLI::ExistingFile);
  solve->add_option("--train", sol_train)->required()->check(CLI::ExistingFile);
  solve->add_option("--method", sol_method)
      ->check(CLI::IsMember({"cso", "drcso", "drcro", "drpcr"}));
  solve->add_option("--alpha", sol_alpha);
  solve->add_option("--gamma", sol_gamma, "Fixed gamma for drpcr (otherwise bisection runs)");
  solve->add_option("--context", sol_context, "Comma-separated covariate vector");
  solve->add_option("--context-index", sol_context_index, "Row of the training set to use");
  add_estimator_flags(solve, sol_flags);
  solve->add_option("--seed", sol_seed);
  solve->add_option("--epsilon", sol_epsilon);
  solve->add_flag("--binary", sol_binary);
  solve->add_flag("--accelerated", sol_accelerated);
  solve->add_flag("--nearest", sol_nearest, "Use the nearest-context policy table");
  solve->add_option("--trace", sol_trace, "Write the bisection trace CSV here");
  solve->add_option("--jobs", sol_jobs);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Recompute PCR from a per-point cost file");
  std::string eval_costs;
  evaluate->add_option("--costs", eval_costs)->required()->check(CLI::ExistingFile);

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render a summary CSV as an SVG line chart");
  std::string plot_summary, plot_out = "summary.svg";
  plot_cmd->add_option("--summary", plot_summary)->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot_out);

  // run
  auto* run = app.add_subcommand("run", "Run the full distribution-shift experiment");
  std::string run_config, run_out = "results";
  std::uint64_t run_seed = 0;
  double run_epsilon = 1e-3;
  bool run_binary = false, run_accelerated = false;
  int run_jobs = 0;
  auto* seed_opt = run->add_option("--seed", run_seed);
  auto* eps_opt = run->add_option("--epsilon", run_epsilon, "Bisection tolerance (default 1e-3)");
  run->add_option("--config", run_config)->check(CLI::ExistingFile);
  run->add_flag("--binary", run_binary);
  run->add_flag("--accelerated", run_accelerated);
  run->add_option("--out", run_out);
  auto* jobs_opt = run->add_option("--jobs", run_jobs);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return cmd_generate(rows, cols, n_zeta, n_train, n_val, n_test, shift, gen_seed,
                          factor_weight, gen_out);
    if (fit->parsed()) return cmd_fit(fit_train, fit_flags, fit_seed, fit_out);
    if (calibrate->parsed())
      return cmd_calibrate(cal_graph, cal_train, cal_val, cal_method, cal_flags, cal_seed,
                           cal_epsilon, cal_binary, cal_accelerated, cal_jobs, cal_report);
    if (solve->parsed())
      return cmd_solve(sol_graph, sol_train, sol_method, sol_alpha,
                       sol_gamma >= 0.0 ? std::optional<double>(sol_gamma) : std::nullopt,
                       sol_context, sol_context_index, sol_flags, sol_seed, sol_epsilon, sol_binary,
                       sol_accelerated, sol_nearest, sol_trace, sol_jobs);
    if (evaluate->parsed()) return cmd_evaluate(eval_costs);
    if (plot_cmd->parsed()) return cmd_plot(plot_summary, plot_out);
    if (run->parsed())
      return cmd_run(run_config,
                     seed_opt->count() ? std::optional<std::uint64_t>(run_seed) : std::nullopt,
                     eps_opt->count() ? std::optional<double>(run_epsilon) : std::nullopt,
                     run_binary, run_accelerated, run_out,
                     jobs_opt->count() ? std::optional<int>(run_jobs) : std::nullopt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
