#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prescript/calibration.hpp"
#include "prescript/datagen.hpp"
#include "prescript/drpcr.hpp"
#include "prescript/errors.hpp"
#include "prescript/estimators.hpp"
#include "prescript/io.hpp"
#include "prescript/metrics.hpp"
#include "prescript/model.hpp"
#include "prescript/parallel.hpp"
#include "prescript/plot.hpp"
#include "prescript/rng.hpp"
#include "prescript/solvers.hpp"

namespace prescript::experiment {

/// Full description of a distribution-shift study.
///
/// Desk-scale defaults: a 5x9 grid (45 nodes), 20 covariates, 100/100/300
/// observations, 30 instances and shift levels {0, 0.2, 0.4, 0.6}. Instance
/// data uses mean travel times uniform in [2, 10] with sigma_xi = 0.25 * mu,
/// unit-variance covariates, and a random correlation structure carrying a
/// shared factor (`factor_weight`) that ties covariates and travel times
/// together; without it the covariates carry almost no signal and every
/// method degenerates to the benchmark.
struct ExperimentConfig {
  int grid_rows = 5;
  int grid_cols = 9;
  std::string graph_file;  // overrides the grid when nonempty
  int n_zeta = 20;
  int n_train = 100;
  int n_val = 100;
  int n_test = 300;
  int instances = 30;
  std::vector<double> perturbations = {0.0, 0.2, 0.4, 0.6};
  std::vector<calibration::Method> methods = {
      calibration::Method::kCso, calibration::Method::kDrcso, calibration::Method::kDrcro,
      calibration::Method::kDrpcr};
  estimators::EstimatorSpec estimator;
  double epsilon = 1e-3;
  bool binary = false;
  bool accelerated = false;
  std::uint64_t seed = 1;
  int jobs = 0;  // 0 = all hardware threads
  bool plots = true;
  // Instance-generation defaults.
  double mu_lo = 2.0;
  double mu_hi = 10.0;
  double sigma_xi_scale = 0.25;
  double sigma_zeta = 1.0;
  double factor_weight = 1.0;

  void validate() const {
    if (graph_file.empty() && (grid_rows < 2 || grid_cols < 2))
      throw InvalidInput("grid must be at least 2x2");
    if (n_zeta < 1 || n_train < 1 || n_val < 1 || n_test < 1 || instances < 1)
      throw InvalidInput("experiment sizes must be positive");
    for (double m : perturbations)
      if (m < 0.0 || m > 1.0) throw InvalidInput("perturbation levels must lie in [0, 1]");
    if (methods.empty()) throw InvalidInput("no methods selected");
    if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  }
};

/// One out-of-sample measurement.
struct ResultRow {
  int instance = 0;
  std::string method;
  double perturbation = 0.0;
  double alpha = 0.0;
  std::optional<double> gamma;
  double oos_pcr = 0.0;
  long wall_time_ms = 0;
  std::string status = "ok";
};

struct MethodLevelStats {
  std::string method;
  double perturbation = 0.0;
  double mean_pcr = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
};

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::vector<MethodLevelStats> summary;
};

namespace detail {

// Seed-chain stage tags; appending new stages keeps existing streams intact.
enum Stage : std::uint64_t {
  kStageSpd = 1,
  kStageMu = 2,
  kStageTrain = 3,
  kStageValShift = 4,
  kStageTestShift = 5,
  kStageValData = 6,
  kStageTestData = 7,
  kStageForest = 8,
};

inline double quantile(std::vector<double> sorted, double p) {
  const double position = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(position);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = position - static_cast<double>(lo);
  return sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac;
}

inline std::string render_pcr(double value) {
  if (std::isinf(value) && value < 0.0) return "-inf";
  return format_double(value);
}

/// Everything sampled for one instance at one shift level.
struct InstanceData {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline Dataset shifted_sample(const std::vector<double>& mu_xi, const datagen::Matrix& cov,
                              const ExperimentConfig& config, double level, std::uint64_t shift_seed,
                              std::uint64_t data_seed, int count, DatasetRole role) {
  const auto shifted = datagen::perturb_means(mu_xi, datagen::ShiftSpec{level, shift_seed});
  std::vector<double> mu(static_cast<std::size_t>(config.n_zeta), 0.0);
  mu.insert(mu.end(), shifted.begin(), shifted.end());
  return datagen::sample_dataset(mu, cov, static_cast<std::size_t>(config.n_zeta),
                                 static_cast<std::size_t>(count), data_seed, role);
}

}  // namespace detail

/// Per-point costs persisted next to the results so any reported ratio can be
/// recomputed exactly from disk.
inline void write_cost_file(const metrics::CostTriple& triple, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write cost file: " + path);
  out << "point,policy_cost,benchmark_cost,hindsight_cost\n";
  for (std::size_t i = 0; i < triple.policy_costs.size(); ++i)
    out << i << "," << format_double(triple.policy_costs[i]) << ","
        << format_double(triple.benchmark_costs[i]) << ","
        << format_double(triple.hindsight_costs[i]) << "\n";
}

inline metrics::CostTriple read_cost_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open cost file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "point,policy_cost,benchmark_cost,hindsight_cost")
    throw InvalidInput("unexpected cost file header in " + path);
  metrics::CostTriple triple;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
    if (values.size() != 4) throw InvalidInput("malformed cost file row in " + path);
    triple.policy_costs.push_back(values[1]);
    triple.benchmark_costs.push_back(values[2]);
    triple.hindsight_costs.push_back(values[3]);
  }
  return triple;
}

/// Runs the full study: per instance and shift level, generate data, fit the
/// estimator once per instance, calibrate every method on the validation set,
/// and score the calibrated policies out of sample against the SAA benchmark.
/// Writes results.csv, summary.csv, per-row cost files, and (optionally) one
/// box plot per shift level under `out_dir`. Fully deterministic for a fixed
/// config and seed, apart from the wall_time_ms column.
inline ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/costs");

  const DirectedGraph graph = config.graph_file.empty()
                                  ? datagen::make_graph(config.grid_rows, config.grid_cols)
                                  : load_graph(config.graph_file);
  const std::size_t n_arcs = graph.arc_count();
  const unsigned jobs = effective_jobs(config.jobs);

  // One slot per instance; the parallel schedule cannot affect output order.
  std::vector<std::vector<ResultRow>> rows_by_instance(static_cast<std::size_t>(config.instances));
  std::vector<std::map<std::string, metrics::CostTriple>> costs_by_instance(
      static_cast<std::size_t>(config.instances));

  parallel_for(static_cast<std::size_t>(config.instances), jobs, [&](std::size_t inst) {
    const std::uint64_t instance_id = static_cast<std::uint64_t>(inst);

    // Instance core: covariance, means, training data, fitted estimator.
    const datagen::Matrix spd = datagen::make_spd_matrix(
        static_cast<std::size_t>(config.n_zeta) + n_arcs,
        seed_chain(config.seed, {instance_id, detail::kStageSpd}), config.factor_weight);
    Rng mu_rng(seed_chain(config.seed, {instance_id, detail::kStageMu}));
    std::vector<double> mu_xi(n_arcs);
    for (double& m : mu_xi) m = mu_rng.uniform(config.mu_lo, config.mu_hi);
    datagen::CovarianceSpec cov_spec;
    cov_spec.sigma_zeta.assign(static_cast<std::size_t>(config.n_zeta), config.sigma_zeta);
    cov_spec.sigma_xi.resize(n_arcs);
    for (std::size_t a = 0; a < n_arcs; ++a) cov_spec.sigma_xi[a] = config.sigma_xi_scale * mu_xi[a];
    const datagen::Matrix cov = datagen::covariance_with_std(spd, cov_spec);

    std::vector<double> mu(static_cast<std::size_t>(config.n_zeta), 0.0);
    mu.insert(mu.end(), mu_xi.begin(), mu_xi.end());
    const Dataset train = datagen::sample_dataset(
        mu, cov, static_cast<std::size_t>(config.n_zeta), static_cast<std::size_t>(config.n_train),
        seed_chain(config.seed, {instance_id, detail::kStageTrain}), DatasetRole::kTrain);

    const calibration::TrainedState trained = calibration::prepare_training(
        train, graph, config.estimator,
        seed_chain(config.seed, {instance_id, detail::kStageForest}), config.binary, 1);

    for (std::size_t level_index = 0; level_index < config.perturbations.size(); ++level_index) {
      const double m = config.perturbations[level_index];
      const std::uint64_t level_id = static_cast<std::uint64_t>(level_index);
      const Dataset val = detail::shifted_sample(
          mu_xi, cov, config, m, seed_chain(config.seed, {instance_id, detail::kStageValShift, level_id}),
          seed_chain(config.seed, {instance_id, detail::kStageValData, level_id}), config.n_val,
          DatasetRole::kValidation);
      const Dataset test = detail::shifted_sample(
          mu_xi, cov, config, m, seed_chain(config.seed, {instance_id, detail::kStageTestShift, level_id}),
          seed_chain(config.seed, {instance_id, detail::kStageTestData, level_id}), config.n_test,
          DatasetRole::kTest);

      // Test-side cache shared by all methods.
      const std::size_t n_test = test.size();
      std::vector<DiscreteConditional> test_conditionals(n_test);
      std::vector<double> test_benchmark(n_test);
      std::vector<double> test_hindsight(n_test);
      for (std::size_t j = 0; j < n_test; ++j) {
        test_conditionals[j] = estimators::weights(trained.model, test.pairs[j].first);
        test_benchmark[j] = evaluate_cost(trained.benchmark, test.pairs[j].second);
        test_hindsight[j] = solvers::hindsight(graph, test.pairs[j].second, config.binary).first;
      }

      for (const calibration::Method method : config.methods) {
        ResultRow row;
        row.instance = static_cast<int>(inst);
        row.method = calibration::method_name(method);
        row.perturbation = m;
        const auto start = std::chrono::steady_clock::now();
        try {
          calibration::CalibrationOptions options;
          options.grid = method == calibration::Method::kCso ? calibration::AlphaGrid{{0.0}}
                                                             : calibration::alpha_grid();
          options.epsilon = config.epsilon;
          options.binary = config.binary;
          options.accelerated = config.accelerated;
          options.jobs = 1;  // instances already run in parallel
          const calibration::CalibrationResult calibrated =
              method == calibration::Method::kDrpcr
                  ? calibration::calibrate_drpcr(trained, val, graph, options)
                  : calibration::calibrate_dr(trained, val, graph, method, options);
          row.alpha = calibrated.alpha_star;
          row.gamma = calibrated.gamma_star;

          const cvar::AmbiguityLevel level(calibrated.alpha_star);
          metrics::CostTriple triple;
          triple.policy_costs.resize(n_test);
          triple.benchmark_costs = test_benchmark;
          triple.hindsight_costs = test_hindsight;
          for (std::size_t j = 0; j < n_test; ++j) {
            Decision decision;
            switch (method) {
              case calibration::Method::kCso:
                decision = solvers::solve_cso(graph, test_conditionals[j], config.binary);
                break;
              case calibration::Method::kDrcso:
                decision = solvers::solve_drcso(graph, test_conditionals[j], level, config.binary);
                break;
              case calibration::Method::kDrcro:
                decision = solvers::solve_drcro(graph, test_conditionals[j], level,
                                                trained.hindsight, config.binary);
                break;
              case calibration::Method::kDrpcr:
                decision = drpcr::extract_policy(graph, test_conditionals[j], *calibrated.gamma_star,
                                                 level, trained.benchmark, trained.hindsight,
                                                 config.binary);
                break;
            }
            triple.policy_costs[j] = evaluate_cost(decision, test.pairs[j].second);
          }
          row.oos_pcr = metrics::pcr(triple);
          costs_by_instance[inst][row.method + "_p" + format_double(m)] = triple;
        } catch (const std::exception& e) {
          std::string message = e.what();
          std::replace(message.begin(), message.end(), ',', ';');
          row.status = message;
          row.oos_pcr = std::numeric_limits<double>::quiet_NaN();
        }
        row.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - start)
                               .count();
        rows_by_instance[inst].push_back(std::move(row));
      }
    }
  });

  ExperimentOutcome outcome;
  for (const auto& instance_rows : rows_by_instance)
    outcome.rows.insert(outcome.rows.end(), instance_rows.begin(), instance_rows.end());

  // results.csv
  {
    std::ofstream out(out_dir + "/results.csv");
    if (!out) throw InvalidInput("cannot write results.csv");
    out << "instance,method,perturbation,alpha,gamma,oos_pcr,wall_time_ms,status\n";
    for (const ResultRow& row : outcome.rows) {
      out << row.instance << "," << row.method << "," << format_double(row.perturbation) << ","
          << format_double(row.alpha) << ",";
      if (row.gamma) out << format_double(*row.gamma);
      out << ",";
      if (std::isnan(row.oos_pcr))
        out << "";
      else
        out << detail::render_pcr(row.oos_pcr);
      out << "," << row.wall_time_ms << "," << row.status << "\n";
    }
  }

  // Per-row cost files.
  for (std::size_t inst = 0; inst < costs_by_instance.size(); ++inst)
    for (const auto& [key, triple] : costs_by_instance[inst])
      write_cost_file(triple, out_dir + "/costs/instance" + std::to_string(inst) + "_" + key + ".csv");

  // summary.csv: mean and quartiles per (method, perturbation).
  {
    std::ofstream out(out_dir + "/summary.csv");
    if (!out) throw InvalidInput("cannot write summary.csv");
    out << "method,perturbation,mean_pcr,q25,median,q75\n";
    for (const calibration::Method method : config.methods) {
      const std::string name = calibration::method_name(method);
      for (double m : config.perturbations) {
        std::vector<double> values;
        for (const ResultRow& row : outcome.rows)
          if (row.method == name && row.perturbation == m && row.status == "ok")
            values.push_back(row.oos_pcr);
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        MethodLevelStats stats;
        stats.method = name;
        stats.perturbation = m;
        stats.mean_pcr = mean;
        stats.q25 = detail::quantile(values, 0.25);
        stats.median = detail::quantile(values, 0.5);
        stats.q75 = detail::quantile(values, 0.75);
        outcome.summary.push_back(stats);
        out << name << "," << format_double(m) << "," << detail::render_pcr(stats.mean_pcr) << ","
            << detail::render_pcr(stats.q25) << "," << detail::render_pcr(stats.median) << ","
            << detail::render_pcr(stats.q75) << "\n";
      }
    }
  }

  if (config.plots) {
    for (double m : config.perturbations) {
      std::vector<plot::BoxStats> boxes;
      for (const calibration::Method method : config.methods) {
        const std::string name = calibration::method_name(method);
        std::vector<double> values;
        for (const ResultRow& row : outcome.rows)
          if (row.method == name && row.perturbation == m && row.status == "ok")
            values.push_back(row.oos_pcr);
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        plot::BoxStats box;
        box.label = name;
        box.low = values.front();
        box.q25 = detail::quantile(values, 0.25);
        box.median = detail::quantile(values, 0.5);
        box.q75 = detail::quantile(values, 0.75);
        box.high = values.back();
        boxes.push_back(box);
      }
      if (!boxes.empty()) {
        char suffix[32];
        std::snprintf(suffix, sizeof(suffix), "%02d", static_cast<int>(std::lround(m * 100)));
        plot::write_boxplot(out_dir + "/pcr_boxplot_m" + suffix + ".svg", boxes,
                            "Out-of-sample PCR, shift " + format_double(m), "PCR");
      }
    }
  }

  return outcome;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  config.grid_rows = j.value("grid_rows", config.grid_rows);
  config.grid_cols = j.value("grid_cols", config.grid_cols);
  config.graph_file = j.value("graph_file", config.graph_file);
  config.n_zeta = j.value("n_zeta", config.n_zeta);
  config.n_train = j.value("n_train", config.n_train);
  config.n_val = j.value("n_val", config.n_val);
  config.n_test = j.value("n_test", config.n_test);
  config.instances = j.value("instances", config.instances);
  if (j.contains("perturbations"))
    config.perturbations = j.at("perturbations").get<std::vector<double>>();
  if (j.contains("methods")) {
    config.methods.clear();
    for (const auto& name : j.at("methods")) {
      const std::string s = name.get<std::string>();
      if (s == "cso")
        config.methods.push_back(calibration::Method::kCso);
      else if (s == "drcso")
        config.methods.push_back(calibration::Method::kDrcso);
      else if (s == "drcro")
        config.methods.push_back(calibration::Method::kDrcro);
      else if (s == "drpcr")
        config.methods.push_back(calibration::Method::kDrpcr);
      else
        throw InvalidInput("unknown method in config: " + s);
    }
  }
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    const std::string kind = e.value("kind", std::string("forest"));
    config.estimator.kind = kind == "knn" ? estimators::Kind::kKnn : estimators::Kind::kForest;
    config.estimator.k = e.value("k", config.estimator.k);
    config.estimator.n_trees = e.value("trees", config.estimator.n_trees);
    config.estimator.max_depth = e.value("max_depth", config.estimator.max_depth);
    config.estimator.min_leaf = e.value("min_leaf", config.estimator.min_leaf);
  }
  config.epsilon = j.value("epsilon", config.epsilon);
  config.binary = j.value("binary", config.binary);
  config.accelerated = j.value("accelerated", config.accelerated);
  config.seed = j.value("seed", config.seed);
  config.jobs = j.value("jobs", config.jobs);
  config.plots = j.value("plots", config.plots);
  config.mu_lo = j.value("mu_lo", config.mu_lo);
  config.mu_hi = j.value("mu_hi", config.mu_hi);
  config.sigma_xi_scale = j.value("sigma_xi_scale", config.sigma_xi_scale);
  config.sigma_zeta = j.value("sigma_zeta", config.sigma_zeta);
  config.factor_weight = j.value("factor_weight", config.factor_weight);
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace prescript::experiment
