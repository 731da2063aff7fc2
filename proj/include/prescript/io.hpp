#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prescript/errors.hpp"
#include "prescript/model.hpp"

namespace prescript {

/// Shortest round-trip decimal rendering of a double. Used for every numeric
/// file this project writes so identical runs produce identical bytes.
inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  // Trim to the shortest representation that still round-trips.
  for (int precision = 1; precision < 17; ++precision) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", precision, value);
    if (std::strtod(shorter, nullptr) == value) return shorter;
  }
  return buffer;
}

inline DirectedGraph graph_from_json(const nlohmann::json& j) {
  DirectedGraph graph;
  try {
    graph.node_count = j.at("nodes").get<int>();
    graph.origin = j.at("origin").get<int>();
    graph.destination = j.at("destination").get<int>();
    for (const auto& arc : j.at("arcs")) {
      if (!arc.is_array() || arc.size() != 2) throw InvalidInput("arc entry must be [tail, head]");
      graph.arcs.emplace_back(arc[0].get<int>(), arc[1].get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed graph JSON: ") + e.what());
  }
  graph.validate();
  return graph;
}

inline nlohmann::json graph_to_json(const DirectedGraph& graph) {
  nlohmann::json arcs = nlohmann::json::array();
  for (const auto& [tail, head] : graph.arcs) arcs.push_back({tail, head});
  return {{"nodes", graph.node_count},
          {"arcs", arcs},
          {"origin", graph.origin},
          {"destination", graph.destination}};
}

inline DirectedGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open graph file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("cannot parse graph file " + path + ": " + e.what());
  }
  return graph_from_json(j);
}

inline void save_graph(const DirectedGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write graph file: " + path);
  out << graph_to_json(graph).dump(2) << "\n";
}

/// Reads a dataset CSV with header z_1..z_p,c_1..c_q and one observation per
/// row. Cost entries must be nonnegative.
inline Dataset load_dataset(const std::string& path, DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset file is empty: " + path);
  std::size_t n_zeta = 0;
  std::size_t n_xi = 0;
  {
    std::stringstream header(line);
    std::string column;
    while (std::getline(header, column, ',')) {
      if (column.rfind("z_", 0) == 0) {
        ++n_zeta;
      } else if (column.rfind("c_", 0) == 0) {
        ++n_xi;
      } else {
        throw InvalidInput("unexpected dataset column name: " + column);
      }
    }
  }
  if (n_xi == 0) throw InvalidInput("dataset has no cost columns: " + path);
  Dataset dataset;
  dataset.role = role;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> values;
    values.reserve(n_zeta + n_xi);
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw InvalidInput("non-numeric cell at line " + std::to_string(line_no));
      values.push_back(v);
    }
    if (values.size() != n_zeta + n_xi)
      throw InvalidInput("wrong column count at line " + std::to_string(line_no));
    CovariateVector zeta(values.begin(), values.begin() + static_cast<long>(n_zeta));
    CostVector xi(values.begin() + static_cast<long>(n_zeta), values.end());
    dataset.pairs.emplace_back(std::move(zeta), std::move(xi));
  }
  dataset.validate();
  return dataset;
}

inline void save_dataset(const Dataset& dataset, const std::string& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write dataset file: " + path);
  const std::size_t n_zeta = dataset.pairs.front().first.size();
  const std::size_t n_xi = dataset.pairs.front().second.size();
  for (std::size_t i = 0; i < n_zeta; ++i) out << (i ? "," : "") << "z_" << (i + 1);
  for (std::size_t i = 0; i < n_xi; ++i) out << (n_zeta + i ? "," : "") << "c_" << (i + 1);
  out << "\n";
  for (const auto& [zeta, xi] : dataset.pairs) {
    bool first = true;
    for (double v : zeta) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    for (double v : xi) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    out << "\n";
  }
}

}  // namespace prescript
