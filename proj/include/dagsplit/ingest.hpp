#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagsplit/graph.hpp"

namespace dagsplit {

struct ParseError : std::runtime_error {
  std::string path;  // field location, e.g. "nodes[2].memory"
  ParseError(std::string where, const std::string& reason)
      : std::runtime_error(where + ": " + reason), path(std::move(where)) {}
};

struct ValidationException : std::runtime_error {
  ValidationError error;
  explicit ValidationException(ValidationError err)
      : std::runtime_error(err.message()), error(std::move(err)) {}
};

struct ParsedWorkload {
  Graph graph;
  DeviceConfig config;
  std::vector<std::string> warnings;  // unknown fields are ignored, with note
};

// Parses a workload document:
// {"devices":{"accelerators":k,"cpus":l,"memoryLimit":M,"q":..,
//             "interleaving":"sum"|"halfDuplexMax"|"fullDuplexMax",
//             "bandwidth":..},
//  "nodes":[{"id","name","cpuTime","accTime" (null = unsupported),
//            "commTime","memory","colorClass","isBackward","forwardPair"}],
//  "edges":[{"from","to","commTime"}]}
// Numbers must be nonnegative; the graph must validate as a DAG.
ParsedWorkload parse_workload(const std::string& text);

struct ResultMeta {
  std::string objective;  // "latency" | "maxload" | "gpipe"
  std::string solver;
  double wall_time_s = 0;
  std::string status = "optimal";  // "optimal" | "feasible" | "heuristic"
  std::optional<double> gap;
};

// Deterministic serialization: stable key order, assignment sorted by node
// id, loads sorted by device label.
std::string write_result(const Split& split, const ResultMeta& meta);

std::pair<Split, ResultMeta> parse_result(const std::string& text);

// Graphviz text; placements color nodes (CPU red, one color per
// accelerator), artificial edges dashed.
std::string render_dot(const Graph& g, const Split* split = nullptr);

}  // namespace dagsplit
