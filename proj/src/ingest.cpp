#include "dagsplit/ingest.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dagsplit {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Rat number_at(const json& j, const std::string& path, bool allow_negative = false) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  Rat r = Rat::from_double(j.get<double>());
  if (!allow_negative && r.is_negative()) {
    throw ParseError(path, "must be nonnegative");
  }
  return r;
}

int int_at(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<int>();
}

void warn_unknown(const json& obj, const std::string& path,
                  const std::set<std::string>& known,
                  std::vector<std::string>& warnings) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      warnings.push_back("ignoring unknown field " + path + "." + it.key());
    }
  }
}

}  // namespace

ParsedWorkload parse_workload(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("$", e.what());
  }
  if (!doc.is_object()) throw ParseError("$", "expected an object");
  ParsedWorkload out;
  warn_unknown(doc, "$", {"devices", "nodes", "edges"}, out.warnings);

  if (!doc.contains("devices") || !doc["devices"].is_object()) {
    throw ParseError("devices", "missing devices section");
  }
  const json& dev = doc["devices"];
  warn_unknown(dev, "devices",
               {"accelerators", "cpus", "memoryLimit", "q", "interleaving",
                "bandwidth"},
               out.warnings);
  if (!dev.contains("accelerators")) {
    throw ParseError("devices.accelerators", "missing");
  }
  out.config.accelerators = int_at(dev["accelerators"], "devices.accelerators");
  if (!dev.contains("cpus")) throw ParseError("devices.cpus", "missing");
  out.config.cpus = int_at(dev["cpus"], "devices.cpus");
  if (out.config.accelerators < 0 || out.config.cpus < 0 ||
      out.config.accelerators + out.config.cpus < 1) {
    throw ParseError("devices", "need at least one device");
  }
  if (!dev.contains("memoryLimit")) {
    throw ParseError("devices.memoryLimit", "missing");
  }
  out.config.memory_limit = number_at(dev["memoryLimit"], "devices.memoryLimit");
  if (dev.contains("q")) {
    out.config.q = int_at(dev["q"], "devices.q");
    if (out.config.q < 1) throw ParseError("devices.q", "must be >= 1");
  }
  if (dev.contains("interleaving")) {
    std::string s = dev["interleaving"].is_string()
                        ? dev["interleaving"].get<std::string>()
                        : "";
    if (s == "sum") out.config.interleaving = Interleaving::Sum;
    else if (s == "halfDuplexMax") out.config.interleaving = Interleaving::HalfDuplexMax;
    else if (s == "fullDuplexMax") out.config.interleaving = Interleaving::FullDuplexMax;
    else throw ParseError("devices.interleaving",
                          "expected sum | halfDuplexMax | fullDuplexMax");
  }
  if (dev.contains("bandwidth")) {
    Rat b = number_at(dev["bandwidth"], "devices.bandwidth");
    if (b.is_zero()) throw ParseError("devices.bandwidth", "must be positive");
    out.config.bandwidth = b;
  }

  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw ParseError("nodes", "missing node array");
  }
  std::vector<Node> nodes;
  std::set<int> ids;
  for (size_t i = 0; i < doc["nodes"].size(); ++i) {
    const json& jn = doc["nodes"][i];
    std::string path = "nodes[" + std::to_string(i) + "]";
    if (!jn.is_object()) throw ParseError(path, "expected an object");
    warn_unknown(jn, path,
                 {"id", "name", "cpuTime", "accTime", "commTime", "memory",
                  "colorClass", "isBackward", "forwardPair"},
                 out.warnings);
    Node n;
    if (!jn.contains("id")) throw ParseError(path + ".id", "missing");
    n.id = int_at(jn["id"], path + ".id");
    if (!ids.insert(n.id).second) {
      throw ValidationException(ValidationError{
          ValidationError::Kind::DuplicateId, {}, n.id, 0, 0, {}});
    }
    if (jn.contains("name")) {
      if (!jn["name"].is_string()) throw ParseError(path + ".name", "expected a string");
      n.name = jn["name"].get<std::string>();
    }
    if (!jn.contains("cpuTime")) throw ParseError(path + ".cpuTime", "missing");
    n.cpu_time = number_at(jn["cpuTime"], path + ".cpuTime");
    if (!jn.contains("accTime")) throw ParseError(path + ".accTime", "missing");
    if (jn["accTime"].is_null()) {
      n.acc_time = Rat::infinity();  // not supported on accelerators
    } else {
      n.acc_time = number_at(jn["accTime"], path + ".accTime");
    }
    if (!jn.contains("commTime")) throw ParseError(path + ".commTime", "missing");
    n.comm_time = number_at(jn["commTime"], path + ".commTime");
    if (!jn.contains("memory")) throw ParseError(path + ".memory", "missing");
    n.mem_size = number_at(jn["memory"], path + ".memory");
    if (jn.contains("colorClass")) {
      n.color_class = int_at(jn["colorClass"], path + ".colorClass");
    }
    if (jn.contains("isBackward")) {
      if (!jn["isBackward"].is_boolean()) {
        throw ParseError(path + ".isBackward", "expected a boolean");
      }
      n.is_backward = jn["isBackward"].get<bool>();
    }
    if (jn.contains("forwardPair")) {
      n.forward_pair = int_at(jn["forwardPair"], path + ".forwardPair");
    }
    nodes.push_back(std::move(n));
  }

  if (!doc.contains("edges") || !doc["edges"].is_array()) {
    throw ParseError("edges", "missing edge array");
  }
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> seen;
  for (size_t i = 0; i < doc["edges"].size(); ++i) {
    const json& je = doc["edges"][i];
    std::string path = "edges[" + std::to_string(i) + "]";
    if (!je.is_object()) throw ParseError(path, "expected an object");
    warn_unknown(je, path, {"from", "to", "commTime"}, out.warnings);
    Edge e;
    if (!je.contains("from")) throw ParseError(path + ".from", "missing");
    e.from = int_at(je["from"], path + ".from");
    if (!je.contains("to")) throw ParseError(path + ".to", "missing");
    e.to = int_at(je["to"], path + ".to");
    if (e.from == e.to) throw ParseError(path, "self-loop");
    if (!seen.emplace(e.from, e.to).second) {
      throw ParseError(path, "duplicate edge");
    }
    if (je.contains("commTime")) {
      e.comm_override = number_at(je["commTime"], path + ".commTime");
    }
    edges.push_back(std::move(e));
  }

  out.graph = Graph(std::move(nodes), std::move(edges));
  if (auto err = validate_dag(out.graph)) {
    throw ValidationException(*err);
  }
  // pairing invariants
  for (int v = 0; v < out.graph.size(); ++v) {
    const Node& n = out.graph.node(v);
    if (!n.forward_pair) continue;
    std::string path = "nodes(id=" + std::to_string(n.id) + ").forwardPair";
    if (!n.is_backward) {
      throw ParseError(path, "only backward nodes carry a forward pair");
    }
    auto f = out.graph.index_of(*n.forward_pair);
    if (!f) throw ParseError(path, "references a missing node");
    if (out.graph.node(*f).is_backward) {
      throw ParseError(path, "must reference a forward node");
    }
  }
  return out;
}

std::string write_result(const Split& split, const ResultMeta& meta) {
  if (split.assignment.empty()) {
    throw std::invalid_argument("refusing to serialize an empty split");
  }
  ordered_json doc;
  doc["objective"] = meta.objective;
  doc["objectiveValue"] = split.objective_value.is_infinite()
                              ? json()
                              : json(split.objective_value.to_double());
  doc["status"] = meta.status;
  if (meta.gap) doc["gap"] = *meta.gap;
  doc["solver"] = meta.solver;
  doc["wallTimeSeconds"] = meta.wall_time_s;
  ordered_json assignment = ordered_json::array();
  for (const auto& [id, pl] : split.assignment) {  // std::map: sorted by id
    ordered_json entry;
    entry["nodeId"] = id;
    entry["device"] = pl.is_cpu() ? (pl.index == 0 ? "cpu" : "cpu" + std::to_string(pl.index))
                                  : "acc" + std::to_string(pl.index);
    entry["slot"] = pl.is_cpu() ? 1 : pl.slot;
    assignment.push_back(std::move(entry));
  }
  doc["assignment"] = std::move(assignment);
  ordered_json loads;
  std::vector<std::pair<std::string, Rat>> sorted = split.per_device_loads;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [label, load] : sorted) {
    loads[label] = load.is_infinite() ? json() : json(load.to_double());
  }
  doc["perDeviceLoads"] = std::move(loads);
  if (!split.replication.empty()) {
    ordered_json repl;
    for (const auto& [label, r] : split.replication) repl[label] = r;
    doc["replication"] = std::move(repl);
  }
  return doc.dump(2) + "\n";
}

std::pair<Split, ResultMeta> parse_result(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("$", e.what());
  }
  Split split;
  ResultMeta meta;
  if (doc.contains("objective")) meta.objective = doc["objective"];
  if (doc.contains("solver")) meta.solver = doc["solver"];
  if (doc.contains("status")) meta.status = doc["status"];
  if (doc.contains("objectiveValue") && doc["objectiveValue"].is_number()) {
    split.objective_value = Rat::from_double(doc["objectiveValue"].get<double>());
  }
  if (!doc.contains("assignment") || !doc["assignment"].is_array()) {
    throw ParseError("assignment", "missing assignment array");
  }
  for (size_t i = 0; i < doc["assignment"].size(); ++i) {
    const json& je = doc["assignment"][i];
    std::string path = "assignment[" + std::to_string(i) + "]";
    if (!je.contains("nodeId")) throw ParseError(path + ".nodeId", "missing");
    int id = int_at(je["nodeId"], path + ".nodeId");
    if (!je.contains("device") || !je["device"].is_string()) {
      throw ParseError(path + ".device", "missing device label");
    }
    std::string device = je["device"].get<std::string>();
    int slot = je.contains("slot") ? int_at(je["slot"], path + ".slot") : 1;
    Placement pl;
    if (device.rfind("cpu", 0) == 0) {
      pl = Placement::cpu(device == "cpu" ? 0 : std::stoi(device.substr(3)));
    } else if (device.rfind("acc", 0) == 0) {
      pl = Placement::acc(std::stoi(device.substr(3)), slot);
    } else {
      throw ParseError(path + ".device", "expected cpu* or acc*");
    }
    split.assignment[id] = pl;
  }
  if (doc.contains("replication") && doc["replication"].is_object()) {
    for (auto it = doc["replication"].begin(); it != doc["replication"].end();
         ++it) {
      split.replication[it.key()] = it.value().get<int>();
    }
  }
  return {std::move(split), std::move(meta)};
}

namespace {

const char* kAccPalette[] = {"#6fa8dc", "#93c47d", "#ffd966", "#c27ba0",
                             "#76a5af", "#f6b26b", "#8e7cc3", "#a2c4c9",
                             "#d5a6bd", "#b6d7a8"};
constexpr const char* kCpuColor = "#e06666";

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string render_dot(const Graph& g, const Split* split) {
  std::ostringstream os;
  os << "digraph workload {\n";
  os << "  node [shape=box, style=filled, fillcolor=white];\n";
  for (const Node& n : g.nodes()) {
    os << "  \"" << n.id << "\" [label=\""
       << escape(n.name.empty() ? std::to_string(n.id) : n.name);
    if (split) {
      auto pl = split->placement_of(n.id);
      if (pl) os << "\\n" << pl->label();
    }
    os << "\"";
    if (split) {
      auto pl = split->placement_of(n.id);
      if (pl) {
        const char* color =
            pl->is_cpu() ? kCpuColor : kAccPalette[(pl->index - 1) % 10];
        os << ", fillcolor=\"" << color << "\"";
      }
    }
    if (n.is_backward) os << ", peripheries=2";
    os << "];\n";
  }
  for (const Edge& e : g.edges()) {
    os << "  \"" << e.from << "\" -> \"" << e.to << "\";\n";
  }
  for (const Edge& e : g.artificial_edges()) {
    os << "  \"" << e.from << "\" -> \"" << e.to << "\" [style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace dagsplit
