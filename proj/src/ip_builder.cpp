#include "dagsplit/ip_builder.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dagsplit/pipeline_sim.hpp"

namespace dagsplit {

int MilpModel::add_var(std::string name, VarKind kind, VarMeta meta, Rat lb,
                       std::optional<Rat> ub) {
  vars.push_back(Variable{std::move(name), kind, lb, std::move(ub), meta});
  return static_cast<int>(vars.size()) - 1;
}

void MilpModel::add_con(std::string label, std::vector<LinTerm> terms,
                        Sense sense, Rat rhs) {
  cons.push_back(Constraint{std::move(label), std::move(terms), sense, rhs});
}

int MilpModel::var_index(const std::string& name) const {
  for (size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

using Role = VarMeta::Role;

std::string ids(int v) { return std::to_string(v); }

Rat big_h_bound(const Graph& g) {
  // Serializing all work and paying every transfer twice bounds any
  // schedule's latency.
  Rat h;
  for (const Node& n : g.nodes()) {
    Rat work = n.cpu_time;
    if (n.acc_supported()) work = Rat::max(work, n.acc_time);
    h += work;
    if (!n.comm_time.is_infinite()) h += Rat(2) * n.comm_time;
  }
  return h;
}

std::vector<std::pair<int, int>> colocation_pairs(const Graph& g) {
  std::vector<int> group = colocation_group_ids(g, /*with_training_pairs=*/true);
  std::map<int, std::vector<int>> members;
  for (int v = 0; v < g.size(); ++v) members[group[v]].push_back(v);
  std::vector<std::pair<int, int>> pairs;
  for (auto& [root, vs] : members) {
    if (vs.size() < 2) continue;
    std::sort(vs.begin(), vs.end(),
              [&](int a, int b) { return g.id_of(a) < g.id_of(b); });
    for (size_t i = 0; i + 1 < vs.size(); ++i) {
      pairs.emplace_back(vs[i], vs[i + 1]);
    }
  }
  return pairs;
}

// z-encoded contiguity of {v : x_{v,dev} = 1} restricted to `part`
// (edges with both endpoints inside the part).
void add_contiguity_block(MilpModel& m, const Graph& g, const NodeSet& part,
                          int dev, const std::vector<int>& x_of_node,
                          const std::string& tag) {
  std::vector<int> z_of_node(g.size(), -1);
  part.for_each([&](int v) {
    z_of_node[v] = m.add_var("z" + tag + "_" + ids(g.id_of(v)) + "_" + ids(dev),
                             VarKind::Continuous,
                             VarMeta{Role::Z, g.id_of(v), dev}, Rat(0), Rat(1));
    m.add_con("z1" + tag + "_" + ids(g.id_of(v)) + "_" + ids(dev),
              {{Rat(1), z_of_node[v]}, {Rat(-1), x_of_node[v]}}, Sense::Ge,
              Rat(0));
  });
  for (const Edge& e : g.edges()) {
    int u = *g.index_of(e.from), v = *g.index_of(e.to);
    if (!part.contains(u) || !part.contains(v)) continue;
    std::string suffix =
        tag + "_" + ids(e.from) + "_" + ids(e.to) + "_" + ids(dev);
    m.add_con("z2" + suffix, {{Rat(1), z_of_node[u]}, {Rat(-1), z_of_node[v]}},
              Sense::Ge, Rat(0));
    m.add_con("z3" + suffix,
              {{Rat(1), x_of_node[v]}, {Rat(-1), x_of_node[u]},
               {Rat(-1), z_of_node[v]}},
              Sense::Ge, Rat(-1));
  }
}

MilpModel build_latency(const Graph& g, const DeviceConfig& cfg, int q) {
  const int k = cfg.accelerators;
  const int slots = k * q;
  MilpModel m;
  m.kind = q == 1 ? ModelKind::LatencyContiguous : ModelKind::LatencyNonContiguous;
  m.big_h = big_h_bound(g);
  const Rat H = m.big_h;

  int width = max_antichain(g);
  if (cfg.cpus < width) {
    m.warnings.push_back("cpu count " + ids(cfg.cpus) +
                         " is below the graph width " + ids(width) +
                         "; the CPU pool underestimates CPU contention");
  }

  // x_{v,j}: j = 0 is the CPU pool, j = 1..k*q accelerator subgraph slots.
  // Without any CPU the pool keeps its place in the schema but is pinned off.
  std::vector<std::vector<int>> x(g.size(), std::vector<int>(slots + 1, -1));
  for (int v = 0; v < g.size(); ++v) {
    for (int j = 0; j <= slots; ++j) {
      bool pinned_off = j > 0 ? !g.node(v).acc_supported() : cfg.cpus == 0;
      x[v][j] = m.add_var(
          "x_" + ids(g.id_of(v)) + "_" + ids(j), VarKind::Binary,
          VarMeta{Role::X, g.id_of(v), j}, Rat(0),
          pinned_off ? std::optional<Rat>(Rat(0)) : std::nullopt);
    }
  }
  std::vector<std::vector<int>> cin(g.size(), std::vector<int>(slots + 1, -1));
  std::vector<std::vector<int>> cout(g.size(), std::vector<int>(slots + 1, -1));
  for (int v = 0; v < g.size(); ++v) {
    for (int j = 1; j <= slots; ++j) {
      cin[v][j] = m.add_var("commin_" + ids(g.id_of(v)) + "_" + ids(j),
                            VarKind::Binary, VarMeta{Role::CommIn, g.id_of(v), j});
      cout[v][j] = m.add_var("commout_" + ids(g.id_of(v)) + "_" + ids(j),
                             VarKind::Binary,
                             VarMeta{Role::CommOut, g.id_of(v), j});
    }
  }
  std::vector<int> lat(g.size());
  for (int v = 0; v < g.size(); ++v) {
    lat[v] = m.add_var("lat_" + ids(g.id_of(v)), VarKind::Continuous,
                       VarMeta{Role::Latency, g.id_of(v), -1});
  }
  std::vector<int> start(slots + 1, -1), fin(slots + 1, -1);
  for (int j = 1; j <= slots; ++j) {
    start[j] = m.add_var("start_" + ids(j), VarKind::Continuous,
                         VarMeta{Role::Start, -1, j});
    fin[j] = m.add_var("fin_" + ids(j), VarKind::Continuous,
                       VarMeta{Role::Finish, -1, j});
  }
  int total = m.add_var("total_latency", VarKind::Continuous,
                        VarMeta{Role::TotalLatency, -1, -1});
  m.objective = {{Rat(1), total}};

  for (int v = 0; v < g.size(); ++v) {
    std::vector<LinTerm> terms;
    for (int j = 0; j <= slots; ++j) terms.push_back({Rat(1), x[v][j]});
    m.add_con("assign_" + ids(g.id_of(v)), std::move(terms), Sense::Eq, Rat(1));
  }
  for (int i = 1; i <= k; ++i) {
    std::vector<LinTerm> terms;
    for (int v = 0; v < g.size(); ++v) {
      for (int j = (i - 1) * q + 1; j <= i * q; ++j) {
        if (!g.node(v).mem_size.is_zero()) {
          terms.push_back({g.node(v).mem_size, x[v][j]});
        }
      }
    }
    m.add_con("mem_acc_" + ids(i), std::move(terms), Sense::Le,
              cfg.memory_limit);
  }
  for (const Edge& e : g.edges()) {
    int u = *g.index_of(e.from), v = *g.index_of(e.to);
    for (int j = 1; j <= slots; ++j) {
      m.add_con("cin_" + ids(e.from) + "_" + ids(e.to) + "_" + ids(j),
                {{Rat(1), cin[u][j]}, {Rat(-1), x[v][j]}, {Rat(1), x[u][j]}},
                Sense::Ge, Rat(0));
      m.add_con("cout_" + ids(e.from) + "_" + ids(e.to) + "_" + ids(j),
                {{Rat(1), cout[u][j]}, {Rat(-1), x[u][j]}, {Rat(1), x[v][j]}},
                Sense::Ge, Rat(0));
    }
  }
  for (int v = 0; v < g.size(); ++v) {
    m.add_con("tl_" + ids(g.id_of(v)), {{Rat(1), total}, {Rat(-1), lat[v]}},
              Sense::Ge, Rat(0));
  }
  // start_j >= lat_v - (1 - commin_{v,j}) * H
  for (int v = 0; v < g.size(); ++v) {
    for (int j = 1; j <= slots; ++j) {
      m.add_con("start_" + ids(g.id_of(v)) + "_" + ids(j),
                {{Rat(1), start[j]}, {Rat(-1), lat[v]}, {Rat(-1) * H, cin[v][j]}},
                Sense::Ge, -H);
    }
  }
  // fin_j = start_j + in-transfer + processing + out-transfer
  for (int j = 1; j <= slots; ++j) {
    std::vector<LinTerm> terms{{Rat(1), fin[j]}, {Rat(-1), start[j]}};
    for (int v = 0; v < g.size(); ++v) {
      const Node& n = g.node(v);
      // Sentinel (infinite) communication belongs to nodes colocated with
      // all of their consumers; the transfer can never happen, so the
      // coefficient is dropped. Unsupported processing terms are dropped
      // because the matching x variable is pinned to zero.
      if (!n.comm_time.is_infinite() && !n.comm_time.is_zero()) {
        terms.push_back({-n.comm_time, cin[v][j]});
        terms.push_back({-n.comm_time, cout[v][j]});
      }
      if (n.acc_supported() && !n.acc_time.is_zero()) {
        terms.push_back({-n.acc_time, x[v][j]});
      }
    }
    m.add_con("fin_" + ids(j), std::move(terms), Sense::Eq, Rat(0));
  }
  for (int v = 0; v < g.size(); ++v) {
    m.add_con("latcpu_" + ids(g.id_of(v)),
              {{Rat(1), lat[v]}, {-g.node(v).cpu_time, x[v][0]}}, Sense::Ge,
              Rat(0));
  }
  for (const Edge& e : g.edges()) {
    int u = *g.index_of(e.from), v = *g.index_of(e.to);
    m.add_con("latpred_" + ids(e.from) + "_" + ids(e.to),
              {{Rat(1), lat[v]}, {-g.node(v).cpu_time, x[v][0]},
               {Rat(-1), lat[u]}},
              Sense::Ge, Rat(0));
  }
  // lat_v >= fin_j - (1 - x_{v,j}) * H
  for (int v = 0; v < g.size(); ++v) {
    for (int j = 1; j <= slots; ++j) {
      m.add_con("latfin_" + ids(g.id_of(v)) + "_" + ids(j),
                {{Rat(1), lat[v]}, {Rat(-1), fin[j]}, {Rat(-1) * H, x[v][j]}},
                Sense::Ge, -H);
    }
  }
  // An accelerator processes its subgraph slots in order.
  if (q > 1) {
    for (int j = 2; j <= slots; ++j) {
      if ((j - 1) % q == 0) continue;  // first slot of its accelerator
      m.add_con("seq_" + ids(j), {{Rat(1), start[j]}, {Rat(-1), fin[j - 1]}},
                Sense::Ge, Rat(0));
    }
  }
  // Contiguity per slot, separately for forward and backward parts when the
  // graph is a training graph.
  std::vector<std::pair<NodeSet, std::string>> parts;
  if (g.has_backward_nodes()) {
    parts.emplace_back(g.forward_set(), "f");
    parts.emplace_back(g.backward_set(), "b");
  } else {
    parts.emplace_back(NodeSet::full(g.size()), "");
  }
  for (int j = 1; j <= slots; ++j) {
    for (auto& [part, tag] : parts) {
      std::vector<int> x_of(g.size());
      for (int v = 0; v < g.size(); ++v) x_of[v] = x[v][j];
      add_contiguity_block(m, g, part, j, x_of, tag);
    }
  }
  // Colocation, expressed per device.
  for (auto [u, v] : colocation_pairs(g)) {
    std::string base =
        "coloc_" + ids(g.id_of(u)) + "_" + ids(g.id_of(v)) + "_";
    m.add_con(base + "0", {{Rat(1), x[u][0]}, {Rat(-1), x[v][0]}}, Sense::Eq,
              Rat(0));
    for (int i = 1; i <= k; ++i) {
      std::vector<LinTerm> terms;
      for (int j = (i - 1) * q + 1; j <= i * q; ++j) {
        terms.push_back({Rat(1), x[u][j]});
        terms.push_back({Rat(-1), x[v][j]});
      }
      m.add_con(base + ids(i), std::move(terms), Sense::Eq, Rat(0));
    }
  }
  return m;
}

}  // namespace

MilpModel build_latency_ip(const Graph& g, const DeviceConfig& config) {
  if (config.q != 1) {
    throw std::invalid_argument("build_latency_ip expects q == 1");
  }
  return build_latency(g, config, 1);
}

MilpModel build_latency_ip_noncontig(const Graph& g,
                                     const DeviceConfig& config) {
  return build_latency(g, config, config.q);
}

MilpModel build_maxload_ip(const Graph& g, const DeviceConfig& cfg,
                           bool contiguous, bool gpipe_objective) {
  const int k = cfg.accelerators, l = cfg.cpus;
  const int devices = k + l;
  MilpModel m;
  m.kind = gpipe_objective ? ModelKind::MaxLoadGpipe : ModelKind::MaxLoad;
  m.contiguous = contiguous;
  m.big_h = Rat(0);

  bool training = g.has_backward_nodes();
  NodeSet fw = g.forward_set();
  NodeSet bw = g.backward_set();

  std::vector<std::vector<int>> x(g.size(), std::vector<int>(devices + 1, -1));
  for (int v = 0; v < g.size(); ++v) {
    for (int i = 1; i <= devices; ++i) {
      bool pinned_off = i <= k && !g.node(v).acc_supported();
      x[v][i] = m.add_var(
          "x_" + ids(g.id_of(v)) + "_" + ids(i), VarKind::Binary,
          VarMeta{Role::X, g.id_of(v), i}, Rat(0),
          pinned_off ? std::optional<Rat>(Rat(0)) : std::nullopt);
    }
  }

  // Transfer indicators exist for accelerators only; CPUs read and write RAM
  // directly. The GPipe objective needs them split by part, matching the two
  // pipeline passes.
  struct PartVars {
    std::string tag;
    NodeSet consumers;  // in-transfers feed these
    std::vector<std::vector<int>> cin, cout;
    std::vector<int> load;  // per device
    int maxvar = -1;
  };
  std::vector<PartVars> parts;
  if (gpipe_objective) {
    parts.push_back({"fw", fw, {}, {}, {}, -1});
    parts.push_back({"bw", bw, {}, {}, {}, -1});
  } else {
    parts.push_back({"", NodeSet::full(g.size()), {}, {}, {}, -1});
  }
  for (auto& part : parts) {
    part.cin.assign(g.size(), std::vector<int>(k + 1, -1));
    part.cout.assign(g.size(), std::vector<int>(k + 1, -1));
    for (int v = 0; v < g.size(); ++v) {
      for (int i = 1; i <= k; ++i) {
        part.cin[v][i] = m.add_var(
            part.tag + "commin_" + ids(g.id_of(v)) + "_" + ids(i),
            VarKind::Binary, VarMeta{Role::CommIn, g.id_of(v), i});
        part.cout[v][i] = m.add_var(
            part.tag + "commout_" + ids(g.id_of(v)) + "_" + ids(i),
            VarKind::Binary, VarMeta{Role::CommOut, g.id_of(v), i});
      }
    }
    part.load.assign(devices + 1, -1);
    for (int i = 1; i <= devices; ++i) {
      part.load[i] = m.add_var(
          part.tag.empty() ? "load_" + ids(i) : part.tag + "load_" + ids(i),
          VarKind::Continuous,
          VarMeta{part.tag.empty()
                      ? Role::Load
                      : (part.tag == "fw" ? Role::FwLoad : Role::BwLoad),
                  -1, i});
    }
  }
  if (gpipe_objective) {
    parts[0].maxvar = m.add_var("maxfw", VarKind::Continuous,
                                VarMeta{Role::MaxFw, -1, -1});
    parts[1].maxvar = m.add_var("maxbw", VarKind::Continuous,
                                VarMeta{Role::MaxBw, -1, -1});
    m.objective = {{Rat(1), parts[0].maxvar}, {Rat(1), parts[1].maxvar}};
  } else {
    parts[0].maxvar = m.add_var("maxload", VarKind::Continuous,
                                VarMeta{Role::MaxLoad, -1, -1});
    m.objective = {{Rat(1), parts[0].maxvar}};
  }

  for (int v = 0; v < g.size(); ++v) {
    std::vector<LinTerm> terms;
    for (int i = 1; i <= devices; ++i) terms.push_back({Rat(1), x[v][i]});
    m.add_con("assign_" + ids(g.id_of(v)), std::move(terms), Sense::Eq, Rat(1));
  }
  for (int i = 1; i <= k; ++i) {
    std::vector<LinTerm> terms;
    for (int v = 0; v < g.size(); ++v) {
      if (!g.node(v).mem_size.is_zero()) {
        terms.push_back({g.node(v).mem_size, x[v][i]});
      }
    }
    m.add_con("mem_acc_" + ids(i), std::move(terms), Sense::Le,
              cfg.memory_limit);
  }
  for (auto& part : parts) {
    for (const Edge& e : g.edges()) {
      int u = *g.index_of(e.from), v = *g.index_of(e.to);
      for (int i = 1; i <= k; ++i) {
        if (part.consumers.contains(v)) {
          m.add_con(part.tag + "cin_" + ids(e.from) + "_" + ids(e.to) + "_" +
                        ids(i),
                    {{Rat(1), part.cin[u][i]}, {Rat(-1), x[v][i]},
                     {Rat(1), x[u][i]}},
                    Sense::Ge, Rat(0));
        }
        if (part.consumers.contains(u)) {
          m.add_con(part.tag + "cout_" + ids(e.from) + "_" + ids(e.to) + "_" +
                        ids(i),
                    {{Rat(1), part.cout[u][i]}, {Rat(-1), x[u][i]},
                     {Rat(1), x[v][i]}},
                    Sense::Ge, Rat(0));
        }
      }
    }
    for (int i = 1; i <= devices; ++i) {
      std::vector<LinTerm> terms{{Rat(1), part.load[i]}};
      if (i <= k) {
        for (int v = 0; v < g.size(); ++v) {
          const Node& n = g.node(v);
          if (!n.comm_time.is_infinite() && !n.comm_time.is_zero()) {
            terms.push_back({-n.comm_time, part.cin[v][i]});
            if (part.consumers.contains(v)) {
              terms.push_back({-n.comm_time, part.cout[v][i]});
            }
          }
          if (part.consumers.contains(v) && n.acc_supported() &&
              !n.acc_time.is_zero()) {
            terms.push_back({-n.acc_time, x[v][i]});
          }
        }
        m.add_con(part.tag + "load_acc_" + ids(i), std::move(terms), Sense::Eq,
                  Rat(0));
      } else {
        for (int v = 0; v < g.size(); ++v) {
          if (part.consumers.contains(v) && !g.node(v).cpu_time.is_zero()) {
            terms.push_back({-g.node(v).cpu_time, x[v][i]});
          }
        }
        m.add_con(part.tag + "load_cpu_" + ids(i), std::move(terms), Sense::Eq,
                  Rat(0));
      }
      m.add_con(part.tag + "max_" + ids(i),
                {{Rat(1), part.maxvar}, {Rat(-1), part.load[i]}}, Sense::Ge,
                Rat(0));
    }
  }
  if (contiguous) {
    std::vector<std::pair<NodeSet, std::string>> zparts;
    if (training) {
      zparts.emplace_back(fw, "f");
      zparts.emplace_back(bw, "b");
    } else {
      zparts.emplace_back(NodeSet::full(g.size()), "");
    }
    for (int i = 1; i <= devices; ++i) {
      for (auto& [part, tag] : zparts) {
        std::vector<int> x_of(g.size());
        for (int v = 0; v < g.size(); ++v) x_of[v] = x[v][i];
        add_contiguity_block(m, g, part, i, x_of, tag);
      }
    }
  }
  for (auto [u, v] : colocation_pairs(g)) {
    for (int i = 1; i <= devices; ++i) {
      m.add_con("coloc_" + ids(g.id_of(u)) + "_" + ids(g.id_of(v)) + "_" +
                    ids(i),
                {{Rat(1), x[u][i]}, {Rat(-1), x[v][i]}}, Sense::Eq, Rat(0));
    }
  }
  return m;
}

// --- LP emission ---

namespace {

void append_terms(std::string& out, const std::vector<LinTerm>& terms,
                  const MilpModel& m) {
  bool first = true;
  for (const LinTerm& t : terms) {
    Rat c = t.coef;
    if (c.is_zero()) continue;
    bool neg = c.is_negative();
    if (neg) c = -c;
    if (first) {
      out += neg ? "- " : "";
      first = false;
    } else {
      out += neg ? " - " : " + ";
    }
    if (!(c == Rat(1))) {
      out += c.to_decimal_string();
      out += " ";
    }
    out += m.vars[t.var].name;
  }
  if (first) out += "0 " + m.vars[0].name;  // empty expression, keep it valid
}

}  // namespace

std::string emit_lp(const MilpModel& m) {
  std::string out;
  out += "\\ dagsplit model\n";
  out += "Minimize\n obj: ";
  append_terms(out, m.objective, m);
  out += "\nSubject To\n";
  for (const Constraint& c : m.cons) {
    out += " " + c.label + ": ";
    append_terms(out, c.terms, m);
    switch (c.sense) {
      case Sense::Le: out += " <= "; break;
      case Sense::Eq: out += " = "; break;
      case Sense::Ge: out += " >= "; break;
    }
    out += c.rhs.to_decimal_string();
    out += "\n";
  }
  std::string bounds;
  for (const Variable& v : m.vars) {
    if (v.kind == VarKind::Binary) {
      if (v.ub && *v.ub == Rat(0)) bounds += " " + v.name + " = 0\n";
      continue;
    }
    if (v.ub) {
      bounds += " " + v.lb.to_decimal_string() + " <= " + v.name +
                " <= " + v.ub->to_decimal_string() + "\n";
    } else if (!v.lb.is_zero()) {
      bounds += " " + v.name + " >= " + v.lb.to_decimal_string() + "\n";
    }
  }
  if (!bounds.empty()) {
    out += "Bounds\n" + bounds;
  }
  std::string bins;
  int on_line = 0;
  for (const Variable& v : m.vars) {
    if (v.kind != VarKind::Binary) continue;
    bins += " " + v.name;
    if (++on_line == 16) {
      bins += "\n";
      on_line = 0;
    }
  }
  if (!bins.empty()) {
    out += "Binaries\n" + bins;
    if (on_line != 0) out += "\n";
  }
  out += "End\n";
  return out;
}

// --- assignment checking ---

namespace {

struct SplitView {
  // dense node index -> device index in the model's convention
  std::vector<int> device;
  int slots;  // highest device index
};

SplitView make_view(const MilpModel& m, const Graph& g,
                    const DeviceConfig& cfg, const Split& split) {
  SplitView view;
  bool latency = m.kind == ModelKind::LatencyContiguous ||
                 m.kind == ModelKind::LatencyNonContiguous;
  int q = m.kind == ModelKind::LatencyNonContiguous ? cfg.q : 1;
  view.slots = latency ? cfg.accelerators * q : cfg.accelerators + cfg.cpus;
  view.device.assign(g.size(), -1);
  for (const auto& [id, pl] : split.assignment) {
    auto idx = g.index_of(id);
    if (!idx) continue;
    if (latency) {
      view.device[*idx] = pl.is_cpu() ? 0 : (pl.index - 1) * q + pl.slot;
    } else {
      view.device[*idx] =
          pl.is_cpu() ? cfg.accelerators + std::max(pl.index, 1) : pl.index;
    }
  }
  for (int v = 0; v < g.size(); ++v) {
    if (view.device[v] < 0) {
      throw std::invalid_argument("split does not cover node " +
                                  std::to_string(g.id_of(v)));
    }
  }
  return view;
}

}  // namespace

CheckResult check_assignment(const MilpModel& m, const Graph& g,
                             const DeviceConfig& cfg, const Split& split) {
  SplitView view = make_view(m, g, cfg, split);
  bool latency = m.kind == ModelKind::LatencyContiguous ||
                 m.kind == ModelKind::LatencyNonContiguous;

  // Device sets per model device index.
  std::vector<NodeSet> dev_set(view.slots + 1, NodeSet(g.size()));
  for (int v = 0; v < g.size(); ++v) dev_set[view.device[v]].insert(v);

  std::optional<LatencyReport> lat_report;
  bool deadlocked = false;
  if (latency) {
    lat_report = evaluate_latency(g, cfg, split);
    // An unschedulable subgraph structure still has well-defined binaries;
    // evaluate those constraints so the offending one (typically a
    // contiguity block) is named, and fall back to a generic verdict only
    // if they all hold.
    deadlocked = !lat_report;
  }

  // Part-restricted reachability for z values.
  std::map<std::string, Reachability> part_reach;
  auto reach_for = [&](const NodeSet& part, const std::string& key) {
    auto it = part_reach.find(key);
    if (it == part_reach.end()) {
      it = part_reach.emplace(key, reachability_within(g, part)).first;
    }
    return &it->second;
  };
  NodeSet fw = g.forward_set(), bw = g.backward_set(), all = NodeSet::full(g.size());

  std::vector<Rat> value(m.vars.size(), Rat(0));
  auto node_idx = [&](const Variable& var) { return *g.index_of(var.meta.node); };
  for (size_t vi = 0; vi < m.vars.size(); ++vi) {
    const Variable& var = m.vars[vi];
    switch (var.meta.role) {
      case Role::X: {
        int v = node_idx(var);
        value[vi] = Rat(view.device[v] == var.meta.device ? 1 : 0);
        break;
      }
      case Role::CommIn: {
        int u = node_idx(var);
        int dev = var.meta.device;
        // The fw/bw prefix restricts consumers for GPipe loads.
        const NodeSet* consumers = &all;
        if (var.name.rfind("fwcommin", 0) == 0) consumers = &fw;
        if (var.name.rfind("bwcommin", 0) == 0) consumers = &bw;
        bool transfers = false;
        if (view.device[u] != dev) {
          for (int w : g.out(u)) {
            if (view.device[w] == dev && consumers->contains(w)) {
              transfers = true;
              break;
            }
          }
        }
        value[vi] = Rat(transfers ? 1 : 0);
        break;
      }
      case Role::CommOut: {
        int u = node_idx(var);
        int dev = var.meta.device;
        const NodeSet* producers = &all;
        if (var.name.rfind("fwcommout", 0) == 0) producers = &fw;
        if (var.name.rfind("bwcommout", 0) == 0) producers = &bw;
        bool transfers = false;
        if (view.device[u] == dev && producers->contains(u)) {
          for (int w : g.out(u)) {
            if (view.device[w] != dev) {
              transfers = true;
              break;
            }
          }
        }
        value[vi] = Rat(transfers ? 1 : 0);
        break;
      }
      case Role::Z: {
        int v = node_idx(var);
        int dev = var.meta.device;
        const NodeSet* part = &all;
        const Reachability* reach = reach_for(all, "all");
        if (var.name.rfind("zf_", 0) == 0) {
          part = &fw;
          reach = reach_for(fw, "fw");
        } else if (var.name.rfind("zb_", 0) == 0) {
          part = &bw;
          reach = reach_for(bw, "bw");
        }
        bool hit = false;
        if (part->contains(v)) {
          NodeSet targets = dev_set[dev] & *part;
          auto row = reach->from.row(v);
          auto tw = targets.words();
          for (size_t i = 0; i < tw.size() && !hit; ++i) {
            if (row[i] & tw[i]) hit = true;
          }
        }
        value[vi] = Rat(hit ? 1 : 0);
        break;
      }
      case Role::Latency:
        if (lat_report) value[vi] = lat_report->node_latency.at(var.meta.node);
        break;
      case Role::TotalLatency:
        if (lat_report) value[vi] = lat_report->total;
        break;
      case Role::Start:
      case Role::Finish:
        // filled below from slot_times
        break;
      default:
        break;  // Load/MaxLoad roles filled after binaries
    }
  }
  if (latency && !deadlocked) {
    // Map slot labels back to model device indices.
    int q = m.kind == ModelKind::LatencyNonContiguous ? cfg.q : 1;
    for (size_t vi = 0; vi < m.vars.size(); ++vi) {
      const Variable& var = m.vars[vi];
      if (var.meta.role != Role::Start && var.meta.role != Role::Finish) continue;
      int j = var.meta.device;
      int acc = (j - 1) / q + 1, slot = (j - 1) % q + 1;
      std::string label = Placement::acc(acc, slot).label();
      Rat start_v, fin_v;
      bool found = false;
      for (auto& [l, times] : lat_report->slot_times) {
        if (l == label) {
          start_v = times.first;
          fin_v = times.second;
          found = true;
          break;
        }
      }
      if (!found) {
        // Empty slot: minimal feasible values chain from the previous slot.
        start_v = Rat(0);
        if (slot > 1) {
          int prev = m.var_index("fin_" + std::to_string(j - 1));
          if (prev >= 0) start_v = value[prev];
        }
        fin_v = start_v;
      }
      value[vi] = var.meta.role == Role::Start ? start_v : fin_v;
    }
  }
  // Load variables take the value of their defining equality.
  for (const Constraint& c : m.cons) {
    if (c.label.find("load_acc_") == std::string::npos &&
        c.label.find("load_cpu_") == std::string::npos) {
      continue;
    }
    int load_var = -1;
    Rat rest;
    for (const LinTerm& t : c.terms) {
      Role r = m.vars[t.var].meta.role;
      if (r == Role::Load || r == Role::FwLoad || r == Role::BwLoad) {
        load_var = t.var;
      } else {
        rest += t.coef * value[t.var];
      }
    }
    if (load_var >= 0) value[load_var] = c.rhs - rest;
  }
  for (size_t vi = 0; vi < m.vars.size(); ++vi) {
    Role r = m.vars[vi].meta.role;
    if (r != Role::MaxLoad && r != Role::MaxFw && r != Role::MaxBw) continue;
    Role want = r == Role::MaxLoad ? Role::Load
                : r == Role::MaxFw ? Role::FwLoad
                                   : Role::BwLoad;
    Rat worst;
    for (size_t wi = 0; wi < m.vars.size(); ++wi) {
      if (m.vars[wi].meta.role == want) worst = Rat::max(worst, value[wi]);
    }
    value[vi] = worst;
  }

  CheckResult result;
  for (const LinTerm& t : m.objective) result.objective += t.coef * value[t.var];
  if (deadlocked) result.objective = Rat::infinity();

  auto binary_only = [&](const Constraint& c) {
    for (const LinTerm& t : c.terms) {
      const Variable& var = m.vars[t.var];
      if (var.kind != VarKind::Binary && var.meta.role != Role::Z) return false;
    }
    return true;
  };

  // Variable bounds first, then constraints in insertion order.
  for (size_t vi = 0; vi < m.vars.size(); ++vi) {
    const Variable& var = m.vars[vi];
    if (value[vi] < var.lb) {
      return {false, "bound_" + var.name, var.lb - value[vi], result.objective};
    }
    if (var.ub && value[vi] > *var.ub) {
      return {false, "bound_" + var.name, value[vi] - *var.ub,
              result.objective};
    }
  }
  for (const Constraint& c : m.cons) {
    if (deadlocked && !binary_only(c)) continue;
    Rat lhs;
    for (const LinTerm& t : c.terms) lhs += t.coef * value[t.var];
    bool ok = true;
    Rat slack;
    switch (c.sense) {
      case Sense::Le:
        ok = lhs <= c.rhs;
        if (!ok) slack = lhs - c.rhs;
        break;
      case Sense::Ge:
        ok = lhs >= c.rhs;
        if (!ok) slack = c.rhs - lhs;
        break;
      case Sense::Eq:
        ok = lhs == c.rhs;
        if (!ok) slack = lhs > c.rhs ? lhs - c.rhs : c.rhs - lhs;
        break;
    }
    if (!ok) {
      return {false, c.label, slack, result.objective};
    }
  }
  if (deadlocked) {
    return {false, "schedulability", Rat::infinity(), Rat::infinity()};
  }
  return result;
}

}  // namespace dagsplit
