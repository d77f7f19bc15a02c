#include <algorithm>
#include <functional>
#include <optional>

#include "dagsplit/dp_solver.hpp"
#include "dagsplit/ip_builder.hpp"
#include "dagsplit/pipeline_sim.hpp"

namespace dagsplit {

namespace {

struct GroupInfo {
  std::vector<int> members;  // dense indices
  Rat mem;
  Rat acc_proc;  // finite part of acc times
  Rat cpu_proc;
  bool unsupported = false;
};

std::vector<GroupInfo> build_groups(const Graph& g, bool heaviest_first) {
  std::vector<int> order = seeded_topo_order(g, 0);
  std::vector<int> pos(g.size());
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);

  std::vector<int> rep = colocation_group_ids(g, /*with_training_pairs=*/true);
  std::vector<std::vector<int>> members(g.size());
  for (int v = 0; v < g.size(); ++v) members[rep[v]].push_back(v);
  std::vector<GroupInfo> groups;
  for (int r = 0; r < g.size(); ++r) {
    if (members[r].empty()) continue;
    GroupInfo gi;
    gi.members = members[r];
    for (int v : gi.members) {
      const Node& n = g.node(v);
      gi.mem += n.mem_size;
      gi.cpu_proc += n.cpu_time;
      if (n.acc_supported()) gi.acc_proc += n.acc_time;
      else gi.unsupported = true;
    }
    groups.push_back(std::move(gi));
  }
  auto earliest = [&](const GroupInfo& gi) {
    int best = INT32_MAX;
    for (int v : gi.members) best = std::min(best, pos[v]);
    return best;
  };
  if (heaviest_first) {
    std::stable_sort(groups.begin(), groups.end(),
                     [&](const GroupInfo& a, const GroupInfo& b) {
                       Rat wa = Rat::max(a.acc_proc, a.cpu_proc);
                       Rat wb = Rat::max(b.acc_proc, b.cpu_proc);
                       if (!(wa == wb)) return wb < wa;
                       return earliest(a) < earliest(b);
                     });
  } else {
    std::stable_sort(groups.begin(), groups.end(),
                     [&](const GroupInfo& a, const GroupInfo& b) {
                       return earliest(a) < earliest(b);
                     });
  }
  return groups;
}

// A visible contiguity witness for one device: some already-assigned node v
// off the device is both reachable from the device's members and reaches
// them. Later assignments can never repair such a witness, so pruning on it
// is sound. Reachability rows here are already part-restricted when needed.
bool contiguity_witness(const Reachability& r, const NodeSet& device_part,
                        const NodeSet& device_all, const NodeSet& assigned) {
  size_t words = device_all.words().size();
  std::vector<uint64_t> from_d(words, 0), to_d(words, 0);
  device_part.for_each([&](int u) {
    r.from.or_row_into(u, from_d);
    r.to.or_row_into(u, to_d);
  });
  auto aw = assigned.words();
  auto dw = device_all.words();
  for (size_t i = 0; i < words; ++i) {
    if (from_d[i] & to_d[i] & aw[i] & ~dw[i]) return true;
  }
  return false;
}

// --- max-load kinds ---

struct MaxloadSearch {
  const Graph& g;
  const DeviceConfig& cfg;
  const OracleLimits& limits;
  long long tick = 0;
  OracleKind kind;
  bool training;
  NodeSet fw, bw;
  std::vector<GroupInfo> groups;
  std::optional<Reachability> reach_fw, reach_bw;

  int k, l;
  std::vector<NodeSet> dev_set;  // 1..k accelerators, k+1..k+l CPUs
  std::vector<Rat> dev_mem, dev_proc;
  NodeSet assigned;
  std::vector<int> dev_of;  // per node
  // Multiplicity of device-quotient edges induced so far. The exact solver
  // carves devices along a chain of ideals, which covers an assignment
  // exactly when this quotient is acyclic (for training: the quotient of the
  // forward part); per-block contiguity then comes for free.
  std::vector<std::vector<int>> qcount;
  std::vector<int> choice;
  int used_acc = 0, used_cpu = 0;

  Rat best = Rat::infinity();
  std::vector<int> best_choice;

  MaxloadSearch(const Graph& graph, const DeviceConfig& config,
                OracleKind oracle_kind, const OracleLimits& lim)
      : g(graph),
        cfg(config),
        limits(lim),
        kind(oracle_kind),
        training(graph.has_backward_nodes()),
        fw(graph.forward_set()),
        bw(graph.backward_set()),
        k(config.accelerators),
        l(config.cpus),
        assigned(graph.size()),
        dev_of(graph.size(), -1) {
    bool contiguous = kind != OracleKind::MaxLoadFree;
    groups = build_groups(g, /*heaviest_first=*/!contiguous);
    if (contiguous && training) {
      reach_fw = reachability_within(g, fw);
      reach_bw = reachability_within(g, bw);
    }
    if (contiguous && kind == OracleKind::MaxLoadGpipe && !training) {
      // per-part checks degenerate to whole-graph checks
      reach_fw = reachability(g);
    }
    dev_set.assign(k + l + 1, NodeSet(g.size()));
    dev_mem.assign(k + l + 1, Rat(0));
    dev_proc.assign(k + l + 1, Rat(0));
    qcount.assign(k + l + 1, std::vector<int>(k + l + 1, 0));
    choice.assign(groups.size(), -1);
  }

  // Chain-quotient participants: all nodes for inference, the forward part
  // for training (backward placement is constrained separately).
  bool in_quotient(int v) const { return !training || fw.contains(v); }

  void quotient_update(int x, int d, int delta) {
    if (!in_quotient(x)) return;
    for (int u : g.in_all(x)) {
      if (dev_of[u] >= 0 && dev_of[u] != d && in_quotient(u)) {
        qcount[dev_of[u]][d] += delta;
      }
    }
    for (int w : g.out_all(x)) {
      if (dev_of[w] >= 0 && dev_of[w] != d && in_quotient(w)) {
        qcount[d][dev_of[w]] += delta;
      }
    }
  }

  bool quotient_cyclic() const {
    int n = k + l;
    std::vector<int> state(n + 1, 0);
    std::function<bool(int)> dfs = [&](int v) {
      state[v] = 1;
      for (int w = 1; w <= n; ++w) {
        if (qcount[v][w] == 0) continue;
        if (state[w] == 1) return true;
        if (state[w] == 0 && dfs(w)) return true;
      }
      state[v] = 2;
      return false;
    };
    for (int v = 1; v <= n; ++v) {
      if (state[v] == 0 && dfs(v)) return true;
    }
    return false;
  }

  bool backward_part_violated(int d) const {
    NodeSet b = dev_set[d] & bw;
    return !b.empty() && contiguity_witness(*reach_bw, b, dev_set[d], assigned);
  }

  bool device_structure_violated(int d) const {
    if (kind == OracleKind::MaxLoadGpipe) {
      // The gpipe objective pairs with the IP feasible set: each part of
      // each device contiguous on its own.
      if (training) {
        NodeSet f = dev_set[d] & fw;
        NodeSet b = dev_set[d] & bw;
        if (!f.empty() &&
            contiguity_witness(*reach_fw, f, dev_set[d], assigned)) {
          return true;
        }
        if (!b.empty() &&
            contiguity_witness(*reach_bw, b, dev_set[d], assigned)) {
          return true;
        }
        return false;
      }
      return contiguity_witness(*reach_fw, dev_set[d], dev_set[d], assigned);
    }
    if (quotient_cyclic()) return true;
    return training && backward_part_violated(d);
  }

  Rat leaf_objective() const {
    if (kind == OracleKind::MaxLoadGpipe) {
      Rat max_fw, max_bw;
      for (int d = 1; d <= k + l; ++d) {
        NodeSet f = dev_set[d] & fw;
        NodeSet b = dev_set[d] & bw;
        if (d <= k) {
          AccParts pf = acc_cost_parts(g, f, dev_set[d]);
          AccParts pb = acc_cost_parts(g, b, dev_set[d]);
          max_fw = Rat::max(max_fw, combine_interleaving(pf, cfg.interleaving));
          max_bw = Rat::max(max_bw, combine_interleaving(pb, cfg.interleaving));
        } else {
          max_fw = Rat::max(max_fw, cpu_cost(g, f));
          max_bw = Rat::max(max_bw, cpu_cost(g, b));
        }
      }
      return max_fw + max_bw;
    }
    Rat worst;
    for (int d = 1; d <= k + l; ++d) {
      if (dev_set[d].empty()) continue;
      Rat load = d <= k ? acc_cost(g, dev_set[d], cfg) : cpu_cost(g, dev_set[d]);
      worst = Rat::max(worst, load);
    }
    return worst;
  }

  void place(size_t gi, int d) {
    for (int v : groups[gi].members) {
      quotient_update(v, d, +1);
      dev_set[d].insert(v);
      assigned.insert(v);
      dev_of[v] = d;
    }
    dev_mem[d] += groups[gi].mem;
    dev_proc[d] += d <= k ? groups[gi].acc_proc : groups[gi].cpu_proc;
    choice[gi] = d;
  }
  void unplace(size_t gi, int d) {
    const auto& members = groups[gi].members;
    for (auto it = members.rbegin(); it != members.rend(); ++it) {
      int v = *it;
      dev_of[v] = -1;
      dev_set[d].erase(v);
      assigned.erase(v);
      quotient_update(v, d, -1);
    }
    dev_mem[d] -= groups[gi].mem;
    dev_proc[d] -= d <= k ? groups[gi].acc_proc : groups[gi].cpu_proc;
    choice[gi] = -1;
  }

  void try_device(size_t gi, int d, int& used) {
    bool fresh = dev_set[d].empty();
    place(gi, d);
    bool ok =
        kind == OracleKind::MaxLoadFree || !device_structure_violated(d);
    if (ok) {
      if (fresh) ++used;
      recurse(gi + 1);
      if (fresh) --used;
    }
    unplace(gi, d);
  }

  void check_deadline() {
    if (!limits.deadline) return;
    if ((++tick & 2047) != 0) return;
    if (std::chrono::steady_clock::now() > *limits.deadline) {
      throw DeadlineExceeded();
    }
  }

  void recurse(size_t gi) {
    check_deadline();
    if (gi == groups.size()) {
      if (kind != OracleKind::MaxLoadFree) {
        // The quotient check is already complete at a leaf; the per-part
        // witness prunes only inspect the device being modified, so a
        // witness completed by placing its middle node elsewhere surfaces
        // here.
        for (int d = 1; d <= k + l; ++d) {
          if (!dev_set[d].empty() && device_structure_violated(d)) return;
        }
      }
      Rat obj = leaf_objective();
      if (obj < best) {
        best = obj;
        best_choice = choice;
      }
      return;
    }
    // Processing time alone already bounds every device's final load.
    Rat proc_bound;
    for (int d = 1; d <= k + l; ++d) {
      proc_bound = Rat::max(proc_bound, dev_proc[d]);
    }
    if (!(proc_bound < best)) return;

    const GroupInfo& group = groups[gi];
    int acc_limit = std::min(k, used_acc + 1);
    int cpu_limit = std::min(l, used_cpu + 1);
    for (int d = 1; d <= acc_limit && !group.unsupported; ++d) {
      if (dev_mem[d] + group.mem > cfg.memory_limit) continue;
      try_device(gi, d, used_acc);
    }
    for (int c = 1; c <= cpu_limit; ++c) {
      try_device(gi, k + c, used_cpu);
    }
  }

  std::optional<Split> run() {
    recurse(0);
    if (best.is_infinite()) return std::nullopt;
    std::vector<SplitBlock> blocks(k + l + 1);
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      int d = best_choice[gi];
      blocks[d].cpu = d > k;
      for (int v : groups[gi].members) blocks[d].members.push_back(v);
    }
    std::vector<SplitBlock> nonempty;
    for (auto& b : blocks) {
      if (!b.members.empty()) nonempty.push_back(std::move(b));
    }
    return make_canonical_split(g, cfg, std::move(nonempty), best);
  }
};

// --- latency kind ---

struct LatencySearch {
  const Graph& g;
  const DeviceConfig& cfg;
  const OracleLimits& limits;
  long long tick = 0;
  bool training;
  NodeSet fw, bw;
  std::vector<GroupInfo> groups;
  Reachability reach_all;
  std::optional<Reachability> reach_fw, reach_bw;

  int k, q, slots;
  std::vector<NodeSet> slot_set;  // index 0 = CPU pool
  std::vector<Rat> acc_mem;
  NodeSet assigned;
  std::vector<int> choice;
  int used_acc = 0;

  Rat best = Rat::infinity();
  std::vector<int> best_choice;

  LatencySearch(const Graph& graph, const DeviceConfig& config,
                const OracleLimits& lim)
      : g(graph),
        cfg(config),
        limits(lim),
        training(graph.has_backward_nodes()),
        fw(graph.forward_set()),
        bw(graph.backward_set()),
        reach_all(reachability(graph)),
        k(config.accelerators),
        q(config.q),
        slots(config.accelerators * config.q),
        assigned(graph.size()) {
    groups = build_groups(g, /*heaviest_first=*/false);
    if (training) {
      reach_fw = reachability_within(g, fw);
      reach_bw = reachability_within(g, bw);
    }
    slot_set.assign(slots + 1, NodeSet(g.size()));
    acc_mem.assign(k + 1, Rat(0));
    choice.assign(groups.size(), -1);
  }

  bool slot_contiguity_violated(int j) const {
    if (training) {
      NodeSet f = slot_set[j] & fw;
      NodeSet b = slot_set[j] & bw;
      if (!f.empty() && contiguity_witness(*reach_fw, f, slot_set[j], assigned)) {
        return true;
      }
      if (!b.empty() && contiguity_witness(*reach_bw, b, slot_set[j], assigned)) {
        return true;
      }
      return false;
    }
    return contiguity_witness(reach_all, slot_set[j], slot_set[j], assigned);
  }

  Split current_split(const std::vector<int>& chosen) const {
    Split split;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      int j = chosen[gi];
      Placement pl = j == 0
                         ? Placement::cpu(0)
                         : Placement::acc((j - 1) / q + 1, (j - 1) % q + 1);
      for (int v : groups[gi].members) split.assignment[g.id_of(v)] = pl;
    }
    return split;
  }

  void check_deadline() {
    if (!limits.deadline) return;
    if ((++tick & 2047) != 0) return;
    if (std::chrono::steady_clock::now() > *limits.deadline) {
      throw DeadlineExceeded();
    }
  }

  void recurse(size_t gi) {
    check_deadline();
    if (gi == groups.size()) {
      for (int j = 1; j <= slots; ++j) {
        if (!slot_set[j].empty() && slot_contiguity_violated(j)) return;
      }
      Split split = current_split(choice);
      auto report = evaluate_latency(g, cfg, split);
      if (!report) return;  // unschedulable slot order
      if (report->total < best) {
        best = report->total;
        best_choice = choice;
      }
      return;
    }
    const GroupInfo& group = groups[gi];
    if (cfg.cpus > 0) try_slot(gi, 0);
    int acc_limit = std::min(k, used_acc + 1);
    for (int acc = 1; acc <= acc_limit && !group.unsupported; ++acc) {
      if (acc_mem[acc] + group.mem > cfg.memory_limit) continue;
      for (int s = 1; s <= q; ++s) {
        int j = (acc - 1) * q + s;
        if (s > 1 && slot_set[j - 1].empty()) break;  // fill slots in order
        try_slot(gi, j);
      }
    }
  }

  void try_slot(size_t gi, int j) {
    const GroupInfo& group = groups[gi];
    int acc = j == 0 ? 0 : (j - 1) / q + 1;
    bool fresh_acc = acc > used_acc;
    for (int v : group.members) {
      slot_set[j].insert(v);
      assigned.insert(v);
    }
    if (acc > 0) acc_mem[acc] += group.mem;
    bool ok = j == 0 || !slot_contiguity_violated(j);
    if (ok) {
      if (fresh_acc) ++used_acc;
      choice[gi] = j;
      recurse(gi + 1);
      choice[gi] = -1;
      if (fresh_acc) --used_acc;
    }
    if (acc > 0) acc_mem[acc] -= group.mem;
    for (int v : group.members) {
      slot_set[j].erase(v);
      assigned.erase(v);
    }
  }

  std::optional<Split> run() {
    recurse(0);
    if (best.is_infinite()) return std::nullopt;
    Split split = current_split(best_choice);
    split.objective_value = best;
    auto report = evaluate_latency(g, cfg, split);
    for (auto& [label, times] : report->slot_times) {
      split.per_device_loads.emplace_back(label, times.second - times.first);
    }
    return split;
  }
};

}  // namespace

std::optional<Split> oracle_solve(OracleKind kind, const Graph& g,
                                  const DeviceConfig& cfg,
                                  const OracleLimits& limits,
                                  bool* timed_out) {
  if (timed_out) *timed_out = false;
  if (g.size() > limits.max_nodes) {
    throw InstanceTooLarge(std::to_string(g.size()) + " nodes > " +
                           std::to_string(limits.max_nodes));
  }
  if (kind == OracleKind::Latency) {
    if (cfg.q > limits.max_q) {
      throw InstanceTooLarge("q = " + std::to_string(cfg.q));
    }
    if (cfg.q > 1 && cfg.accelerators > limits.max_k_latency_noncontig) {
      throw InstanceTooLarge("k = " + std::to_string(cfg.accelerators) +
                             " with q > 1");
    }
    LatencySearch search(g, cfg, limits);
    try {
      return search.run();
    } catch (const DeadlineExceeded&) {
      if (search.best.is_infinite()) throw;
      if (timed_out) *timed_out = true;
      Split split = search.current_split(search.best_choice);
      split.objective_value = search.best;
      return split;
    }
  }
  MaxloadSearch search(g, cfg, kind, limits);
  try {
    return search.run();
  } catch (const DeadlineExceeded&) {
    if (search.best.is_infinite()) throw;
    if (timed_out) *timed_out = true;
    std::vector<SplitBlock> blocks(search.k + search.l + 1);
    for (size_t gi = 0; gi < search.groups.size(); ++gi) {
      int d = search.best_choice[gi];
      blocks[d].cpu = d > search.k;
      for (int v : search.groups[gi].members) blocks[d].members.push_back(v);
    }
    std::vector<SplitBlock> nonempty;
    for (auto& b : blocks) {
      if (!b.members.empty()) nonempty.push_back(std::move(b));
    }
    return make_canonical_split(g, cfg, std::move(nonempty), search.best);
  }
}

}  // namespace dagsplit
