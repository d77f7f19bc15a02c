#include "dagsplit/baselines.hpp"

#include <algorithm>

#include "dagsplit/dp_solver.hpp"
#include "dagsplit/rng.hpp"

namespace dagsplit {

namespace {

struct Unit {
  std::vector<int> members;  // dense indices, topo-ordered
  Rat mem;
  bool unsupported = false;
};

std::vector<Unit> colocation_units(const Graph& g) {
  std::vector<int> order = seeded_topo_order(g, 0);
  std::vector<int> pos(g.size());
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
  std::vector<int> rep = colocation_group_ids(g, /*with_training_pairs=*/true);
  std::vector<std::vector<int>> members(g.size());
  for (int v : order) members[rep[v]].push_back(v);
  std::vector<Unit> units;
  for (int r = 0; r < g.size(); ++r) {
    if (members[r].empty()) continue;
    Unit u;
    u.members = members[r];
    for (int v : u.members) {
      u.mem += g.node(v).mem_size;
      if (!g.node(v).acc_supported()) u.unsupported = true;
    }
    units.push_back(std::move(u));
  }
  auto earliest = [&](const Unit& u) {
    int best = INT32_MAX;
    for (int v : u.members) best = std::min(best, pos[v]);
    return best;
  };
  std::stable_sort(units.begin(), units.end(), [&](const Unit& a, const Unit& b) {
    return earliest(a) < earliest(b);
  });
  return units;
}

}  // namespace

Split solve_greedy(const Graph& g, const DeviceConfig& cfg) {
  std::vector<Unit> units = colocation_units(g);
  Split split;
  int acc = 1;
  Rat used;
  NodeSet cpu_pool(g.size());
  std::vector<NodeSet> acc_sets(cfg.accelerators + 1, NodeSet(g.size()));
  for (const Unit& u : units) {
    bool to_cpu = u.unsupported || u.mem > cfg.memory_limit ||
                  cfg.accelerators == 0;
    if (!to_cpu) {
      while (acc <= cfg.accelerators && used + u.mem > cfg.memory_limit) {
        ++acc;
        used = Rat(0);
      }
      to_cpu = acc > cfg.accelerators;
    }
    if (to_cpu) {
      if (cfg.cpus == 0) throw InfeasibleError();
      for (int v : u.members) {
        split.assignment[g.id_of(v)] = Placement::cpu(0);
        cpu_pool.insert(v);
      }
      continue;
    }
    used += u.mem;
    for (int v : u.members) {
      split.assignment[g.id_of(v)] = Placement::acc(acc);
      acc_sets[acc].insert(v);
    }
  }
  for (int i = 1; i <= cfg.accelerators; ++i) {
    if (acc_sets[i].empty()) continue;
    Rat load = acc_cost(g, acc_sets[i], cfg);
    split.per_device_loads.emplace_back(Placement::acc(i).label(), load);
    split.objective_value = Rat::max(split.objective_value, load);
  }
  if (!cpu_pool.empty()) {
    Rat load = cpu_cost(g, cpu_pool);
    split.per_device_loads.emplace_back("cpu", load);
    split.objective_value = Rat::max(split.objective_value, load);
  }
  return split;
}

namespace {

Rat assignment_maxload(const Graph& g, const DeviceConfig& cfg,
                       const std::vector<Unit>& units,
                       const std::vector<int>& device_of,
                       std::vector<NodeSet>& scratch) {
  int devices = cfg.accelerators + cfg.cpus;
  for (int d = 1; d <= devices; ++d) scratch[d] = NodeSet(g.size());
  for (size_t u = 0; u < units.size(); ++u) {
    for (int v : units[u].members) scratch[device_of[u]].insert(v);
  }
  Rat worst;
  for (int d = 1; d <= devices; ++d) {
    if (scratch[d].empty()) continue;
    Rat load = d <= cfg.accelerators ? acc_cost(g, scratch[d], cfg)
                                     : cpu_cost(g, scratch[d]);
    worst = Rat::max(worst, load);
  }
  return worst;
}

}  // namespace

Split solve_local_search(const Graph& g, const DeviceConfig& cfg,
                         const LocalSearchConfig& ls) {
  const int k = cfg.accelerators, l = cfg.cpus;
  const int devices = k + l;
  std::vector<Unit> units = colocation_units(g);
  std::vector<NodeSet> scratch(devices + 1, NodeSet(g.size()));

  std::optional<Rat> best;
  std::vector<int> best_assign;
  bool any_start = false;

  for (int restart = 0; restart < ls.restarts; ++restart) {
    SplitMix64 rng(ls.seed * 0x9e3779b97f4a7c15ULL + restart + 1);
    std::vector<int> device_of(units.size(), 0);
    bool feasible = false;
    for (int attempt = 0; attempt < ls.max_start_attempts && !feasible;
         ++attempt) {
      std::vector<Rat> acc_mem(k + 1, Rat(0));
      feasible = true;
      for (size_t u = 0; u < units.size(); ++u) {
        int d;
        if (units[u].unsupported) {
          if (l == 0) {
            feasible = false;
            break;
          }
          d = k + 1 + static_cast<int>(rng.below(l));
        } else {
          d = 1 + static_cast<int>(rng.below(devices));
        }
        device_of[u] = d;
        if (d <= k) {
          acc_mem[d] += units[u].mem;
          if (acc_mem[d] > cfg.memory_limit) {
            feasible = false;
            break;
          }
        }
      }
    }
    if (!feasible) continue;
    any_start = true;

    Rat current = assignment_maxload(g, cfg, units, device_of, scratch);
    for (int iter = 0; iter < ls.max_iterations; ++iter) {
      // best single-group reassignment
      Rat best_move = current;
      int best_unit = -1, best_dev = -1;
      for (size_t u = 0; u < units.size(); ++u) {
        int from = device_of[u];
        for (int d = 1; d <= devices; ++d) {
          if (d == from) continue;
          if (d <= k && units[u].unsupported) continue;
          if (d <= k) {
            Rat mem;
            for (size_t w = 0; w < units.size(); ++w) {
              if (device_of[w] == d) mem += units[w].mem;
            }
            if (mem + units[u].mem > cfg.memory_limit) continue;
          }
          device_of[u] = d;
          Rat objective = assignment_maxload(g, cfg, units, device_of, scratch);
          device_of[u] = from;
          if (objective < best_move) {
            best_move = objective;
            best_unit = static_cast<int>(u);
            best_dev = d;
          }
        }
      }
      if (best_unit < 0) break;  // local optimum
      device_of[best_unit] = best_dev;
      current = best_move;
    }
    if (!best || current < *best) {
      best = current;
      best_assign = device_of;
    }
  }
  if (!any_start) throw NoFeasibleStart();

  std::vector<SplitBlock> blocks(devices + 1);
  for (size_t u = 0; u < units.size(); ++u) {
    int d = best_assign[u];
    blocks[d].cpu = d > k;
    for (int v : units[u].members) blocks[d].members.push_back(v);
  }
  std::vector<SplitBlock> nonempty;
  for (auto& b : blocks) {
    if (!b.members.empty()) nonempty.push_back(std::move(b));
  }
  return make_canonical_split(g, cfg, std::move(nonempty), *best);
}

}  // namespace dagsplit
