#pragma once

#include <chrono>
#include <optional>

#include "dagsplit/errors.hpp"
#include "dagsplit/graph.hpp"

namespace dagsplit {

struct SolveOptions {
  std::optional<std::chrono::steady_clock::time_point> deadline;
  long long ideal_budget = kDefaultIdealBudget;
};

// Exact dynamic program over the ideal lattice minimizing the maximum device
// load. Returns a contiguous split; devices are renumbered canonically
// (accelerators and CPUs each ordered by their smallest assigned node id)
// and empty devices are dropped. Throws InfeasibleError when no assignment
// fits memory, IdealBudgetExceeded or DeadlineExceeded as applicable.
Split solve_maxload_inference(const Graph& g, const DeviceConfig& config,
                              const SolveOptions& opt = {});

// Training variant: the DP runs over ideals of the forward part; each
// candidate forward block pulls in its paired backward nodes, which must
// form a contiguous set within the backward part. Graphs without backward
// nodes solve identically to solve_maxload_inference.
Split solve_maxload_training(const Graph& g, const DeviceConfig& config,
                             const SolveOptions& opt = {});

// Inference DP where a block placed on accelerators may be replicated over r
// of them: the block load becomes base/r combined with a weight-sync term
// (r-1)*mem/(r*B) per config.replication_combine. A replicated block is
// recorded on its first accelerator index; Split::replication maps that
// device label to r (the group occupies r consecutive indices).
Split solve_maxload_replicated(const Graph& g, const DeviceConfig& config,
                               const SolveOptions& opt = {});

// Deterministic DFS topological order; ties broken by a seed-keyed shuffle
// of root order and adjacency lists.
std::vector<int> seeded_topo_order(const Graph& g, uint64_t seed);

// Adds a Hamiltonian chain of artificial precedence edges along the DFS
// order, collapsing the ideal lattice to |V|+1 prefixes. Artificial edges
// never carry communication cost.
Graph linearize(const Graph& g, uint64_t seed);

// Linearization heuristic: linearize (forward part only, for training
// graphs), then run the exact DP. The result is a feasible contiguous split
// of the original graph whose objective is >= the true optimum.
Split solve_dpl(const Graph& g, const DeviceConfig& config, uint64_t seed,
                const SolveOptions& opt = {});

}  // namespace dagsplit
