#pragma once

#include <cstdint>

#include "dagsplit/errors.hpp"
#include "dagsplit/graph.hpp"

namespace dagsplit {

struct LocalSearchConfig {
  int restarts = 10;
  uint64_t seed = 0;
  int max_iterations = 1000;
  int max_start_attempts = 1000;
};

// Greedy topological fill: walk the deterministic (seed 0) DFS order and pack
// colocation groups onto accelerator 1, 2, ... until each runs out of memory;
// whatever remains goes to the CPU pool. Feasible and contiguous by
// construction; throws InfeasibleError only when a group exceeds the memory
// limit on its own and there is no CPU. objective_value is the max-load of
// the result.
Split solve_greedy(const Graph& g, const DeviceConfig& config);

// Randomized descent on the max-load objective: per restart, sample a
// memory-feasible assignment of colocation groups to the k+l devices, then
// repeatedly apply the best single-group reassignment until no move improves.
// Deterministic under a fixed seed; the result may be non-contiguous.
Split solve_local_search(const Graph& g, const DeviceConfig& config,
                         const LocalSearchConfig& ls = {});

}  // namespace dagsplit
