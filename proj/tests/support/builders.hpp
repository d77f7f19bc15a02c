#pragma once

#include <cstdint>
#include <vector>

#include "dagsplit/graph.hpp"

namespace testsupport {

using dagsplit::DeviceConfig;
using dagsplit::Edge;
using dagsplit::Graph;
using dagsplit::Node;
using dagsplit::NodeSet;
using dagsplit::Rat;

Node make_node(int id, Rat cpu, Rat acc, Rat comm, Rat mem);

// Diamond fixture used throughout the tests: nodes 1..4 (a,b,c,d), edges
// a->b, a->c, b->d, c->d; cpu 10, acc 2, comm 1, mem 1 everywhere.
Graph diamond4();

// Mirror a graph into a training graph: node x (id i) gets a backward twin
// x' (id i + offset) with identical weights and reversed mirror edges; x' is
// paired with x.
Graph mirror_training(const Graph& g);

Graph path_graph(int n, Rat cpu, Rat acc, Rat comm, Rat mem);
Graph edgeless(int n);

struct RandomInstance {
  Graph graph;
  DeviceConfig config;
};

// Seeded random DAG corpus instance: 2..10 nodes, up to 20 forward edges,
// weights on a half-integer grid in [0, 10], occasional accelerator-
// unsupported nodes, k in 1..3, l in 0..2, and a memory limit scaled so a
// sizable share of instances cannot fit on one accelerator.
RandomInstance random_instance(uint64_t seed, bool allow_unsupported = true);

// Test-side reachability oracle: plain DFS per source over real + artificial
// edges (independent of the library's bitset matrices).
std::vector<std::vector<bool>> naive_reach(const Graph& g);

// Test-side contiguity oracle: literal witness search over naive_reach.
bool naive_contiguous(const Graph& g, const NodeSet& s);

// Same, but with paths restricted to the induced subgraph on `within`.
bool naive_contiguous_within(const Graph& g, const NodeSet& s,
                             const NodeSet& within);

// Test-side ideal oracle: downward-closure scan of one subset.
bool naive_ideal(const Graph& g, const NodeSet& s);

// All subsets of the (small) graph as NodeSets, 2^n of them.
std::vector<NodeSet> all_subsets(const Graph& g);

}  // namespace testsupport
