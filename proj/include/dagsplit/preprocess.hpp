#pragma once

#include <map>
#include <vector>

#include "dagsplit/graph.hpp"

namespace dagsplit {

// Maps every node id of the step's input graph to its image in the output
// graph. Nodes created by a step (artificial forward nodes, subdivision
// nodes, contracted class/SCC nodes) have no preimage.
struct ContractionMap {
  std::map<int, int> forward;

  int image_of(int id) const { return forward.at(id); }
  bool covers(int id) const { return forward.count(id) != 0; }
};

struct TrainingAnnotation {
  std::map<int, std::vector<int>> backward_of;  // forward id -> backward ids
  std::vector<int> artificial_forward;          // created for orphans

  bool empty() const { return backward_of.empty(); }
};

// Contracts the forward members and the backward members of every color
// class into single nodes (cpu/acc/mem summed; comm summed over members with
// a real edge leaving the whole class). May produce cycles; contract_sccs
// resolves them.
std::pair<Graph, ContractionMap> contract_color_classes(const Graph& g);

// Contracts every strongly connected component into one node (weights as
// above). An SCC mixing forward and backward nodes becomes a forward node
// with no pair (its backward cost is already inside).
std::pair<Graph, ContractionMap> contract_sccs(const Graph& g);

// Pairs every orphaned backward node with a fresh zero-weight artificial
// forward node and mirrors backward edges with orphaned endpoints as
// reversed artificial forward edges. No-op on inference graphs.
std::pair<Graph, TrainingAnnotation> attach_orphaned_backward(const Graph& g);

// Resolves per-edge communication costs: a node whose out-edges carry equal
// costs absorbs them; differing costs are pushed into zero-weight subdivision
// nodes colocated with the producer, whose own comm becomes an infinite
// sentinel that no feasible split ever pays.
std::pair<Graph, ContractionMap> subdivide_nonuniform_edges(const Graph& g);

struct Prepared {
  Graph graph;
  std::vector<ContractionMap> maps;  // in application order
  TrainingAnnotation training;
};

// subdivide -> color contraction -> SCC contraction -> orphan attachment.
// Subdivision runs first so the contractions see the colocations it creates.
Prepared preprocess(const Graph& g);

// Every original node inherits the device of its image; artificial nodes are
// dropped; objective and per-device loads are unchanged. Throws UnmappedNode
// when the composition is not total.
Split map_back(const Split& split_on_contracted,
               const std::vector<ContractionMap>& maps);

// Inverse direction: lifts a split given on the original graph onto the
// preprocessed one. Contracted nodes take their members' placement (which
// must agree); subdivision relays and artificial forward nodes follow the
// node they are colocated or paired with.
Split lift_split(const Prepared& prep, const Split& original);

}  // namespace dagsplit
