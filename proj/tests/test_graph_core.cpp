#include <algorithm>

#include "doctest.h"
#include "dagsplit/graph.hpp"
#include "support/builders.hpp"

using namespace dagsplit;
using namespace testsupport;

namespace {

NodeSet set_of(const Graph& g, std::initializer_list<int> ids) {
  NodeSet s(g.size());
  for (int id : ids) s.insert(*g.index_of(id));
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("graph_core");

TEST_CASE("validate_dag accepts the diamond and reports defects") {
  Graph d4 = diamond4();
  CHECK_FALSE(validate_dag(d4).has_value());

  Graph cyclic({make_node(1, 1, 1, 0, 1), make_node(2, 1, 1, 0, 1)},
               {{1, 2, {}}, {2, 1, {}}});
  auto err = validate_dag(cyclic);
  REQUIRE(err.has_value());
  CHECK(err->kind == ValidationError::Kind::CycleFound);
  CHECK(err->cycle.size() == 2);

  Graph dangling({make_node(1, 1, 1, 0, 1)}, {{1, 99, {}}});
  auto err2 = validate_dag(dangling);
  REQUIRE(err2.has_value());
  CHECK(err2->kind == ValidationError::Kind::DanglingEdge);

  Graph dup({make_node(1, 1, 1, 0, 1), make_node(1, 1, 1, 0, 1)}, {});
  auto err3 = validate_dag(dup);
  REQUIRE(err3.has_value());
  CHECK(err3->kind == ValidationError::Kind::DuplicateId);
}

TEST_CASE("reachability matches a per-source DFS") {
  Graph d4 = diamond4();
  Reachability r = reachability(d4);
  CHECK(r.from.reachable(*d4.index_of(1), *d4.index_of(4)));
  CHECK_FALSE(r.from.reachable(*d4.index_of(2), *d4.index_of(3)));
  CHECK(r.from.reachable(*d4.index_of(2), *d4.index_of(2)));

  Graph iso = edgeless(3);
  Reachability r2 = reachability(iso);
  for (int u = 0; u < 3; ++u) {
    for (int w = 0; w < 3; ++w) {
      CHECK(r2.from.reachable(u, w) == (u == w));
    }
  }

  for (uint64_t seed = 0; seed < 20; ++seed) {
    Graph g = random_instance(seed).graph;
    auto naive = naive_reach(g);
    Reachability rx = reachability(g);
    for (int u = 0; u < g.size(); ++u) {
      for (int w = 0; w < g.size(); ++w) {
        CHECK(rx.from.reachable(u, w) == naive[u][w]);
        CHECK(rx.to.reachable(w, u) == naive[u][w]);
      }
    }
  }
}

TEST_CASE("contiguity witnesses") {
  Graph d4 = diamond4();
  CHECK_FALSE(is_contiguous(d4, set_of(d4, {1, 4})));  // 1 -> 2 -> 4 re-enters
  CHECK(is_contiguous(d4, set_of(d4, {1, 2})));
  CHECK(is_contiguous(d4, set_of(d4, {})));
  CHECK(is_contiguous(d4, NodeSet::full(d4.size())));

  // disconnected but contiguous: no path leaves and re-enters through the
  // complement
  std::vector<Node> nodes = d4.nodes();
  nodes.push_back(make_node(5, 10, 2, 1, 1));
  Graph d5(nodes, d4.edges());
  CHECK(is_contiguous(d5, set_of(d5, {1, 5})));
}

TEST_CASE("every singleton is contiguous") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Graph g = random_instance(seed).graph;
    for (int v = 0; v < g.size(); ++v) {
      NodeSet s(g.size());
      s.insert(v);
      CHECK(is_contiguous(g, s));
    }
  }
}

TEST_CASE("ideals are downward-closed sets") {
  Graph d4 = diamond4();
  CHECK(is_ideal(d4, set_of(d4, {1, 2})));
  CHECK_FALSE(is_ideal(d4, set_of(d4, {2})));
  CHECK(is_ideal(d4, set_of(d4, {})));
  CHECK(is_ideal(d4, NodeSet::full(d4.size())));
}

TEST_CASE("ideal enumeration matches the brute-force subset scan") {
  Graph d4 = diamond4();
  IdealIndex idx = enumerate_ideals(d4);
  CHECK(idx.count() == 6);

  // the six ideals of the diamond, in size-major order
  std::vector<NodeSet> expected{
      set_of(d4, {}),           set_of(d4, {1}),
      set_of(d4, {1, 2}),       set_of(d4, {1, 3}),
      set_of(d4, {1, 2, 3}),    set_of(d4, {1, 2, 3, 4}),
  };
  REQUIRE(idx.ideals.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) CHECK(idx.ideals[i] == expected[i]);

  CHECK(enumerate_ideals(path_graph(3, 1, 1, 0, 1)).count() == 4);
  CHECK(enumerate_ideals(edgeless(8)).count() == 256);

  for (uint64_t seed = 0; seed < 15; ++seed) {
    Graph g = random_instance(seed).graph;
    if (g.size() > 12) continue;
    long long naive_count = 0;
    for (const NodeSet& s : all_subsets(g)) {
      if (naive_ideal(g, s)) ++naive_count;
    }
    IdealIndex ix = enumerate_ideals(g);
    CHECK(ix.count() == naive_count);
    for (const NodeSet& s : ix.ideals) CHECK(naive_ideal(g, s));
    // subset-before-superset: supersets never precede their subsets
    for (size_t i = 0; i < ix.ideals.size(); ++i) {
      for (size_t j = i + 1; j < ix.ideals.size(); ++j) {
        CHECK_FALSE(ix.ideals[j].is_subset_of(ix.ideals[i]));
      }
    }
  }
}

TEST_CASE("enumeration stops at the budget") {
  CHECK_THROWS_AS(enumerate_ideals(edgeless(20), 1000), IdealBudgetExceeded);
}

TEST_CASE("difference of nested ideals is contiguous") {
  Graph d4 = diamond4();
  NodeSet outer = set_of(d4, {1, 2, 3});
  NodeSet inner = set_of(d4, {1});
  NodeSet diff = contiguous_between(outer, inner);
  CHECK(diff == set_of(d4, {2, 3}));
  CHECK(is_contiguous(d4, diff));

  CHECK(contiguous_between(outer, outer).empty());
  CHECK(contiguous_between(NodeSet::full(4), set_of(d4, {1, 2, 3})) ==
        set_of(d4, {4}));
  CHECK_THROWS_AS(contiguous_between(inner, outer), NotNestedError);
}

TEST_CASE("contiguous sets are exactly differences of nested ideals") {
  for (uint64_t seed = 100; seed < 140; ++seed) {
    Graph g = random_instance(seed).graph;
    if (g.size() > 8) continue;
    IdealIndex idx = enumerate_ideals(g);
    for (const NodeSet& s : all_subsets(g)) {
      bool witness = false;
      for (const NodeSet& outer : idx.ideals) {
        if (witness) break;
        if (!s.is_subset_of(outer)) continue;
        NodeSet inner = outer - s;
        if (inner.is_subset_of(outer) && naive_ideal(g, inner) &&
            (outer - inner) == s) {
          witness = true;
        }
      }
      CHECK(witness == naive_contiguous(g, s));
      CHECK(is_contiguous(g, s) == naive_contiguous(g, s));
    }
  }
}

TEST_CASE("cpu cost sums processing times") {
  Graph d4 = diamond4();
  CHECK(cpu_cost(d4, set_of(d4, {1, 2})) == Rat(20));
  CHECK(cpu_cost(d4, set_of(d4, {})) == Rat(0));
  CHECK(cpu_cost(d4, NodeSet::full(4)) == Rat(40));
}

TEST_CASE("accelerator cost charges crossing transfers once per node") {
  Graph d4 = diamond4();
  DeviceConfig cfg;
  cfg.memory_limit = Rat(4);
  NodeSet s = set_of(d4, {1, 2});
  // nothing enters {a,b}; a->c and b->d leave it
  CHECK(acc_cost(d4, s, cfg) == Rat(6));
  cfg.interleaving = Interleaving::HalfDuplexMax;
  CHECK(acc_cost(d4, s, cfg) == Rat(4));
  cfg.interleaving = Interleaving::Sum;
  cfg.memory_limit = Rat(3);
  CHECK(acc_cost(d4, NodeSet::full(4), cfg).is_infinite());

  // one producer with two crossing edges is charged once
  std::vector<Node> nodes{make_node(1, 1, 1, 5, 1), make_node(2, 1, 1, 0, 1),
                          make_node(3, 1, 1, 0, 1)};
  Graph fan(nodes, {{1, 2, {}}, {1, 3, {}}});
  DeviceConfig wide;
  NodeSet pair = set_of(fan, {2, 3});
  AccParts parts = acc_cost_parts(fan, pair);
  CHECK(parts.comm_in == Rat(5));
  NodeSet solo = set_of(fan, {1});
  AccParts out_parts = acc_cost_parts(fan, solo);
  CHECK(out_parts.comm_out == Rat(5));
}

TEST_CASE("interleaving only ever lowers a load") {
  for (uint64_t seed = 200; seed < 230; ++seed) {
    Graph g = random_instance(seed).graph;
    if (g.size() > 8) continue;
    for (const NodeSet& s : all_subsets(g)) {
      AccParts p = acc_cost_parts(g, s);
      if (p.unsupported) continue;
      Rat sum = combine_interleaving(p, Interleaving::Sum);
      Rat half = combine_interleaving(p, Interleaving::HalfDuplexMax);
      Rat full = combine_interleaving(p, Interleaving::FullDuplexMax);
      CHECK(half <= sum);
      CHECK(full <= half);
    }
  }
}

TEST_CASE("maximum antichain by path cover") {
  CHECK(max_antichain(diamond4()) == 2);
  CHECK(max_antichain(path_graph(7, 1, 1, 0, 1)) == 1);
  CHECK(max_antichain(edgeless(9)) == 9);

  for (uint64_t seed = 300; seed < 320; ++seed) {
    Graph g = random_instance(seed).graph;
    if (g.size() > 8) continue;
    auto reach = naive_reach(g);
    int best = 0;
    for (const NodeSet& s : all_subsets(g)) {
      bool antichain = true;
      auto members = s.members();
      for (size_t i = 0; i < members.size() && antichain; ++i) {
        for (size_t j = 0; j < members.size(); ++j) {
          if (i != j && reach[members[i]][members[j]]) {
            antichain = false;
            break;
          }
        }
      }
      if (antichain) best = std::max(best, s.count());
    }
    CHECK(max_antichain(g) == best);
  }
}

TEST_SUITE_END();
