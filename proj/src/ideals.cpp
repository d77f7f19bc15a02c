#include <algorithm>
#include <unordered_set>

#include "dagsplit/graph.hpp"

namespace dagsplit {

namespace {

// Level-by-level walk of the ideal lattice starting from the empty set,
// adding one eligible node at a time. Level s holds all ideals of size s, so
// every proper sub-ideal is emitted before its supersets; within a level the
// order is lexicographic on member indices, which makes ordinals stable.
IdealIndex enumerate_impl(const Graph& g, const NodeSet* within,
                          long long budget) {
  IdealIndex index;
  auto push = [&](NodeSet s) {
    int ord = static_cast<int>(index.ideals.size());
    index.by_hash[s.hash()].push_back(ord);
    index.ideals.push_back(std::move(s));
  };

  NodeSet empty(g.size());
  push(empty);

  std::vector<int> level{0};
  std::vector<int> eligible;
  for (int v = 0; v < g.size(); ++v) {
    if (!within || within->contains(v)) eligible.push_back(v);
  }

  while (!level.empty()) {
    std::vector<NodeSet> next;
    std::unordered_set<size_t> seen;
    for (int ord : level) {
      // index.ideals may reallocate while we push; copy the base set.
      NodeSet base = index.ideals[ord];
      for (int v : eligible) {
        if (base.contains(v)) continue;
        bool closed = true;
        for (int u : g.in_all(v)) {
          if (within && !within->contains(u)) continue;
          if (!base.contains(u)) {
            closed = false;
            break;
          }
        }
        if (!closed) continue;
        NodeSet grown = base;
        grown.insert(v);
        size_t h = grown.hash();
        if (seen.contains(h)) {
          bool dup = false;
          for (const NodeSet& s : next) {
            if (s.hash() == h && s == grown) {
              dup = true;
              break;
            }
          }
          if (dup) continue;
        }
        seen.insert(h);
        next.push_back(std::move(grown));
      }
    }
    std::sort(next.begin(), next.end(), NodeSet::lex_less);
    level.clear();
    for (NodeSet& s : next) {
      if (index.count() >= budget) throw IdealBudgetExceeded{budget};
      level.push_back(static_cast<int>(index.ideals.size()));
      push(std::move(s));
    }
  }
  return index;
}

}  // namespace

IdealIndex enumerate_ideals(const Graph& g, long long budget) {
  return enumerate_impl(g, nullptr, budget);
}

IdealIndex enumerate_ideals_within(const Graph& g, const NodeSet& within,
                                   long long budget) {
  return enumerate_impl(g, &within, budget);
}

}  // namespace dagsplit
