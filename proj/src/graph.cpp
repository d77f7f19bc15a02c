#include "dagsplit/graph.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dagsplit {

// --- NodeSet ---

NodeSet NodeSet::full(int universe) {
  NodeSet s(universe);
  for (int v = 0; v < universe; ++v) s.insert(v);
  return s;
}

int NodeSet::count() const {
  int c = 0;
  for (uint64_t w : words_) c += std::popcount(w);
  return c;
}

bool NodeSet::empty() const {
  for (uint64_t w : words_) {
    if (w) return false;
  }
  return true;
}

NodeSet& NodeSet::operator|=(const NodeSet& o) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
  return *this;
}

NodeSet& NodeSet::operator&=(const NodeSet& o) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
  return *this;
}

NodeSet& NodeSet::operator-=(const NodeSet& o) {
  for (size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
  return *this;
}

bool NodeSet::is_subset_of(const NodeSet& o) const {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] & ~o.words_[i]) return false;
  }
  return true;
}

bool NodeSet::intersects(const NodeSet& o) const {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] & o.words_[i]) return true;
  }
  return false;
}

bool NodeSet::lex_less(const NodeSet& a, const NodeSet& b) {
  for (size_t i = 0; i < a.words_.size(); ++i) {
    uint64_t diff = a.words_[i] ^ b.words_[i];
    if (diff) {
      uint64_t lowest = diff & (~diff + 1);
      // The set containing the smallest differing index comes first.
      return a.words_[i] & lowest;
    }
  }
  return false;
}

std::vector<int> NodeSet::members() const {
  std::vector<int> out;
  out.reserve(count());
  for_each([&](int v) { out.push_back(v); });
  return out;
}

size_t NodeSet::hash() const {
  uint64_t h = 1469598103934665603ull;
  for (uint64_t w : words_) {
    h ^= w;
    h *= 1099511628211ull;
  }
  return static_cast<size_t>(h);
}

// --- Placement / Split ---

std::string Placement::label() const {
  if (kind == Kind::Cpu) {
    return index == 0 ? "cpu" : "cpu" + std::to_string(index);
  }
  std::string s = "acc" + std::to_string(index);
  if (slot > 1) s += "." + std::to_string(slot);
  return s;
}

std::optional<Placement> Split::placement_of(int node_id) const {
  auto it = assignment.find(node_id);
  if (it == assignment.end()) return std::nullopt;
  return it->second;
}

// --- ValidationError ---

std::string ValidationError::message() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::CycleFound: {
      os << "cycle found:";
      for (int v : cycle) os << " " << v;
      break;
    }
    case Kind::DuplicateId:
      os << "duplicate node id " << id;
      break;
    case Kind::DanglingEdge:
      os << "edge references missing node: " << from << " -> " << to;
      break;
    case Kind::BadPairing:
      os << "bad forward/backward pairing on node " << id << ": " << detail;
      break;
  }
  return os.str();
}

// --- Graph ---

Graph::Graph(std::vector<Node> nodes, std::vector<Edge> edges,
             std::vector<Edge> artificial_edges)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      artificial_edges_(std::move(artificial_edges)) {
  index_.reserve(nodes_.size());
  for (int i = 0; i < size(); ++i) {
    index_.emplace(nodes_[i].id, i);  // first occurrence wins on duplicates
  }
  out_.resize(nodes_.size());
  in_.resize(nodes_.size());
  out_all_.resize(nodes_.size());
  in_all_.resize(nodes_.size());
  auto add = [&](const Edge& e, bool real) {
    auto f = index_.find(e.from);
    auto t = index_.find(e.to);
    if (f == index_.end() || t == index_.end()) return;
    if (real) {
      out_[f->second].push_back(t->second);
      in_[t->second].push_back(f->second);
    }
    out_all_[f->second].push_back(t->second);
    in_all_[t->second].push_back(f->second);
  };
  for (const Edge& e : edges_) add(e, true);
  for (const Edge& e : artificial_edges_) add(e, false);
}

std::optional<int> Graph::index_of(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Graph::has_backward_nodes() const {
  for (const Node& n : nodes_) {
    if (n.is_backward) return true;
  }
  return false;
}

NodeSet Graph::forward_set() const {
  NodeSet s(size());
  for (int i = 0; i < size(); ++i) {
    if (!nodes_[i].is_backward) s.insert(i);
  }
  return s;
}

NodeSet Graph::backward_set() const {
  NodeSet s(size());
  for (int i = 0; i < size(); ++i) {
    if (nodes_[i].is_backward) s.insert(i);
  }
  return s;
}

int Graph::max_id() const {
  int m = -1;
  for (const Node& n : nodes_) m = std::max(m, n.id);
  return m;
}

// --- validation ---

std::optional<ValidationError> validate_dag(const Graph& g) {
  std::unordered_map<int, int> seen;
  for (int i = 0; i < g.size(); ++i) {
    auto [it, fresh] = seen.emplace(g.node(i).id, i);
    if (!fresh) {
      return ValidationError{ValidationError::Kind::DuplicateId, {},
                             g.node(i).id, 0, 0, {}};
    }
  }
  auto check_edges = [&](const std::vector<Edge>& edges)
      -> std::optional<ValidationError> {
    for (const Edge& e : edges) {
      if (!g.index_of(e.from) || !g.index_of(e.to)) {
        return ValidationError{ValidationError::Kind::DanglingEdge, {}, 0,
                               e.from, e.to, {}};
      }
    }
    return std::nullopt;
  };
  if (auto err = check_edges(g.edges())) return err;
  if (auto err = check_edges(g.artificial_edges())) return err;

  // Iterative DFS cycle detection over real + artificial edges.
  enum { kWhite, kGray, kBlack };
  std::vector<int> color(g.size(), kWhite);
  std::vector<int> parent(g.size(), -1);
  for (int root = 0; root < g.size(); ++root) {
    if (color[root] != kWhite) continue;
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    color[root] = kGray;
    while (!stack.empty()) {
      auto& [v, ei] = stack.back();
      const auto& succ = g.out_all(v);
      if (ei < succ.size()) {
        int w = succ[ei++];
        if (color[w] == kGray) {
          // Recover the cycle w -> ... -> v -> w.
          std::vector<int> cycle{g.id_of(w)};
          for (int x = v; x != w; x = parent[x]) cycle.push_back(g.id_of(x));
          std::reverse(cycle.begin() + 1, cycle.end());
          return ValidationError{ValidationError::Kind::CycleFound, cycle,
                                 0, 0, 0, {}};
        }
        if (color[w] == kWhite) {
          color[w] = kGray;
          parent[w] = v;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = kBlack;
        stack.pop_back();
      }
    }
  }
  return std::nullopt;
}

// --- reachability / topological order ---

ReachMatrix::ReachMatrix(int n)
    : n_(n), stride_((n + 63) / 64), rows_(size_t(n) * stride_, 0) {}

void ReachMatrix::or_row_into(int u, std::span<uint64_t> acc) const {
  const uint64_t* r = rows_.data() + size_t(u) * stride_;
  for (int i = 0; i < stride_; ++i) acc[i] |= r[i];
}

std::vector<int> topological_order(const Graph& g) {
  std::vector<int> indeg(g.size(), 0);
  for (int v = 0; v < g.size(); ++v) {
    for (int w : g.out_all(v)) ++indeg[w];
  }
  std::vector<int> order;
  order.reserve(g.size());
  std::vector<int> ready;
  for (int v = g.size() - 1; v >= 0; --v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  while (!ready.empty()) {
    int v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (int w : g.out_all(v)) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != g.size()) {
    throw std::logic_error("topological_order on cyclic graph");
  }
  return order;
}

namespace {

Reachability reachability_impl(const Graph& g, const NodeSet* within) {
  Reachability r;
  r.from = ReachMatrix(g.size());
  r.to = ReachMatrix(g.size());
  std::vector<int> order;
  if (within) {
    // Kahn over the induced subgraph.
    std::vector<int> indeg(g.size(), 0);
    for (int v = 0; v < g.size(); ++v) {
      if (!within->contains(v)) continue;
      for (int w : g.out_all(v)) {
        if (within->contains(w)) ++indeg[w];
      }
    }
    std::vector<int> ready;
    for (int v = g.size() - 1; v >= 0; --v) {
      if (within->contains(v) && indeg[v] == 0) ready.push_back(v);
    }
    while (!ready.empty()) {
      int v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (int w : g.out_all(v)) {
        if (within->contains(w) && --indeg[w] == 0) ready.push_back(w);
      }
    }
  } else {
    order = topological_order(g);
  }
  // Fill rows in reverse topological order: row(u) = {u} | rows of successors.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int u = *it;
    r.from.set(u, u);
    for (int w : g.out_all(u)) {
      if (within && !within->contains(w)) continue;
      auto dst = const_cast<uint64_t*>(r.from.row(u).data());
      r.from.or_row_into(w, {dst, r.from.row(u).size()});
    }
  }
  for (int u = 0; u < g.size(); ++u) {
    if (within && !within->contains(u)) continue;
    for (int w = 0; w < g.size(); ++w) {
      if (r.from.reachable(u, w)) r.to.set(w, u);
    }
  }
  return r;
}

}  // namespace

Reachability reachability(const Graph& g) { return reachability_impl(g, nullptr); }

Reachability reachability_within(const Graph& g, const NodeSet& within) {
  return reachability_impl(g, &within);
}

// --- contiguity / ideals ---

bool is_contiguous(const Reachability& r, const NodeSet& s) {
  int n = r.from.size();
  size_t words = (n + 63) / 64;
  std::vector<uint64_t> reach_from_s(words, 0), reach_to_s(words, 0);
  s.for_each([&](int u) {
    r.from.or_row_into(u, reach_from_s);
    r.to.or_row_into(u, reach_to_s);
  });
  auto sw = s.words();
  for (size_t i = 0; i < words; ++i) {
    // A node outside s both reachable from s and reaching s is a witness.
    if ((reach_from_s[i] & reach_to_s[i]) & ~sw[i]) return false;
  }
  return true;
}

bool is_contiguous(const Graph& g, const NodeSet& s) {
  return is_contiguous(reachability(g), s);
}

bool is_ideal(const Graph& g, const NodeSet& s) {
  auto check = [&](const std::vector<Edge>& edges) {
    for (const Edge& e : edges) {
      auto f = g.index_of(e.from);
      auto t = g.index_of(e.to);
      if (f && t && s.contains(*t) && !s.contains(*f)) return false;
    }
    return true;
  };
  return check(g.edges()) && check(g.artificial_edges());
}

NodeSet contiguous_between(const NodeSet& outer, const NodeSet& inner) {
  if (!inner.is_subset_of(outer)) throw NotNestedError{};
  return outer - inner;
}

int IdealIndex::ordinal_of(const NodeSet& s) const {
  auto it = by_hash.find(s.hash());
  if (it == by_hash.end()) return -1;
  for (int ord : it->second) {
    if (ideals[ord] == s) return ord;
  }
  return -1;
}

// --- costs ---

AccParts acc_cost_parts(const Graph& g, const NodeSet& s) {
  AccParts p;
  s.for_each([&](int v) {
    const Node& n = g.node(v);
    if (!n.acc_supported()) p.unsupported = true;
    else p.proc += n.acc_time;
    p.mem += n.mem_size;
    bool leaves = false;
    for (int w : g.out(v)) {
      if (!s.contains(w)) {
        leaves = true;
        break;
      }
    }
    if (leaves) p.comm_out += n.comm_time;
    // Outside producers feeding s: charge each at most once.
    for (int u : g.in(v)) {
      if (!s.contains(u)) {
        bool already = false;
        for (int w : g.out(u)) {
          if (w == v) break;  // first edge from u into s decides the charge
          if (s.contains(w)) {
            already = true;
            break;
          }
        }
        if (!already) p.comm_in += g.node(u).comm_time;
      }
    }
  });
  return p;
}

AccParts acc_cost_parts(const Graph& g, const NodeSet& part,
                        const NodeSet& device_set) {
  AccParts p;
  NodeSet charged_in(g.size());
  part.for_each([&](int v) {
    const Node& n = g.node(v);
    if (!n.acc_supported()) p.unsupported = true;
    else p.proc += n.acc_time;
    p.mem += n.mem_size;
    bool leaves = false;
    for (int w : g.out(v)) {
      if (!device_set.contains(w)) {
        leaves = true;
        break;
      }
    }
    if (leaves) p.comm_out += n.comm_time;
    for (int u : g.in(v)) {
      if (!device_set.contains(u) && !charged_in.contains(u)) {
        charged_in.insert(u);
        p.comm_in += g.node(u).comm_time;
      }
    }
  });
  return p;
}

Rat combine_interleaving(const AccParts& p, Interleaving mode) {
  switch (mode) {
    case Interleaving::Sum:
      return p.comm_in + p.proc + p.comm_out;
    case Interleaving::HalfDuplexMax:
      return Rat::max(p.proc, p.comm_in + p.comm_out);
    case Interleaving::FullDuplexMax:
      return Rat::max(p.proc, Rat::max(p.comm_in, p.comm_out));
  }
  return {};
}

Rat acc_cost(const Graph& g, const NodeSet& s, const DeviceConfig& config) {
  AccParts p = acc_cost_parts(g, s);
  if (p.unsupported || p.mem > config.memory_limit) return Rat::infinity();
  return combine_interleaving(p, config.interleaving);
}

Rat cpu_cost(const Graph& g, const NodeSet& s) {
  Rat total;
  s.for_each([&](int v) { total += g.node(v).cpu_time; });
  return total;
}

namespace {

// Hopcroft-Karp on the bipartite graph left=right=V with an edge (u, w) when
// w is strictly reachable from u. |V| - matching = maximum antichain.
struct HopcroftKarp {
  int n;
  const ReachMatrix& reach;
  std::vector<int> match_l, match_r, dist;

  explicit HopcroftKarp(int n_, const ReachMatrix& r)
      : n(n_), reach(r), match_l(n, -1), match_r(n, -1), dist(n) {}

  bool bfs() {
    std::vector<int> queue;
    bool found = false;
    for (int u = 0; u < n; ++u) {
      dist[u] = match_l[u] == -1 ? 0 : -1;
      if (dist[u] == 0) queue.push_back(u);
    }
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      int u = queue[qi];
      for (int w = 0; w < n; ++w) {
        if (w == u || !reach.reachable(u, w)) continue;
        int next = match_r[w];
        if (next == -1) {
          found = true;
        } else if (dist[next] == -1) {
          dist[next] = dist[u] + 1;
          queue.push_back(next);
        }
      }
    }
    return found;
  }

  bool dfs(int u) {
    for (int w = 0; w < n; ++w) {
      if (w == u || !reach.reachable(u, w)) continue;
      int next = match_r[w];
      if (next == -1 || (dist[next] == dist[u] + 1 && dfs(next))) {
        match_l[u] = w;
        match_r[w] = u;
        return true;
      }
    }
    dist[u] = -1;
    return false;
  }

  int run() {
    int matching = 0;
    while (bfs()) {
      for (int u = 0; u < n; ++u) {
        if (match_l[u] == -1 && dfs(u)) ++matching;
      }
    }
    return matching;
  }
};

}  // namespace

int max_antichain(const Graph& g) {
  if (g.size() == 0) return 0;
  Reachability r = reachability(g);
  HopcroftKarp hk(g.size(), r.from);
  return g.size() - hk.run();
}

std::vector<int> colocation_group_ids(const Graph& g,
                                      bool with_training_pairs) {
  std::vector<int> parent(g.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (int v = 0; v < g.size(); ++v) {
    const Node& n = g.node(v);
    if (n.colocate_with) {
      if (auto u = g.index_of(*n.colocate_with)) unite(v, *u);
    }
    if (with_training_pairs && n.forward_pair) {
      if (auto u = g.index_of(*n.forward_pair)) unite(v, *u);
    }
  }
  std::vector<int> group(g.size());
  for (int v = 0; v < g.size(); ++v) group[v] = find(v);
  return group;
}

Split make_canonical_split(const Graph& g, const DeviceConfig& cfg,
                           std::vector<SplitBlock> blocks,
                           const Rat& objective) {
  auto smallest_id = [&](const SplitBlock& b) {
    int best = INT32_MAX;
    for (int v : b.members) best = std::min(best, g.id_of(v));
    return best;
  };
  std::stable_sort(blocks.begin(), blocks.end(),
                   [&](const SplitBlock& a, const SplitBlock& b) {
                     if (a.cpu != b.cpu) return !a.cpu;
                     return smallest_id(a) < smallest_id(b);
                   });
  Split split;
  split.objective_value = objective;
  int next_acc = 1, next_cpu = 1;
  for (const SplitBlock& b : blocks) {
    if (b.members.empty()) continue;
    Placement pl = b.cpu ? Placement::cpu(next_cpu) : Placement::acc(next_acc);
    NodeSet set(g.size());
    for (int v : b.members) {
      split.assignment[g.id_of(v)] = pl;
      set.insert(v);
    }
    Rat load = b.cpu ? cpu_cost(g, set) : acc_cost(g, set, cfg);
    if (!b.cpu && b.repl > 1) {
      Rat block_mem;
      set.for_each([&](int v) { block_mem += g.node(v).mem_size; });
      Rat divided = load / Rat(b.repl);
      Rat sync = cfg.bandwidth ? Rat(b.repl - 1) * block_mem /
                                     (Rat(b.repl) * *cfg.bandwidth)
                               : Rat(0);
      load = cfg.replication_combine == ReplicationCombine::Sum
                 ? divided + sync
                 : Rat::max(divided, sync);
      split.replication[pl.label()] = b.repl;
      for (int r = 0; r < b.repl; ++r) {
        split.per_device_loads.emplace_back(
            Placement::acc(next_acc + r).label(), load);
      }
      next_acc += b.repl;
      continue;
    }
    split.per_device_loads.emplace_back(pl.label(), load);
    if (b.cpu) ++next_cpu;
    else ++next_acc;
  }
  return split;
}

std::pair<std::vector<std::pair<std::string, Rat>>, Rat> recompute_maxload(
    const Graph& g, const DeviceConfig& config, const Split& split) {
  std::map<std::string, NodeSet> device_sets;
  std::map<std::string, bool> device_is_cpu;
  for (const auto& [id, pl] : split.assignment) {
    auto idx = g.index_of(id);
    if (!idx) continue;
    Placement device = pl;
    device.slot = 1;  // merge slots of one accelerator
    auto [it, fresh] = device_sets.try_emplace(device.label(), g.size());
    it->second.insert(*idx);
    device_is_cpu[device.label()] = pl.is_cpu();
  }
  std::vector<std::pair<std::string, Rat>> loads;
  Rat worst;
  for (auto& [label, set] : device_sets) {
    Rat load = device_is_cpu[label] ? cpu_cost(g, set)
                                    : acc_cost(g, set, config);
    auto rit = split.replication.find(label);
    if (rit != split.replication.end() && rit->second > 1 &&
        !load.is_infinite()) {
      int r = rit->second;
      Rat mem;
      set.for_each([&](int v) { mem += g.node(v).mem_size; });
      Rat base = load / Rat(r);
      Rat sync = config.bandwidth
                     ? Rat(r - 1) * mem / (Rat(r) * *config.bandwidth)
                     : Rat(0);
      load = config.replication_combine == ReplicationCombine::Sum
                 ? base + sync
                 : Rat::max(base, sync);
    }
    loads.emplace_back(label, load);
    worst = Rat::max(worst, load);
  }
  return {loads, worst};
}

}  // namespace dagsplit
