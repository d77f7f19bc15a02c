#include "dagsplit/dp_solver.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <stdexcept>

#include "dagsplit/rng.hpp"

namespace dagsplit {

namespace {

// Sum accumulator tolerating +infinity terms (unsupported ops, sentinel
// communication costs) so that terms can be added and later removed.
struct RatAccum {
  Rat finite;
  int inf_count = 0;

  void add(const Rat& r) {
    if (r.is_infinite()) ++inf_count;
    else finite += r;
  }
  void sub(const Rat& r) {
    if (r.is_infinite()) --inf_count;
    else finite -= r;
  }
  Rat total() const { return inf_count > 0 ? Rat::infinity() : finite; }
};

// Incremental load parts of the growing block. In training mode the block is
// the forward set plus its paired backward nodes; callers push both.
struct BlockTracker {
  const Graph& g;
  std::vector<int> into_c;  // per node: # real out-edges that land in C
  std::vector<char> in_c;
  RatAccum comm_in, comm_out;
  Rat proc, cpu, mem;
  int unsupported = 0;
  NodeSet bw_members;

  explicit BlockTracker(const Graph& graph)
      : g(graph),
        into_c(graph.size(), 0),
        in_c(graph.size(), 0),
        bw_members(graph.size()) {}

  int outdeg(int v) const { return static_cast<int>(g.out(v).size()); }

  void add_node(int x) {
    const Node& n = g.node(x);
    for (int u : g.in(x)) {
      int old = into_c[u]++;
      if (in_c[u]) {
        if (old + 1 == outdeg(u)) comm_out.sub(g.node(u).comm_time);
      } else if (old == 0) {
        comm_in.add(g.node(u).comm_time);
      }
    }
    if (into_c[x] > 0) comm_in.sub(n.comm_time);
    in_c[x] = 1;
    if (into_c[x] < outdeg(x)) comm_out.add(n.comm_time);
    if (n.acc_supported()) proc += n.acc_time;
    else ++unsupported;
    cpu += n.cpu_time;
    mem += n.mem_size;
    if (n.is_backward) bw_members.insert(x);
  }

  void remove_node(int x) {
    const Node& n = g.node(x);
    if (n.is_backward) bw_members.erase(x);
    mem -= n.mem_size;
    cpu -= n.cpu_time;
    if (n.acc_supported()) proc -= n.acc_time;
    else --unsupported;
    if (into_c[x] < outdeg(x)) comm_out.sub(n.comm_time);
    in_c[x] = 0;
    if (into_c[x] > 0) comm_in.add(n.comm_time);
    for (int u : g.in(x)) {
      int old = into_c[u]--;
      if (in_c[u]) {
        if (old == outdeg(u)) comm_out.add(g.node(u).comm_time);
      } else if (old == 1) {
        comm_in.sub(g.node(u).comm_time);
      }
    }
  }

  Rat acc_load(const DeviceConfig& cfg) const {
    if (unsupported > 0 || mem > cfg.memory_limit) return Rat::infinity();
    AccParts p{comm_in.total(), proc, comm_out.total(), mem, false};
    if (p.comm_in.is_infinite() || p.comm_out.is_infinite()) {
      return Rat::infinity();
    }
    return combine_interleaving(p, cfg.interleaving);
  }
};

Rat replicated_load(const Rat& base, const Rat& block_mem, int replicas,
                    const DeviceConfig& cfg) {
  if (replicas <= 1 || base.is_infinite()) return base;
  Rat divided = base / Rat(replicas);
  Rat sync = Rat(replicas - 1) * block_mem / (Rat(replicas) * *cfg.bandwidth);
  return cfg.replication_combine == ReplicationCombine::Sum
             ? divided + sync
             : Rat::max(divided, sync);
}

struct BackPtr {
  int prev = -1;      // sub-ideal ordinal (or same ideal for waste moves)
  int8_t kind = 0;    // 0 none, 1 acc block, 2 cpu block, 3 waste acc, 4 waste cpu
  int16_t repl = 1;
};

struct MaxloadDp {
  const Graph& g;
  const DeviceConfig& cfg;
  const SolveOptions& opt;
  bool training;
  bool replication;

  NodeSet universe;
  IdealIndex index;
  std::vector<std::vector<int>> paired_bw;  // fw dense idx -> bw dense idxs
  std::optional<Reachability> bw_reach;
  int K, L;
  std::vector<Rat> dp;
  std::vector<BackPtr> bp;
  std::vector<int> stamp;
  long long deadline_tick = 0;

  MaxloadDp(const Graph& graph, const DeviceConfig& config,
            const SolveOptions& options, bool training_mode, bool repl)
      : g(graph),
        cfg(config),
        opt(options),
        training(training_mode),
        replication(repl),
        universe(graph.size()),
        K(config.accelerators),
        L(config.cpus) {
    if (K + L < 1) throw std::invalid_argument("need at least one device");
    if (replication && !cfg.bandwidth) throw MissingBandwidth();
    if (training) {
      universe = g.forward_set();
      paired_bw.resize(g.size());
      for (int b = 0; b < g.size(); ++b) {
        const Node& n = g.node(b);
        if (!n.is_backward) continue;
        if (!n.forward_pair) {
          throw std::invalid_argument(
              "training solve requires every backward node to be paired "
              "(run preprocessing first)");
        }
        auto f = g.index_of(*n.forward_pair);
        if (!f) throw std::invalid_argument("forward_pair references missing node");
        paired_bw[*f].push_back(b);
      }
      NodeSet bw = g.backward_set();
      if (!bw.empty()) bw_reach = reachability_within(g, bw);
    } else {
      universe = NodeSet::full(g.size());
    }
    index = enumerate_ideals_within(g, universe, opt.ideal_budget);
  }

  size_t cell(int ord, int k, int l) const {
    return (size_t(ord) * (K + 1) + k) * (L + 1) + l;
  }

  void check_deadline() {
    if (!opt.deadline) return;
    if ((++deadline_tick & 1023) != 0) return;
    if (std::chrono::steady_clock::now() > *opt.deadline) {
      throw DeadlineExceeded();
    }
  }

  void monotone_pass(int ord) {
    for (int k = 0; k <= K; ++k) {
      for (int l = 0; l <= L; ++l) {
        if (k > 0 && dp[cell(ord, k - 1, l)] < dp[cell(ord, k, l)]) {
          dp[cell(ord, k, l)] = dp[cell(ord, k - 1, l)];
          bp[cell(ord, k, l)] = BackPtr{ord, 3, 1};
        }
        if (l > 0 && dp[cell(ord, k, l - 1)] < dp[cell(ord, k, l)]) {
          dp[cell(ord, k, l)] = dp[cell(ord, k, l - 1)];
          bp[cell(ord, k, l)] = BackPtr{ord, 4, 1};
        }
      }
    }
  }

  // One candidate transition: block = ideals[ord] \ ideals[sub] (+ paired
  // backward nodes), with load parts in `tracker`.
  void apply_candidate(int ord, int sub, const BlockTracker& tracker) {
    check_deadline();
    if (training && bw_reach && !tracker.bw_members.empty() &&
        !is_contiguous(*bw_reach, tracker.bw_members)) {
      return;  // backward image must be contiguous within the backward part
    }
    Rat acc_base = tracker.acc_load(cfg);
    Rat cpu_load = tracker.cpu;
    for (int k = 0; k <= K; ++k) {
      for (int l = 0; l <= L; ++l) {
        Rat& target = dp[cell(ord, k, l)];
        if (k >= 1 && !acc_base.is_infinite()) {
          int max_r = replication ? k : 1;
          for (int r = 1; r <= max_r; ++r) {
            const Rat& rest = dp[cell(sub, k - r, l)];
            if (rest.is_infinite()) continue;
            Rat load = replicated_load(acc_base, tracker.mem, r, cfg);
            Rat val = Rat::max(rest, load);
            if (val < target) {
              target = val;
              bp[cell(ord, k, l)] = BackPtr{sub, 1, static_cast<int16_t>(r)};
            }
          }
        }
        if (l >= 1) {
          const Rat& rest = dp[cell(sub, k, l - 1)];
          if (!rest.is_infinite()) {
            Rat val = Rat::max(rest, cpu_load);
            if (val < target) {
              target = val;
              bp[cell(ord, k, l)] = BackPtr{sub, 2, 1};
            }
          }
        }
      }
    }
  }

  void push_block_nodes(BlockTracker& tracker, int fw_node, bool add) {
    if (add) {
      tracker.add_node(fw_node);
      if (training) {
        for (int b : paired_bw[fw_node]) tracker.add_node(b);
      }
    } else {
      if (training) {
        const auto& bs = paired_bw[fw_node];
        for (auto it = bs.rbegin(); it != bs.rend(); ++it) {
          tracker.remove_node(*it);
        }
      }
      tracker.remove_node(fw_node);
    }
  }

  // DFS down the sub-ideal lattice of ideals[ord], growing the carved block
  // one maximal node at a time and undoing on backtrack. Every sub-ideal is
  // visited once (ordinal-stamped). Maximal nodes are maintained through
  // successor counts, so a step costs O(deg) rather than a rescan.
  void walk_subideals(int ord) {
    BlockTracker tracker(g);
    // membership copy we mutate along the DFS path
    NodeSet current = index.ideals[ord];

    std::vector<int> out_cnt(g.size(), 0);  // successors inside `current`
    std::vector<int> initial;
    current.for_each([&](int v) {
      int c = 0;
      for (int w : g.out_all(v)) {
        if (current.contains(w)) ++c;
      }
      out_cnt[v] = c;
      if (c == 0) initial.push_back(v);
    });

    struct Frame {
      std::vector<int> candidates;
      size_t next = 0;
      int removed = -1;
    };
    std::vector<Frame> stack;
    stack.push_back({std::move(initial), 0, -1});

    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.candidates.size()) {
        int v = f.candidates[f.next++];
        current.erase(v);
        int sub = index.ordinal_of(current);
        assert(sub >= 0);
        if (stamp[sub] == ord) {
          current.insert(v);
          continue;
        }
        stamp[sub] = ord;
        // Maximal nodes of the child: the parent's, minus v, plus any
        // predecessor of v whose last inside-successor just left.
        std::vector<int> child;
        child.reserve(f.candidates.size() + 4);
        for (int u : f.candidates) {
          if (u != v) child.push_back(u);
        }
        for (int u : g.in_all(v)) {
          if (current.contains(u) && --out_cnt[u] == 0) child.push_back(u);
        }
        push_block_nodes(tracker, v, /*add=*/true);
        apply_candidate(ord, sub, tracker);
        stack.push_back({std::move(child), 0, v});
      } else {
        int v = f.removed;
        stack.pop_back();
        if (v >= 0) {
          push_block_nodes(tracker, v, /*add=*/false);
          for (int u : g.in_all(v)) {
            if (current.contains(u)) ++out_cnt[u];
          }
          current.insert(v);
        }
      }
    }
  }

  Split run() {
    size_t cells = size_t(index.count()) * (K + 1) * (L + 1);
    dp.assign(cells, Rat::infinity());
    bp.assign(cells, BackPtr{});
    stamp.assign(index.count(), -1);

    dp[cell(0, 0, 0)] = Rat(0);
    monotone_pass(0);
    for (int ord = 1; ord < index.count(); ++ord) {
      walk_subideals(ord);
      monotone_pass(ord);
    }

    int full = static_cast<int>(index.count()) - 1;
    assert(index.ideals[full] == universe);
    Rat best = dp[cell(full, K, L)];
    if (best.is_infinite()) throw InfeasibleError();

    // Prefer fewer devices among equal-objective cells.
    int bk = K, bl = L;
    for (int total = 0; total <= K + L; ++total) {
      bool found = false;
      for (int k = std::max(0, total - L); k <= std::min(K, total); ++k) {
        int l = total - k;
        if (dp[cell(full, k, l)] == best) {
          bk = k;
          bl = l;
          found = true;
          break;
        }
      }
      if (found) break;
    }

    std::vector<SplitBlock> blocks;
    int ord = full, k = bk, l = bl;
    while (!(ord == 0 && k == 0 && l == 0)) {
      const BackPtr& b = bp[cell(ord, k, l)];
      if (b.kind == 0) throw std::logic_error("dp reconstruction stuck");
      if (b.kind == 3) {
        --k;
        continue;
      }
      if (b.kind == 4) {
        --l;
        continue;
      }
      NodeSet fw = index.ideals[ord] - index.ideals[b.prev];
      SplitBlock block;
      block.cpu = (b.kind == 2);
      block.repl = b.repl;
      fw.for_each([&](int v) {
        block.members.push_back(v);
        if (training) {
          for (int bw : paired_bw[v]) block.members.push_back(bw);
        }
      });
      blocks.push_back(std::move(block));
      if (b.kind == 1) k -= b.repl;
      else --l;
      ord = b.prev;
    }
    return make_canonical_split(g, cfg, std::move(blocks), best);
  }
};

}  // namespace

Split solve_maxload_inference(const Graph& g, const DeviceConfig& config,
                              const SolveOptions& opt) {
  return MaxloadDp(g, config, opt, /*training=*/false, /*repl=*/false).run();
}

Split solve_maxload_training(const Graph& g, const DeviceConfig& config,
                             const SolveOptions& opt) {
  return MaxloadDp(g, config, opt, /*training=*/true, /*repl=*/false).run();
}

Split solve_maxload_replicated(const Graph& g, const DeviceConfig& config,
                               const SolveOptions& opt) {
  if (!config.bandwidth) throw MissingBandwidth();
  if (g.has_backward_nodes()) {
    throw std::invalid_argument(
        "replicated solve expects an inference graph");
  }
  return MaxloadDp(g, config, opt, /*training=*/false, /*repl=*/true).run();
}

std::vector<int> seeded_topo_order(const Graph& g, uint64_t seed) {
  SplitMix64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  std::vector<int> roots(g.size());
  for (int i = 0; i < g.size(); ++i) roots[i] = i;
  rng.shuffle(roots);
  std::vector<std::vector<int>> adj(g.size());
  for (int v = 0; v < g.size(); ++v) {
    adj[v] = g.out_all(v);
    rng.shuffle(adj[v]);
  }
  std::vector<char> visited(g.size(), 0);
  std::vector<int> postorder;
  postorder.reserve(g.size());
  for (int root : roots) {
    if (visited[root]) continue;
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    visited[root] = 1;
    while (!stack.empty()) {
      auto& [v, ei] = stack.back();
      if (ei < adj[v].size()) {
        int w = adj[v][ei++];
        if (!visited[w]) {
          visited[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        postorder.push_back(v);
        stack.pop_back();
      }
    }
  }
  std::reverse(postorder.begin(), postorder.end());
  return postorder;
}

namespace {

Graph chain_along(const Graph& g, const std::vector<int>& order) {
  std::set<std::pair<int, int>> existing;
  for (const Edge& e : g.edges()) existing.emplace(e.from, e.to);
  for (const Edge& e : g.artificial_edges()) existing.emplace(e.from, e.to);
  std::vector<Edge> art = g.artificial_edges();
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    int u = g.id_of(order[i]);
    int v = g.id_of(order[i + 1]);
    if (existing.emplace(u, v).second) art.push_back(Edge{u, v, {}});
  }
  return Graph(g.nodes(), g.edges(), std::move(art));
}

}  // namespace

Graph linearize(const Graph& g, uint64_t seed) {
  return chain_along(g, seeded_topo_order(g, seed));
}

Split solve_dpl(const Graph& g, const DeviceConfig& config, uint64_t seed,
                const SolveOptions& opt) {
  bool training = g.has_backward_nodes();
  std::vector<int> order = seeded_topo_order(g, seed);
  if (training) {
    // Chain only the forward part; the DP search space is its ideal lattice.
    std::vector<int> fw;
    for (int v : order) {
      if (!g.node(v).is_backward) fw.push_back(v);
    }
    order = std::move(fw);
  }
  Graph chained = chain_along(g, order);
  return training ? solve_maxload_training(chained, config, opt)
                  : solve_maxload_inference(chained, config, opt);
}

}  // namespace dagsplit
