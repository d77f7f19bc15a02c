#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagsplit/rational.hpp"

namespace dagsplit {

// A computation node. acc_time == Rat::infinity() means the operation is not
// supported on accelerators. comm_time is the cost of moving this node's
// output between RAM and accelerator memory; it is paid once per crossing
// direction regardless of how many edges cross.
struct Node {
  int id = 0;  // external id, unique within a graph
  std::string name;
  Rat cpu_time;
  Rat acc_time;
  Rat comm_time;
  Rat mem_size;
  std::optional<int> color_class;
  bool is_backward = false;
  std::optional<int> forward_pair;    // external id of the paired forward node
  std::optional<int> colocate_with;   // external id; hard same-device constraint
  bool artificial = false;            // introduced by preprocessing, never serialized

  bool acc_supported() const { return !acc_time.is_infinite(); }
};

struct Edge {
  int from = 0;
  int to = 0;
  std::optional<Rat> comm_override;  // per-edge cost, resolved by preprocessing
};

// Word-packed node set over a fixed universe of dense node indices.
class NodeSet {
 public:
  NodeSet() : n_(0) {}
  explicit NodeSet(int universe) : n_(universe), words_((universe + 63) / 64, 0) {}
  static NodeSet full(int universe);

  int universe_size() const { return n_; }
  bool contains(int v) const {
    return (words_[v >> 6] >> (v & 63)) & 1u;
  }
  void insert(int v) { words_[v >> 6] |= uint64_t(1) << (v & 63); }
  void erase(int v) { words_[v >> 6] &= ~(uint64_t(1) << (v & 63)); }
  int count() const;
  bool empty() const;

  NodeSet& operator|=(const NodeSet& o);
  NodeSet& operator&=(const NodeSet& o);
  NodeSet& operator-=(const NodeSet& o);
  friend NodeSet operator|(NodeSet a, const NodeSet& b) { return a |= b; }
  friend NodeSet operator&(NodeSet a, const NodeSet& b) { return a &= b; }
  friend NodeSet operator-(NodeSet a, const NodeSet& b) { return a -= b; }

  bool is_subset_of(const NodeSet& o) const;
  bool intersects(const NodeSet& o) const;
  friend bool operator==(const NodeSet& a, const NodeSet& b) {
    return a.n_ == b.n_ && a.words_ == b.words_;
  }

  // True if a precedes b when sets are read as sorted index sequences.
  // Only meaningful for equal-size sets (as used for ideal ordering).
  static bool lex_less(const NodeSet& a, const NodeSet& b);

  std::vector<int> members() const;
  template <typename F>
  void for_each(F&& f) const {
    for (size_t w = 0; w < words_.size(); ++w) {
      uint64_t word = words_[w];
      while (word) {
        int b = __builtin_ctzll(word);
        f(static_cast<int>(w * 64 + b));
        word &= word - 1;
      }
    }
  }

  std::span<const uint64_t> words() const { return words_; }
  size_t hash() const;

 private:
  int n_;
  std::vector<uint64_t> words_;
};

enum class Interleaving { Sum, HalfDuplexMax, FullDuplexMax };
enum class ReplicationCombine { Sum, Max };

struct DeviceConfig {
  int accelerators = 0;             // k
  int cpus = 0;                     // l
  Rat memory_limit = Rat::infinity();
  int q = 1;                        // contiguous subgraphs per accelerator
  Interleaving interleaving = Interleaving::Sum;
  std::optional<Rat> bandwidth;     // for replication
  ReplicationCombine replication_combine = ReplicationCombine::Sum;
};

struct Placement {
  enum class Kind : uint8_t { Cpu, Accelerator };
  Kind kind = Kind::Cpu;
  // For accelerators: device index in 1..k and slot in 1..q.
  // For CPUs: index 0 is the shared pool (latency contexts); 1..l are
  // distinct CPU devices (max-load contexts).
  int index = 0;
  int slot = 1;

  static Placement cpu(int index = 0) { return {Kind::Cpu, index, 1}; }
  static Placement acc(int index, int slot = 1) {
    return {Kind::Accelerator, index, slot};
  }
  bool is_cpu() const { return kind == Kind::Cpu; }
  friend bool operator==(const Placement& a, const Placement& b) {
    return a.kind == b.kind && a.index == b.index && a.slot == b.slot;
  }
  friend bool operator<(const Placement& a, const Placement& b) {
    if (a.kind != b.kind) return a.kind == Kind::Cpu;
    if (a.index != b.index) return a.index < b.index;
    return a.slot < b.slot;
  }
  std::string label() const;  // "cpu", "cpu2", "acc1", "acc1.2" (slot
                              // suffix only when slot > 1)
};

struct Split {
  std::map<int, Placement> assignment;  // external node id -> placement
  Rat objective_value;
  std::vector<std::pair<std::string, Rat>> per_device_loads;
  std::map<std::string, int> replication;  // device label -> replica count

  std::optional<Placement> placement_of(int node_id) const;
};

struct ValidationError {
  enum class Kind { CycleFound, DuplicateId, DanglingEdge, BadPairing } kind;
  std::vector<int> cycle;  // external ids, in cycle order
  int id = 0;
  int from = 0, to = 0;
  std::string detail;
  std::string message() const;
};

class Graph {
 public:
  Graph() = default;
  Graph(std::vector<Node> nodes, std::vector<Edge> edges,
        std::vector<Edge> artificial_edges = {});

  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int idx) const { return nodes_[idx]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Edge>& artificial_edges() const { return artificial_edges_; }

  std::optional<int> index_of(int id) const;
  int id_of(int idx) const { return nodes_[idx].id; }

  // Adjacency over dense indices; edges with unresolvable endpoints are
  // skipped (validate_dag reports them).
  const std::vector<int>& out(int idx) const { return out_[idx]; }
  const std::vector<int>& in(int idx) const { return in_[idx]; }
  const std::vector<int>& out_all(int idx) const { return out_all_[idx]; }
  const std::vector<int>& in_all(int idx) const { return in_all_[idx]; }

  bool has_backward_nodes() const;
  NodeSet forward_set() const;
  NodeSet backward_set() const;
  int max_id() const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<Edge> artificial_edges_;
  std::unordered_map<int, int> index_;
  std::vector<std::vector<int>> out_, in_;          // real edges only
  std::vector<std::vector<int>> out_all_, in_all_;  // real + artificial
};

// --- validation & reachability ---

std::optional<ValidationError> validate_dag(const Graph& g);

class ReachMatrix {
 public:
  ReachMatrix() : n_(0), stride_(0) {}
  ReachMatrix(int n);
  // reachable(u, w): a directed path u -> ... -> w exists (u == w counts).
  bool reachable(int u, int w) const {
    return (rows_[size_t(u) * stride_ + (w >> 6)] >> (w & 63)) & 1u;
  }
  std::span<const uint64_t> row(int u) const {
    return {rows_.data() + size_t(u) * stride_, size_t(stride_)};
  }
  void set(int u, int w) {
    rows_[size_t(u) * stride_ + (w >> 6)] |= uint64_t(1) << (w & 63);
  }
  void or_row_into(int u, std::span<uint64_t> acc) const;
  int size() const { return n_; }

 private:
  int n_;
  int stride_;
  std::vector<uint64_t> rows_;
};

struct Reachability {
  ReachMatrix from;  // from.row(u) = nodes reachable from u
  ReachMatrix to;    // to.row(w)   = nodes that reach w
};

// Over real + artificial edges. Precondition: validated DAG.
Reachability reachability(const Graph& g);
// Restricted to the induced subgraph on `within`.
Reachability reachability_within(const Graph& g, const NodeSet& within);

// Topological order of dense indices (real + artificial edges). Empty result
// only for empty graphs; precondition acyclic.
std::vector<int> topological_order(const Graph& g);

// --- contiguity / ideals ---

bool is_contiguous(const Graph& g, const NodeSet& s);
bool is_contiguous(const Reachability& r, const NodeSet& s);
bool is_ideal(const Graph& g, const NodeSet& s);

struct NotNestedError {};
// Requires inner to be a subset of outer (throws NotNestedError otherwise).
NodeSet contiguous_between(const NodeSet& outer, const NodeSet& inner);

struct IdealBudgetExceeded {
  long long limit;
};

struct IdealIndex {
  std::vector<NodeSet> ideals;  // size-major order, lexicographic within size
  std::unordered_map<size_t, std::vector<int>> by_hash;  // hash -> ordinals

  long long count() const { return static_cast<long long>(ideals.size()); }
  int ordinal_of(const NodeSet& s) const;  // -1 if not an ideal
};

inline constexpr long long kDefaultIdealBudget = 5'000'000;

IdealIndex enumerate_ideals(const Graph& g,
                            long long budget = kDefaultIdealBudget);
// Ideals of the induced subgraph on `within` (edges with both endpoints
// inside; real + artificial).
IdealIndex enumerate_ideals_within(const Graph& g, const NodeSet& within,
                                   long long budget = kDefaultIdealBudget);

// --- device-load cost functions ---

struct AccParts {
  Rat comm_in;   // sum of comm over outside producers with a real edge in
  Rat proc;      // sum of acc_time over members
  Rat comm_out;  // sum of comm over members with a real edge out
  Rat mem;       // sum of mem_size over members
  bool unsupported = false;
};

AccParts acc_cost_parts(const Graph& g, const NodeSet& s);
// Load parts of one side (forward or backward share) of a device: proc/mem
// cover `part` only, while in/out transfers are charged against edges
// crossing the `device_set` boundary into/out of `part`.
AccParts acc_cost_parts(const Graph& g, const NodeSet& part,
                        const NodeSet& device_set);
Rat combine_interleaving(const AccParts& p, Interleaving mode);
// Full accelerator load of s; Rat::infinity() when memory exceeds the limit
// or a member is not accelerator-supported.
Rat acc_cost(const Graph& g, const NodeSet& s, const DeviceConfig& config);
Rat cpu_cost(const Graph& g, const NodeSet& s);

// Size of the largest antichain, exact (minimum path cover on the transitive
// closure via maximum bipartite matching).
int max_antichain(const Graph& g);

// Union-find over hard colocation links (colocate_with, plus forward/backward
// pairs when with_training_pairs). Returns a representative index per node.
std::vector<int> colocation_group_ids(const Graph& g, bool with_training_pairs);

// Whole-split load recomputation under the max-load cost model: every CPU
// placement index is a distinct device, accelerator slots of one device are
// merged. Returns device label -> load, plus the max.
std::pair<std::vector<std::pair<std::string, Rat>>, Rat> recompute_maxload(
    const Graph& g, const DeviceConfig& config, const Split& split);

struct SplitBlock {
  bool cpu = false;
  std::vector<int> members;  // dense indices
  int repl = 1;              // accelerator replica count
};

// Builds a Split with canonical device numbering: accelerator groups and CPU
// devices are each ordered by the smallest external node id they hold; empty
// blocks are dropped; a replicated block occupies repl consecutive
// accelerator indices and is recorded under the first one.
Split make_canonical_split(const Graph& g, const DeviceConfig& config,
                           std::vector<SplitBlock> blocks,
                           const Rat& objective);

}  // namespace dagsplit

template <>
struct std::hash<dagsplit::NodeSet> {
  size_t operator()(const dagsplit::NodeSet& s) const { return s.hash(); }
};
