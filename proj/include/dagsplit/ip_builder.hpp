#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "dagsplit/errors.hpp"
#include "dagsplit/graph.hpp"

namespace dagsplit {

enum class VarKind : uint8_t { Binary, Continuous };

struct VarMeta {
  enum class Role : uint8_t {
    X, CommIn, CommOut, Z, Start, Finish, Latency, TotalLatency,
    Load, MaxLoad, FwLoad, BwLoad, MaxFw, MaxBw,
  } role;
  int node = -1;    // external node id where applicable
  int device = -1;  // device/slot index per the model's convention
};

struct Variable {
  std::string name;
  VarKind kind;
  Rat lb;
  std::optional<Rat> ub;
  VarMeta meta;
};

enum class Sense : uint8_t { Le, Eq, Ge };

struct LinTerm {
  Rat coef;
  int var;
};

struct Constraint {
  std::string label;
  std::vector<LinTerm> terms;
  Sense sense;
  Rat rhs;
};

enum class ModelKind : uint8_t {
  LatencyContiguous,    // device indices: 0 = CPU pool, 1..k accelerators
  LatencyNonContiguous, // 0 = CPU pool, 1..k*q accelerator slots
  MaxLoad,              // 1..k accelerators, k+1..k+l CPUs
  MaxLoadGpipe,         // as MaxLoad; objective MaxFW + MaxBW
};

// Solver-agnostic MILP. Variables and constraints keep insertion order, which
// fixes the emitted text; labels are unique.
struct MilpModel {
  ModelKind kind = ModelKind::MaxLoad;
  bool contiguous = true;
  std::vector<Variable> vars;
  std::vector<Constraint> cons;
  std::vector<LinTerm> objective;  // minimized
  Rat big_h;
  std::vector<std::string> warnings;

  int add_var(std::string name, VarKind kind, VarMeta meta, Rat lb = Rat(0),
              std::optional<Rat> ub = std::nullopt);
  void add_con(std::string label, std::vector<LinTerm> terms, Sense sense,
               Rat rhs);
  int var_index(const std::string& name) const;  // -1 if absent
};

// Fig-2-style single-sample latency model (q = 1): per-node placement
// binaries over the CPU pool and k accelerators, transfer indicators,
// big-H-linearized start/finish timing, z-encoded contiguity per
// accelerator, and colocation equalities for paired/colocated nodes.
// Emits a warning (model still built) when the CPU count is below the
// graph's width.
MilpModel build_latency_ip(const Graph& g, const DeviceConfig& config);

// Same with q ordered subgraph slots per accelerator: per-slot contiguity,
// per-accelerator memory over its slot range, slot sequencing, and
// colocation expressed per device (sums over the slot range).
MilpModel build_latency_ip_noncontig(const Graph& g,
                                     const DeviceConfig& config);

// Max-load model over k accelerators and l CPUs; contiguity blocks optional
// (applied separately to forward and backward parts on training graphs).
// With gpipe_objective the model minimizes MaxFW + MaxBW over per-part loads
// instead of a single MaxLoad.
MilpModel build_maxload_ip(const Graph& g, const DeviceConfig& config,
                           bool contiguous, bool gpipe_objective = false);

// CPLEX LP-format text; deterministic (insertion order).
std::string emit_lp(const MilpModel& model);

struct CheckResult {
  bool satisfied = true;
  std::string violated_label;
  Rat slack;       // constraint violation amount when unsatisfied
  Rat objective;   // objective value under the substituted assignment
};

// Substitutes the split's implied binaries plus minimal feasible continuous
// values (forward propagation) into every constraint; reports the first
// violated one in insertion order.
CheckResult check_assignment(const MilpModel& model, const Graph& g,
                             const DeviceConfig& config, const Split& split);

enum class OracleKind : uint8_t {
  MaxLoadContiguous,
  MaxLoadFree,
  MaxLoadGpipe,
  Latency,
};

struct OracleLimits {
  int max_nodes = 10;
  int max_k_latency_noncontig = 2;
  int max_q = 2;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

// Exhaustive reference optimizer for desk-scale instances: enumerates device
// (and slot) assignments group-atomically with symmetry breaking and
// memory/contiguity pruning, evaluating candidates by direct load
// computation (max-load kinds) or the latency fixpoint. Returns nullopt when
// no feasible assignment exists; throws InstanceTooLarge beyond the limits.
// On deadline expiry the best split found so far is returned (timed_out set)
// or DeadlineExceeded is thrown if none exists yet.
std::optional<Split> oracle_solve(OracleKind kind, const Graph& g,
                                  const DeviceConfig& config,
                                  const OracleLimits& limits = {},
                                  bool* timed_out = nullptr);

}  // namespace dagsplit
