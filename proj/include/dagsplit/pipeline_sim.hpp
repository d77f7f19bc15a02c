#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dagsplit/errors.hpp"
#include "dagsplit/graph.hpp"

namespace dagsplit {

struct LatencyReport {
  Rat total;
  std::map<int, Rat> node_latency;  // external id -> output-available time
  // slot label -> (start, finish) for accelerator subgraphs
  std::vector<std::pair<std::string, std::pair<Rat, Rat>>> slot_times;
};

// Single-sample schedule evaluation under the subgraph-invocation model:
// CPU nodes run as soon as their predecessors finish (one core each, width
// assumption), an accelerator slot starts once every crossing input is in
// RAM and its predecessor slot on the same accelerator has finished, then
// pays in-transfer + processing + out-transfer. Least fixpoint over real
// edges. Returns nullopt when slot-level dependencies are cyclic (an
// unschedulable slot assignment).
std::optional<LatencyReport> evaluate_latency(const Graph& g,
                                              const DeviceConfig& config,
                                              const Split& split);

struct VirtualBlock {
  Placement device;            // physical device (slot ignored)
  NodeSet nodes;
  std::vector<Rat> lanes;      // per-lane loads, see Decomposition
  Rat in_cost, proc_cost, out_cost;
  uint8_t work_phase = 0;      // Phase of the compute portion
};

// Contiguous blocks in a pipeline order: the block sequence topologically
// orders the block-quotient DAG and blocks of one physical device are never
// scheduled concurrently. Lane structure follows the interleaving mode:
// Sum -> one lane (in+proc+out); HalfDuplexMax -> {comm, compute};
// FullDuplexMax -> {in, compute, out}. CPU blocks carry compute only.
struct Decomposition {
  std::vector<VirtualBlock> blocks;
  std::vector<std::string> lane_names;  // suffix per lane, "" = main lane
};

// Peels the split into contiguous per-device blocks. A split whose device
// quotient is acyclic (any contiguous split) yields one block per device in
// quotient-topological order; otherwise maximal same-device runs of a fixed
// topological order are peeled, which are contiguous order-intervals.
// charge_intra_device: when true, transfers between two blocks of the same
// physical device are charged to both blocks (strict per-invocation
// accounting); when false (default) device-internal movement is free, so a
// device's block loads sum exactly to its device-level load.
Decomposition decompose_noncontiguous(const Graph& g,
                                      const DeviceConfig& config,
                                      const Split& split,
                                      const NodeSet* restrict_to = nullptr,
                                      bool charge_intra_device = false);

// Forward + backward decompositions of a training split; every forward node
// must share a device with its paired backward node (ColocationViolated).
std::pair<Decomposition, Decomposition> decompose_training(
    const Graph& g, const DeviceConfig& config, const Split& split,
    bool charge_intra_device = false);

enum class Phase : uint8_t { Forward, Backward, TransferIn, TransferOut };

struct TraceEvent {
  std::string device;  // physical device label, lane-suffixed when != main
  long sample = 0;
  Phase phase = Phase::Forward;
  Rat start, end;
};

struct ScheduleTrace {
  // Per-event records are kept up to 100k samples; beyond that only the
  // aggregate times are filled.
  std::vector<TraceEvent> events;
  Rat makespan;
  Rat avg_time_per_sample;     // makespan / n (includes ramp-up/down)
  Rat steady_time_per_sample;  // asymptotic per-sample time of the schedule
};

// Round-based pipeline over the block sequence: sample s occupies block b in
// round s+b-1, round length is the busiest device-lane among active blocks.
// Average time per sample converges to the max physical-device load.
ScheduleTrace simulate_inference_pipeline(const Decomposition& d, long n);

// One-forward-one-backward schedule: forward stages followed by backward
// stages in one slot sequence; after ramp-up each device alternates one
// forward and one backward microbatch per slot. Steady-state per-sample time
// is max over devices of (forward + backward load).
ScheduleTrace simulate_1f1b(const Decomposition& fw, const Decomposition& bw,
                            long n);

// Forward pipeline over the whole batch of m microbatches, then the backward
// pipeline. Steady-state per-sample time is max forward load + max backward
// load.
ScheduleTrace simulate_gpipe(const Decomposition& fw, const Decomposition& bw,
                             long m);

std::string trace_to_csv(const ScheduleTrace& t);

}  // namespace dagsplit
