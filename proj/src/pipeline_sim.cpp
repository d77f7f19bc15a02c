#include "dagsplit/pipeline_sim.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dagsplit/dp_solver.hpp"

namespace dagsplit {

namespace {

struct SlotKey {
  int acc, slot;
  bool operator<(const SlotKey& o) const {
    return acc != o.acc ? acc < o.acc : slot < o.slot;
  }
};

}  // namespace

std::optional<LatencyReport> evaluate_latency(const Graph& g,
                                              const DeviceConfig& cfg,
                                              const Split& split) {
  (void)cfg;
  // Units: every CPU node on its own (width assumption: the pool runs them
  // in parallel), one unit per accelerator subgraph slot.
  std::vector<int> unit_of(g.size(), -1);
  std::vector<std::vector<int>> unit_members;
  std::map<SlotKey, int> slot_unit;
  std::vector<SlotKey> unit_slot;

  for (int v = 0; v < g.size(); ++v) {
    auto pl = split.placement_of(g.id_of(v));
    if (!pl) {
      throw std::invalid_argument("split does not cover node " +
                                  std::to_string(g.id_of(v)));
    }
    if (pl->is_cpu()) {
      unit_of[v] = static_cast<int>(unit_members.size());
      unit_members.push_back({v});
      unit_slot.push_back({0, 0});
    } else {
      SlotKey key{pl->index, pl->slot};
      auto [it, fresh] = slot_unit.try_emplace(key, -1);
      if (fresh) {
        it->second = static_cast<int>(unit_members.size());
        unit_members.push_back({});
        unit_slot.push_back(key);
      }
      unit_of[v] = it->second;
      unit_members[it->second].push_back(v);
    }
  }
  int units = static_cast<int>(unit_members.size());

  std::vector<std::vector<int>> succ(units);
  std::vector<int> indeg(units, 0);
  auto add_dep = [&](int a, int b) {
    if (a == b) return;
    succ[a].push_back(b);
    ++indeg[b];
  };
  for (const Edge& e : g.edges()) {
    add_dep(unit_of[*g.index_of(e.from)], unit_of[*g.index_of(e.to)]);
  }
  // An accelerator works through its slots in order.
  for (auto& [key, unit] : slot_unit) {
    if (key.slot <= 1) continue;
    for (int s = key.slot - 1; s >= 1; --s) {
      auto prev = slot_unit.find(SlotKey{key.acc, s});
      if (prev != slot_unit.end()) {
        add_dep(prev->second, unit);
        break;
      }
    }
  }

  std::vector<int> order;
  order.reserve(units);
  for (int u = 0; u < units; ++u) {
    if (indeg[u] == 0) order.push_back(u);
  }
  for (size_t i = 0; i < order.size(); ++i) {
    for (int w : succ[order[i]]) {
      if (--indeg[w] == 0) order.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != units) return std::nullopt;  // deadlock

  std::vector<Rat> unit_start(units), unit_finish(units);
  std::vector<Rat> node_latency(g.size());
  for (int u : order) {
    const SlotKey key = unit_slot[u];
    if (key.acc == 0) {
      int v = unit_members[u][0];
      Rat ready;
      for (int p : g.in(v)) ready = Rat::max(ready, node_latency[p]);
      node_latency[v] = ready + g.node(v).cpu_time;
      unit_start[u] = ready;
      unit_finish[u] = node_latency[v];
      continue;
    }
    NodeSet members(g.size());
    for (int v : unit_members[u]) members.insert(v);
    Rat start;
    // inputs ready in RAM
    NodeSet charged(g.size());
    Rat in_sum, proc, out_sum;
    for (int v : unit_members[u]) {
      const Node& n = g.node(v);
      proc += n.acc_time;  // infinity when unsupported
      for (int p : g.in(v)) {
        if (!members.contains(p) && !charged.contains(p)) {
          charged.insert(p);
          in_sum += g.node(p).comm_time;
          start = Rat::max(start, node_latency[p]);
        }
      }
      for (int w : g.out(v)) {
        if (!members.contains(w)) {
          out_sum += n.comm_time;
          break;
        }
      }
    }
    // wait for the previous slot of the same accelerator
    for (int s = key.slot - 1; s >= 1; --s) {
      auto prev = slot_unit.find(SlotKey{key.acc, s});
      if (prev != slot_unit.end()) {
        start = Rat::max(start, unit_finish[prev->second]);
        break;
      }
    }
    unit_start[u] = start;
    unit_finish[u] = start + in_sum + proc + out_sum;
    for (int v : unit_members[u]) node_latency[v] = unit_finish[u];
  }

  LatencyReport report;
  for (int v = 0; v < g.size(); ++v) {
    report.node_latency[g.id_of(v)] = node_latency[v];
    report.total = Rat::max(report.total, node_latency[v]);
  }
  for (auto& [key, unit] : slot_unit) {
    report.slot_times.emplace_back(
        Placement::acc(key.acc, key.slot).label(),
        std::make_pair(unit_start[unit], unit_finish[unit]));
  }
  return report;
}

namespace {

std::vector<std::string> lane_names_for(Interleaving mode) {
  switch (mode) {
    case Interleaving::Sum: return {""};
    case Interleaving::HalfDuplexMax: return {"", ":comm"};
    case Interleaving::FullDuplexMax: return {"", ":in", ":out"};
  }
  return {""};
}

void fill_lanes(VirtualBlock& b, Interleaving mode) {
  switch (mode) {
    case Interleaving::Sum:
      b.lanes = {b.in_cost + b.proc_cost + b.out_cost};
      break;
    case Interleaving::HalfDuplexMax:
      b.lanes = {b.proc_cost, b.in_cost + b.out_cost};
      break;
    case Interleaving::FullDuplexMax:
      b.lanes = {b.proc_cost, b.in_cost, b.out_cost};
      break;
  }
}

}  // namespace

Decomposition decompose_noncontiguous(const Graph& g, const DeviceConfig& cfg,
                                      const Split& split,
                                      const NodeSet* restrict_to,
                                      bool charge_intra_device) {
  NodeSet considered =
      restrict_to ? *restrict_to : NodeSet::full(g.size());

  // Full device sets decide transfer boundaries; `considered` decides block
  // membership.
  std::map<std::string, NodeSet> device_full, device_part;
  std::map<std::string, Placement> device_pl;
  for (int v = 0; v < g.size(); ++v) {
    auto pl = split.placement_of(g.id_of(v));
    if (!pl) {
      throw std::invalid_argument("split does not cover node " +
                                  std::to_string(g.id_of(v)));
    }
    Placement device = *pl;
    device.slot = 1;
    auto [it, fresh] = device_full.try_emplace(device.label(), g.size());
    it->second.insert(v);
    device_pl.emplace(device.label(), device);
    auto [pit, pfresh] = device_part.try_emplace(device.label(), g.size());
    if (considered.contains(v)) pit->second.insert(v);
  }

  std::vector<int> order = seeded_topo_order(g, 0);
  std::vector<int> pos(g.size());
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);

  // Quotient over the devices that own considered nodes.
  std::vector<std::string> labels;
  for (auto& [label, part] : device_part) {
    if (!part.empty()) labels.push_back(label);
  }
  std::map<std::string, int> label_idx;
  for (size_t i = 0; i < labels.size(); ++i) label_idx[labels[i]] = static_cast<int>(i);
  auto device_of = [&](int v) -> int {
    for (size_t i = 0; i < labels.size(); ++i) {
      if (device_part.at(labels[i]).contains(v)) return static_cast<int>(i);
    }
    return -1;
  };
  int nd = static_cast<int>(labels.size());
  std::vector<std::vector<char>> qadj(nd, std::vector<char>(nd, 0));
  auto quotient_edge = [&](int from, int to) {
    int a = device_of(from), b = device_of(to);
    if (a >= 0 && b >= 0 && a != b) qadj[a][b] = 1;
  };
  for (const Edge& e : g.edges()) {
    quotient_edge(*g.index_of(e.from), *g.index_of(e.to));
  }
  for (const Edge& e : g.artificial_edges()) {
    quotient_edge(*g.index_of(e.from), *g.index_of(e.to));
  }
  // Kahn with deterministic tie-break: earliest member position.
  std::vector<int> qindeg(nd, 0);
  for (int a = 0; a < nd; ++a) {
    for (int b = 0; b < nd; ++b) {
      if (qadj[a][b]) ++qindeg[b];
    }
  }
  auto earliest_pos = [&](int d) {
    int best = INT32_MAX;
    device_part.at(labels[d]).for_each([&](int v) {
      best = std::min(best, pos[v]);
    });
    return best;
  };
  std::vector<int> qorder;
  std::vector<char> taken(nd, 0);
  for (int step = 0; step < nd; ++step) {
    int pick = -1;
    for (int d = 0; d < nd; ++d) {
      if (taken[d] || qindeg[d] != 0) continue;
      if (pick < 0 || earliest_pos(d) < earliest_pos(pick)) pick = d;
    }
    if (pick < 0) break;  // cyclic quotient
    taken[pick] = 1;
    qorder.push_back(pick);
    for (int b = 0; b < nd; ++b) {
      if (qadj[pick][b]) --qindeg[b];
    }
  }

  std::vector<std::pair<Placement, NodeSet>> raw_blocks;
  if (static_cast<int>(qorder.size()) == nd) {
    for (int d : qorder) {
      raw_blocks.emplace_back(device_pl.at(labels[d]), device_part.at(labels[d]));
    }
  } else {
    // Maximal same-device runs along the fixed topological order; intervals
    // of a topological order are always contiguous.
    std::string run_label;
    NodeSet run(g.size());
    for (int v : order) {
      if (!considered.contains(v)) continue;
      int d = device_of(v);
      if (labels[d] != run_label && !run.empty()) {
        raw_blocks.emplace_back(device_pl.at(run_label), run);
        run = NodeSet(g.size());
      }
      run_label = labels[d];
      run.insert(v);
    }
    if (!run.empty()) raw_blocks.emplace_back(device_pl.at(run_label), run);
  }

  Decomposition decomp;
  decomp.lane_names = lane_names_for(cfg.interleaving);
  std::map<std::string, NodeSet> charged_per_device;
  for (auto& [pl, nodes] : raw_blocks) {
    VirtualBlock block;
    block.device = pl;
    block.nodes = nodes;
    const NodeSet& full = device_full.at(pl.label());
    const NodeSet& boundary = charge_intra_device ? nodes : full;
    auto [cit, fresh] = charged_per_device.try_emplace(pl.label(), g.size());
    NodeSet& device_charged = cit->second;
    NodeSet block_charged(g.size());
    NodeSet& charged = charge_intra_device ? block_charged : device_charged;
    nodes.for_each([&](int v) {
      const Node& n = g.node(v);
      if (pl.is_cpu()) {
        block.proc_cost += n.cpu_time;
        return;
      }
      block.proc_cost += n.acc_time;
      for (int p : g.in(v)) {
        if (boundary.contains(p) || charged.contains(p)) continue;
        charged.insert(p);
        block.in_cost += g.node(p).comm_time;
      }
      for (int w : g.out(v)) {
        if (!boundary.contains(w)) {
          block.out_cost += n.comm_time;
          break;
        }
      }
    });
    fill_lanes(block, cfg.interleaving);
    decomp.blocks.push_back(std::move(block));
  }
  return decomp;
}

std::pair<Decomposition, Decomposition> decompose_training(
    const Graph& g, const DeviceConfig& cfg, const Split& split,
    bool charge_intra_device) {
  for (int v = 0; v < g.size(); ++v) {
    const Node& n = g.node(v);
    if (!n.is_backward || !n.forward_pair) continue;
    auto mine = split.placement_of(n.id);
    auto pair = split.placement_of(*n.forward_pair);
    if (!mine || !pair || !(Placement{mine->kind, mine->index, 1} ==
                            Placement{pair->kind, pair->index, 1})) {
      throw ColocationViolated("node " + std::to_string(n.id) +
                               " is not on the device of its forward pair");
    }
  }
  NodeSet fw = g.forward_set(), bw = g.backward_set();
  Decomposition dfw =
      decompose_noncontiguous(g, cfg, split, &fw, charge_intra_device);
  Decomposition dbw =
      decompose_noncontiguous(g, cfg, split, &bw, charge_intra_device);
  for (auto& b : dbw.blocks) b.work_phase = static_cast<uint8_t>(Phase::Backward);
  return {std::move(dfw), std::move(dbw)};
}

namespace {

// Per-event traces stay proportional to the sample count; past this many
// samples only the aggregate times are kept.
constexpr long kMaxTracedSamples = 100000;

// Round-based engine: block b (1-based pipeline position) handles sample
// s = r - b + 1 in round r. Round length is the busiest (device, lane) among
// active blocks; a device's active blocks run back to back within the round.
Rat run_rounds(const std::vector<VirtualBlock>& blocks,
               const std::vector<std::string>& lane_names, long n, Rat t0,
               ScheduleTrace& trace) {
  const int nb = static_cast<int>(blocks.size());
  const int lanes = static_cast<int>(lane_names.size());
  const bool emit_events = n <= kMaxTracedSamples;
  Rat now = t0;
  for (long r = 1; r < n + nb; ++r) {
    // round duration
    std::map<std::string, std::vector<Rat>> device_busy;
    for (int b = 0; b < nb; ++b) {
      long s = r - b;
      if (s < 1 || s > n) continue;
      auto [it, fresh] =
          device_busy.try_emplace(blocks[b].device.label(),
                                  std::vector<Rat>(lanes, Rat(0)));
      for (int ln = 0; ln < lanes && ln < static_cast<int>(blocks[b].lanes.size()); ++ln) {
        it->second[ln] += blocks[b].lanes[ln];
      }
    }
    Rat duration;
    for (auto& [label, busy] : device_busy) {
      for (const Rat& lane_busy : busy) duration = Rat::max(duration, lane_busy);
    }
    // events
    std::map<std::string, std::vector<Rat>> cursor;
    for (int b = 0; emit_events && b < nb; ++b) {
      long s = r - b;
      if (s < 1 || s > n) continue;
      const VirtualBlock& block = blocks[b];
      auto [it, fresh] = cursor.try_emplace(block.device.label(),
                                            std::vector<Rat>(lanes, Rat(0)));
      std::vector<Rat>& cur = it->second;
      Phase work = static_cast<Phase>(block.work_phase);
      auto emit = [&](int lane, Phase phase, const Rat& len) {
        if (len.is_zero()) return;
        Rat start = now + cur[lane];
        trace.events.push_back(TraceEvent{
            block.device.label() + lane_names[lane], s, phase, start,
            start + len});
        cur[lane] += len;
      };
      if (lanes == 1) {
        emit(0, Phase::TransferIn, block.in_cost);
        emit(0, work, block.proc_cost);
        emit(0, Phase::TransferOut, block.out_cost);
      } else if (lanes == 2) {
        emit(0, work, block.proc_cost);
        emit(1, Phase::TransferIn, block.in_cost);
        emit(1, Phase::TransferOut, block.out_cost);
      } else {
        emit(0, work, block.proc_cost);
        emit(1, Phase::TransferIn, block.in_cost);
        emit(2, Phase::TransferOut, block.out_cost);
      }
    }
    now += duration;
  }
  return now - t0;
}

Rat steady_rate(const std::vector<VirtualBlock>& blocks, int lanes) {
  std::map<std::string, std::vector<Rat>> totals;
  for (const VirtualBlock& b : blocks) {
    auto [it, fresh] = totals.try_emplace(b.device.label(),
                                          std::vector<Rat>(lanes, Rat(0)));
    for (int ln = 0; ln < lanes && ln < static_cast<int>(b.lanes.size()); ++ln) {
      it->second[ln] += b.lanes[ln];
    }
  }
  Rat rate;
  for (auto& [label, busy] : totals) {
    for (const Rat& lane_busy : busy) rate = Rat::max(rate, lane_busy);
  }
  return rate;
}

}  // namespace

ScheduleTrace simulate_inference_pipeline(const Decomposition& d, long n) {
  if (n < 1) throw std::invalid_argument("need n >= 1 samples");
  ScheduleTrace trace;
  trace.makespan = run_rounds(d.blocks, d.lane_names, n, Rat(0), trace);
  trace.avg_time_per_sample = trace.makespan / Rat(n);
  trace.steady_time_per_sample =
      steady_rate(d.blocks, static_cast<int>(d.lane_names.size()));
  return trace;
}

ScheduleTrace simulate_1f1b(const Decomposition& fw, const Decomposition& bw,
                            long n) {
  if (n < 1) throw std::invalid_argument("need n >= 1 samples");
  std::vector<VirtualBlock> all = fw.blocks;
  for (const VirtualBlock& b : bw.blocks) {
    VirtualBlock copy = b;
    copy.work_phase = static_cast<uint8_t>(Phase::Backward);
    all.push_back(std::move(copy));
  }
  ScheduleTrace trace;
  trace.makespan = run_rounds(all, fw.lane_names, n, Rat(0), trace);
  trace.avg_time_per_sample = trace.makespan / Rat(n);
  trace.steady_time_per_sample =
      steady_rate(all, static_cast<int>(fw.lane_names.size()));
  return trace;
}

ScheduleTrace simulate_gpipe(const Decomposition& fw, const Decomposition& bw,
                             long m) {
  if (m < 1) throw std::invalid_argument("need m >= 1 microbatches");
  ScheduleTrace trace;
  Rat fw_span = run_rounds(fw.blocks, fw.lane_names, m, Rat(0), trace);
  std::vector<VirtualBlock> bwb = bw.blocks;
  for (auto& b : bwb) b.work_phase = static_cast<uint8_t>(Phase::Backward);
  Rat bw_span = run_rounds(bwb, bw.lane_names, m, fw_span, trace);
  trace.makespan = fw_span + bw_span;
  trace.avg_time_per_sample = trace.makespan / Rat(m);
  int lanes = static_cast<int>(fw.lane_names.size());
  trace.steady_time_per_sample =
      steady_rate(fw.blocks, lanes) + steady_rate(bwb, lanes);
  return trace;
}

std::string trace_to_csv(const ScheduleTrace& t) {
  std::ostringstream os;
  os << "device,sample,phase,start,end\n";
  for (const TraceEvent& e : t.events) {
    const char* phase = e.phase == Phase::Forward      ? "forward"
                        : e.phase == Phase::Backward   ? "backward"
                        : e.phase == Phase::TransferIn ? "transfer_in"
                                                       : "transfer_out";
    os << e.device << "," << e.sample << "," << phase << ","
       << e.start.to_decimal_string() << "," << e.end.to_decimal_string()
       << "\n";
  }
  return os.str();
}

}  // namespace dagsplit
