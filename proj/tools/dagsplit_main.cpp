#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dagsplit/baselines.hpp"
#include "dagsplit/dp_solver.hpp"
#include "dagsplit/ingest.hpp"
#include "dagsplit/ip_builder.hpp"
#include "dagsplit/pipeline_sim.hpp"
#include "dagsplit/preprocess.hpp"

namespace {

using namespace dagsplit;
using Clock = std::chrono::steady_clock;

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitBudget = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

struct CommonOpts {
  std::string input;
  std::string output;
  std::string solver = "dp";
  std::string objective = "maxload";
  std::string interleaving;
  std::string replication = "off";
  int q = 0;
  int restarts = 10;
  uint64_t seed = 0;
  long samples = 1000;
  long microbatches = 32;
  double time_limit_s = 0;
  long long ideal_budget = kDefaultIdealBudget;
  int oracle_limit = 10;
  bool non_contiguous = false;
};

void apply_overrides(DeviceConfig& cfg, const CommonOpts& opt) {
  if (opt.q > 0) cfg.q = opt.q;
  if (!opt.interleaving.empty()) {
    if (opt.interleaving == "sum") cfg.interleaving = Interleaving::Sum;
    else if (opt.interleaving == "halfDuplexMax") cfg.interleaving = Interleaving::HalfDuplexMax;
    else if (opt.interleaving == "fullDuplexMax") cfg.interleaving = Interleaving::FullDuplexMax;
    else throw ParseError("--interleaving", "expected sum | halfDuplexMax | fullDuplexMax");
  }
  if (opt.replication == "sum") cfg.replication_combine = ReplicationCombine::Sum;
  else if (opt.replication == "max") cfg.replication_combine = ReplicationCombine::Max;
  else if (opt.replication != "off") {
    throw ParseError("--replication", "expected off | sum | max");
  }
}

void print_split_summary(std::ostream& os, const Split& split, double wall_s) {
  os << "objective: " << split.objective_value << "\n";
  for (const auto& [label, load] : split.per_device_loads) {
    os << "  " << label << ": " << load;
    auto rit = split.replication.find(label);
    if (rit != split.replication.end()) os << " (x" << rit->second << ")";
    os << "\n";
  }
  os << "wall time: " << wall_s << " s\n";
}

int cmd_solve(const CommonOpts& opt) {
  ParsedWorkload workload = parse_workload(read_file(opt.input));
  for (const std::string& w : workload.warnings) std::cerr << "warning: " << w << "\n";
  DeviceConfig cfg = workload.config;
  apply_overrides(cfg, opt);

  Prepared prep = preprocess(workload.graph);
  bool training = prep.graph.has_backward_nodes();

  SolveOptions solve_opt;
  solve_opt.ideal_budget = opt.ideal_budget;
  std::optional<Clock::time_point> deadline;
  if (opt.time_limit_s > 0) {
    deadline = Clock::now() + std::chrono::milliseconds(
                                  static_cast<long>(opt.time_limit_s * 1000));
    solve_opt.deadline = deadline;
  }

  if (opt.solver == "ip-emit") {
    MilpModel model;
    if (opt.objective == "latency") {
      model = cfg.q > 1 ? build_latency_ip_noncontig(prep.graph, cfg)
                        : build_latency_ip(prep.graph, cfg);
    } else if (opt.objective == "maxload") {
      model = build_maxload_ip(prep.graph, cfg, !opt.non_contiguous);
    } else if (opt.objective == "gpipe") {
      model = build_maxload_ip(prep.graph, cfg, !opt.non_contiguous,
                               /*gpipe_objective=*/true);
    } else {
      throw ParseError("--objective", "expected maxload | latency | gpipe");
    }
    for (const std::string& w : model.warnings) std::cerr << "warning: " << w << "\n";
    std::string lp = emit_lp(model);
    std::string path = opt.output.empty() ? opt.input + ".lp" : opt.output;
    write_file(path, lp);
    std::cerr << "wrote " << path << " (" << model.vars.size() << " variables, "
              << model.cons.size() << " constraints)\n";
    return 0;
  }

  auto started = Clock::now();
  Split split;
  std::string status = "optimal";
  if (opt.solver == "dp" || opt.solver == "dpl") {
    if (opt.objective != "maxload") {
      throw ParseError("--objective",
                       "the dynamic program optimizes max-load; use --solver "
                       "oracle or ip-emit for " + opt.objective);
    }
    try {
      if (opt.solver == "dpl") {
        split = solve_dpl(prep.graph, cfg, opt.seed, solve_opt);
        status = "heuristic";
      } else if (opt.replication != "off") {
        if (training) throw ParseError("--replication", "inference graphs only");
        split = solve_maxload_replicated(prep.graph, cfg, solve_opt);
      } else {
        split = training ? solve_maxload_training(prep.graph, cfg, solve_opt)
                         : solve_maxload_inference(prep.graph, cfg, solve_opt);
      }
    } catch (const DeadlineExceeded&) {
      std::cerr << "warning: time limit reached, falling back to the greedy "
                   "split\n";
      split = solve_greedy(prep.graph, cfg);
      status = "feasible";
    }
  } else if (opt.solver == "greedy") {
    split = solve_greedy(prep.graph, cfg);
    status = "heuristic";
    if (opt.objective == "latency") {
      auto report = evaluate_latency(prep.graph, cfg, split);
      if (report) split.objective_value = report->total;
    }
  } else if (opt.solver == "local-search") {
    if (opt.objective != "maxload") {
      throw ParseError("--objective", "local search optimizes max-load only");
    }
    LocalSearchConfig ls;
    ls.restarts = opt.restarts;
    ls.seed = opt.seed;
    split = solve_local_search(prep.graph, cfg, ls);
    status = "heuristic";
  } else if (opt.solver == "oracle") {
    OracleLimits limits;
    limits.max_nodes = opt.oracle_limit;
    limits.max_k_latency_noncontig = std::max(2, cfg.accelerators);
    limits.deadline = deadline;
    OracleKind kind;
    if (opt.objective == "latency") kind = OracleKind::Latency;
    else if (opt.objective == "gpipe") kind = OracleKind::MaxLoadGpipe;
    else kind = opt.non_contiguous ? OracleKind::MaxLoadFree
                                   : OracleKind::MaxLoadContiguous;
    bool timed_out = false;
    auto result = oracle_solve(kind, prep.graph, cfg, limits, &timed_out);
    if (!result) throw InfeasibleError();
    split = *result;
    if (timed_out) status = "feasible";
  } else {
    throw ParseError("--solver",
                     "expected dp | dpl | ip-emit | oracle | greedy | "
                     "local-search");
  }
  double wall_s =
      std::chrono::duration<double>(Clock::now() - started).count();

  Split mapped = map_back(split, prep.maps);
  ResultMeta meta;
  meta.objective = opt.objective;
  meta.solver = opt.solver;
  meta.status = status;
  meta.wall_time_s = wall_s;
  std::string doc = write_result(mapped, meta);
  if (!opt.output.empty()) {
    write_file(opt.output, doc);
  } else {
    std::cout << doc;
  }
  print_split_summary(std::cerr, split, wall_s);
  return 0;
}

struct SimulateOpts {
  std::string input;
  std::string result;
  std::string schedule = "pipeline";
  std::string output;
  long samples = 1000;
  long microbatches = 32;
};

int cmd_simulate(const SimulateOpts& opt) {
  ParsedWorkload workload = parse_workload(read_file(opt.input));
  auto [result_split, meta] = parse_result(read_file(opt.result));
  Prepared prep = preprocess(workload.graph);

  // The result is stated on original node ids; move it onto the
  // preprocessed graph that the cost model lives on.
  for (const Node& n : workload.graph.nodes()) {
    if (!result_split.placement_of(n.id)) {
      throw ParseError("assignment",
                       "result does not cover node " + std::to_string(n.id));
    }
  }
  Split lifted = lift_split(prep, result_split);
  const DeviceConfig& cfg = workload.config;

  if (opt.schedule == "latency") {
    auto report = evaluate_latency(prep.graph, cfg, lifted);
    if (!report) {
      std::cerr << "the split's subgraph order is unschedulable\n";
      return kExitInfeasible;
    }
    std::cout << "latency: " << report->total << "\n";
    for (const Node& n : workload.graph.nodes()) {
      auto it = report->node_latency.find(n.id);
      if (it != report->node_latency.end()) {
        std::cout << "  node " << n.id << ": " << it->second << "\n";
      }
    }
    return 0;
  }

  ScheduleTrace trace;
  Rat analytic;
  if (opt.schedule == "pipeline") {
    Decomposition d = decompose_noncontiguous(prep.graph, cfg, lifted);
    trace = simulate_inference_pipeline(d, opt.samples);
    analytic = trace.steady_time_per_sample;
  } else if (opt.schedule == "1f1b") {
    auto [dfw, dbw] = decompose_training(prep.graph, cfg, lifted);
    trace = simulate_1f1b(dfw, dbw, opt.samples);
    analytic = trace.steady_time_per_sample;
  } else if (opt.schedule == "gpipe") {
    auto [dfw, dbw] = decompose_training(prep.graph, cfg, lifted);
    trace = simulate_gpipe(dfw, dbw, opt.microbatches);
    analytic = trace.steady_time_per_sample;
  } else {
    throw ParseError("--schedule", "expected pipeline | 1f1b | gpipe | latency");
  }
  std::cout << "makespan: " << trace.makespan << "\n";
  std::cout << "avg time per sample: " << trace.avg_time_per_sample << " ("
            << trace.avg_time_per_sample.to_double() << ")\n";
  std::cout << "steady-state time per sample: " << analytic << "\n";
  if (!result_split.objective_value.is_zero()) {
    double dev = trace.avg_time_per_sample.to_double() /
                     result_split.objective_value.to_double() -
                 1.0;
    std::cout << "deviation from reported objective: " << dev * 100 << "%\n";
  }
  if (!opt.output.empty()) write_file(opt.output, trace_to_csv(trace));
  return 0;
}

int cmd_render(const std::string& input, const std::string& result,
               const std::string& output) {
  ParsedWorkload workload = parse_workload(read_file(input));
  std::string dot;
  if (!result.empty()) {
    auto [split, meta] = parse_result(read_file(result));
    dot = render_dot(workload.graph, &split);
  } else {
    dot = render_dot(workload.graph);
  }
  if (!output.empty()) {
    write_file(output, dot);
  } else {
    std::cout << dot;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partition computation DAGs across accelerators and CPUs"};
  app.require_subcommand(1);

  CommonOpts opt;
  auto* solve = app.add_subcommand("solve", "compute a partition");
  solve->add_option("input", opt.input, "workload JSON file")->required();
  solve->add_option("-o,--output", opt.output, "result file (JSON, or LP for ip-emit)");
  solve->add_option("--solver", opt.solver,
                    "dp | dpl | ip-emit | oracle | greedy | local-search");
  solve->add_option("--objective", opt.objective, "maxload | latency | gpipe");
  solve->add_option("--q", opt.q, "subgraph slots per accelerator");
  solve->add_option("--interleaving", opt.interleaving,
                    "sum | halfDuplexMax | fullDuplexMax");
  solve->add_option("--replication", opt.replication, "off | sum | max");
  solve->add_option("--restarts", opt.restarts, "local search restarts");
  solve->add_option("--seed", opt.seed, "seed for dpl / local-search");
  solve->add_option("--time-limit", opt.time_limit_s, "seconds");
  solve->add_option("--ideal-budget", opt.ideal_budget, "max ideals to enumerate");
  solve->add_option("--oracle-limit", opt.oracle_limit, "max nodes for the oracle");
  solve->add_flag("--non-contiguous", opt.non_contiguous,
                  "drop contiguity (maxload ip-emit / oracle)");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "replay a result through a schedule");
  simulate->add_option("input", sim.input, "workload JSON file")->required();
  simulate->add_option("--result", sim.result, "result JSON file")->required();
  simulate->add_option("--schedule", sim.schedule, "pipeline | 1f1b | gpipe | latency");
  simulate->add_option("--samples", sim.samples, "sample count");
  simulate->add_option("--microbatches", sim.microbatches, "microbatches per batch");
  simulate->add_option("-o,--output", sim.output, "trace CSV file");

  std::string render_input, render_result, render_output;
  auto* render = app.add_subcommand("render", "write a Graphviz view");
  render->add_option("input", render_input, "workload JSON file")->required();
  render->add_option("--result", render_result, "result JSON file");
  render->add_option("-o,--output", render_output, "DOT file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(opt);
    if (simulate->parsed()) return cmd_simulate(sim);
    if (render->parsed()) return cmd_render(render_input, render_result, render_output);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationException& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const NoFeasibleStart& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const IdealBudgetExceeded& e) {
    std::cerr << "error: ideal budget exceeded (limit " << e.limit << ")\n";
    return kExitBudget;
  } catch (const InstanceTooLarge& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBudget;
  } catch (const ColocationViolated& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnmappedNode& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
