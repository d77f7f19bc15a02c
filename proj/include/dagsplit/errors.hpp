#pragma once

#include <stdexcept>
#include <string>

namespace dagsplit {

struct InfeasibleError : std::runtime_error {
  InfeasibleError() : std::runtime_error("no feasible assignment exists") {}
};

struct DeadlineExceeded : std::runtime_error {
  DeadlineExceeded() : std::runtime_error("time limit reached") {}
};

struct InstanceTooLarge : std::runtime_error {
  explicit InstanceTooLarge(const std::string& what)
      : std::runtime_error("instance too large for exhaustive solve: " + what) {}
};

struct MissingBandwidth : std::runtime_error {
  MissingBandwidth()
      : std::runtime_error("replication requires a bandwidth value") {}
};

struct ColocationViolated : std::runtime_error {
  explicit ColocationViolated(const std::string& what)
      : std::runtime_error("colocation violated: " + what) {}
};

struct UnmappedNode : std::runtime_error {
  explicit UnmappedNode(int id)
      : std::runtime_error("no placement maps back to node " +
                           std::to_string(id)),
        node_id(id) {}
  int node_id;
};

struct NoFeasibleStart : std::runtime_error {
  NoFeasibleStart()
      : std::runtime_error(
            "could not sample a memory-feasible starting assignment") {}
};

}  // namespace dagsplit
