#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nbm/flowgraph.hpp"

namespace nbm {

// Per-round algorithm state used as teacher-forcing supervision. step[0] is
// the initial state; steps 1..T are the recorded rounds (T <= n-1). The
// terminated bit marks the last round that changed anything; padding repeats
// the terminal state with terminated = 1 so the termination network has a
// target at every rollout step.
struct TraceStep {
  std::vector<int> dist;   // kInf for unreached
  std::vector<int> pred;   // pred[src] = src; self-predecessor allowed
  std::vector<int> reach;  // 0/1
  int terminated = 0;
};

struct ExecutionTrace {
  std::vector<TraceStep> steps;

  int length() const { return static_cast<int>(steps.size()) - 1; }  // rounds after init
  const TraceStep& at(int t) const { return steps[t]; }
  const TraceStep& final() const { return steps.back(); }
  void pad_to(int rounds);
};

// Synchronous Bellman-Ford restricted to edges with cap >= 1. Records
// (dist, pred) after each parallel relaxation round until a round changes
// nothing; ties keep the earlier predecessor so traces are deterministic.
ExecutionTrace bellman_ford_trace(const ResidualGraph& g);

// Reachability expansion over positive-capacity edges, one frontier step per
// round until fixpoint.
ExecutionTrace bfs_trace(const ResidualGraph& g);

struct FordFulkersonStep {
  Path path;
  int bottleneck = 0;
};

struct FordFulkersonResult {
  int flow = 0;
  std::vector<FordFulkersonStep> steps;
  ResidualGraph residual;  // the saturated graph after the run
};

// Reference run: repeatedly augments along the minimum-weight path from
// bellman_ford_trace until the sink is unreachable. Leaves the input graph
// untouched.
FordFulkersonResult ford_fulkerson_reference(const ResidualGraph& g);

// Maximum matching size on the bipartite instance encoded by g (unit
// capacities, datagen's src/sink construction), via augmenting DFS on the
// L-R adjacency only. Shares no code with ford_fulkerson_reference by
// design: it is the independent cross-check. Rejects non-bipartite input.
int max_matching_oracle(const ResidualGraph& g);

// Trace file format: `t node dist pred reach terminated` per node per step;
// finite distances above 254 saturate to 254 and infinity encodes as 255.
// Records are separated by a blank line.
void write_trace(std::ostream& os, const ExecutionTrace& trace);
std::optional<ExecutionTrace> read_trace(std::istream& is, int n);

}  // namespace nbm
