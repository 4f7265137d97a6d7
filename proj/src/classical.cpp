#include "nbm/classical.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "nbm/bitcodec.hpp"

namespace nbm {

void ExecutionTrace::pad_to(int rounds) {
  while (length() < rounds) {
    TraceStep s = steps.back();
    s.terminated = 1;
    steps.push_back(std::move(s));
  }
}

ExecutionTrace bellman_ford_trace(const ResidualGraph& g) {
  TraceStep init;
  init.dist.assign(g.n, kInf);
  init.pred.resize(g.n);
  init.reach.assign(g.n, 0);
  for (int i = 0; i < g.n; ++i) init.pred[i] = i;
  init.dist[g.src] = 0;
  init.reach[g.src] = 1;

  ExecutionTrace trace;
  trace.steps.push_back(init);
  for (int round = 1; round <= g.n - 1; ++round) {
    const TraceStep& prev = trace.steps.back();
    TraceStep cur = prev;
    cur.terminated = 0;
    bool changed = false;
    for (const Edge& e : g.edges) {
      if (e.cap < 1 || prev.dist[e.u] == kInf) continue;
      const int cand = prev.dist[e.u] + e.weight;
      // strict improvement only: equal distances keep the earlier predecessor
      if (cand < cur.dist[e.v]) {
        cur.dist[e.v] = cand;
        cur.pred[e.v] = e.u;
        cur.reach[e.v] = 1;
        changed = true;
      }
    }
    if (!changed) break;
    trace.steps.push_back(std::move(cur));
  }
  trace.steps.back().terminated = 1;
  return trace;
}

ExecutionTrace bfs_trace(const ResidualGraph& g) {
  TraceStep init;
  init.dist.assign(g.n, kInf);
  init.pred.resize(g.n);
  init.reach.assign(g.n, 0);
  for (int i = 0; i < g.n; ++i) init.pred[i] = i;
  init.dist[g.src] = 0;
  init.reach[g.src] = 1;

  ExecutionTrace trace;
  trace.steps.push_back(init);
  for (int round = 1; round <= g.n - 1; ++round) {
    const TraceStep& prev = trace.steps.back();
    TraceStep cur = prev;
    cur.terminated = 0;
    bool changed = false;
    for (const Edge& e : g.edges) {
      if (e.cap < 1 || !prev.reach[e.u] || cur.reach[e.v]) continue;
      cur.reach[e.v] = 1;
      cur.dist[e.v] = round;
      cur.pred[e.v] = e.u;
      changed = true;
    }
    if (!changed) break;
    trace.steps.push_back(std::move(cur));
  }
  trace.steps.back().terminated = 1;
  return trace;
}

FordFulkersonResult ford_fulkerson_reference(const ResidualGraph& g) {
  FordFulkersonResult result;
  result.residual = g;
  int pushed = 0;
  while (true) {
    const ExecutionTrace trace = bellman_ford_trace(result.residual);
    if (trace.final().dist[g.sink] == kInf) break;
    auto path = extract_path(trace.final().pred, g.src, g.sink, result.residual);
    if (!path) throw std::logic_error("reference: converged preds must yield a path");
    const int b = bottleneck(result.residual, *path);
    if (b < 1) throw std::logic_error("reference: positive-cap relaxation implies b >= 1");
    augment(result.residual, *path, b);
    result.steps.push_back({std::move(*path), b});
    pushed += b;
  }
  // total flow on the final residual graph; partially augmented inputs carry
  // their existing flow into it
  result.flow = flow_value(result.residual);
  if (result.flow != flow_value(g) + pushed)
    throw std::logic_error("reference: step sum disagrees with flow_value");
  return result;
}

int max_matching_oracle(const ResidualGraph& g) {
  // Recover the L/R partition from the src/sink construction and validate it.
  constexpr int kLeft = 0, kRight = 1;
  std::vector<int> side(g.n, -1);
  std::vector<std::pair<int, int>> middle;  // undirected pairs between the subsets
  for (int i = 0; i < g.edge_count(); ++i) {
    const Edge& e = g.edges[i];
    if (i > e.pair) continue;  // each pair once
    if (e.cap + g.edges[e.pair].cap != 1)
      throw std::invalid_argument("matching oracle: non-unit capacity pair");
    const int a = e.u, b = e.v;
    if (a == g.src || b == g.src) {
      const int other = a == g.src ? b : a;
      if (other == g.sink) throw std::invalid_argument("matching oracle: src-sink edge");
      side[other] = kLeft;
    } else if (a == g.sink || b == g.sink) {
      side[a == g.sink ? b : a] = kRight;
    } else {
      middle.emplace_back(a, b);
    }
  }
  std::vector<std::vector<int>> adj(g.n);  // L -> R candidates
  for (auto [a, b] : middle) {
    if (side[a] == kLeft && side[b] == kRight) adj[a].push_back(b);
    else if (side[a] == kRight && side[b] == kLeft) adj[b].push_back(a);
    else throw std::invalid_argument("matching oracle: edge violates bipartite structure");
  }

  std::vector<int> match_of(g.n, -1);  // for R nodes: matched L partner
  std::vector<char> visited(g.n, 0);
  std::function<bool(int)> try_augment = [&](int u) -> bool {
    for (int v : adj[u]) {
      if (visited[v]) continue;
      visited[v] = 1;
      if (match_of[v] < 0 || try_augment(match_of[v])) {
        match_of[v] = u;
        return true;
      }
    }
    return false;
  };

  int matched = 0;
  for (int u = 0; u < g.n; ++u) {
    if (side[u] != kLeft) continue;
    std::fill(visited.begin(), visited.end(), 0);
    if (try_augment(u)) ++matched;
  }
  return matched;
}

namespace {

int encode_dist(int d) { return d == kInf ? 255 : std::min(d, kMaxFinite); }

}  // namespace

void write_trace(std::ostream& os, const ExecutionTrace& trace) {
  const int n = static_cast<int>(trace.steps[0].dist.size());
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const TraceStep& s = trace.steps[t];
    for (int i = 0; i < n; ++i)
      os << t << ' ' << i << ' ' << encode_dist(s.dist[i]) << ' ' << s.pred[i] << ' '
         << s.reach[i] << ' ' << s.terminated << '\n';
  }
  os << '\n';
}

std::optional<ExecutionTrace> read_trace(std::istream& is, int n) {
  ExecutionTrace trace;
  std::string line;
  bool any = false;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      if (any) break;
      continue;
    }
    any = true;
    std::istringstream ls(line);
    int t, node, dist, pred, reach, terminated;
    if (!(ls >> t >> node >> dist >> pred >> reach >> terminated))
      throw std::runtime_error("trace file: malformed line");
    while (static_cast<int>(trace.steps.size()) <= t) {
      TraceStep s;
      s.dist.assign(n, kInf);
      s.pred.assign(n, 0);
      s.reach.assign(n, 0);
      trace.steps.push_back(std::move(s));
    }
    TraceStep& s = trace.steps[t];
    s.dist[node] = dist == 255 ? kInf : dist;
    s.pred[node] = pred;
    s.reach[node] = reach;
    s.terminated = terminated;
  }
  if (!any) return std::nullopt;
  return trace;
}

}  // namespace nbm
