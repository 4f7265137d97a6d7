#pragma once

#include <functional>
#include <random>
#include <vector>

#include "nbm/datagen.hpp"
#include "nbm/flowgraph.hpp"

namespace nbm::test {

// The worked 6-node example: two unit paths src->1->3->sink (weights
// 6,2,8) and src->2->4->sink (weights 1,5,7) plus the cross edge 1->4.
// Backward weights are larger than the forward ones (up to 15).
inline ResidualGraph two_path_graph() {
  ResidualGraph g;
  g.n = 6;
  g.src = 0;
  g.sink = 5;
  g.add_pair(0, 1, 1, 0, 6, 12);
  g.add_pair(0, 2, 1, 0, 1, 11);
  g.add_pair(1, 3, 1, 0, 2, 5);
  g.add_pair(2, 4, 1, 0, 5, 15);
  g.add_pair(1, 4, 1, 0, 7, 13);
  g.add_pair(3, 5, 1, 0, 8, 1);
  g.add_pair(4, 5, 1, 0, 7, 1);
  g.finalize();
  return g;
}

// Independent max-flow oracle: the min-cut value by full partition
// enumeration (max-flow = min-cut). Shares nothing with the reference
// Ford-Fulkerson path.
inline int min_cut_value(const ResidualGraph& g) {
  const int inner = g.n - 2;
  std::vector<int> inner_ids;
  for (int v = 0; v < g.n; ++v)
    if (v != g.src && v != g.sink) inner_ids.push_back(v);
  int best = std::numeric_limits<int>::max();
  for (unsigned long mask = 0; mask < (1UL << inner); ++mask) {
    std::vector<char> in_s(g.n, 0);
    in_s[g.src] = 1;
    for (int i = 0; i < inner; ++i)
      if (mask & (1UL << i)) in_s[inner_ids[i]] = 1;
    int cut = 0;
    for (const Edge& e : g.edges)
      if (in_s[e.u] && !in_s[e.v]) cut += e.cap;
    best = std::min(best, cut);
  }
  return best;
}

// Independent matching oracle: enumerate subsets of the L-R edge pairs and
// keep the largest endpoint-disjoint one.
inline int brute_force_matching(const ResidualGraph& g) {
  std::vector<std::pair<int, int>> middle;
  for (int i = 0; i < g.edge_count(); ++i) {
    const Edge& e = g.edges[i];
    if (i > e.pair) continue;
    if (e.u == g.src || e.v == g.src || e.u == g.sink || e.v == g.sink) continue;
    middle.emplace_back(e.u, e.v);
  }
  const int m = static_cast<int>(middle.size());
  int best = 0;
  for (unsigned long mask = 0; mask < (1UL << m); ++mask) {
    std::vector<char> used(g.n, 0);
    int size = 0;
    bool ok = true;
    for (int i = 0; ok && i < m; ++i) {
      if (!(mask & (1UL << i))) continue;
      auto [u, v] = middle[i];
      if (used[u] || used[v]) ok = false;
      else {
        used[u] = used[v] = 1;
        ++size;
      }
    }
    if (ok) best = std::max(best, size);
  }
  return best;
}

inline Path path_through(const ResidualGraph& g, const std::vector<int>& nodes) {
  Path p;
  p.nodes = nodes;
  for (size_t i = 0; i + 1 < nodes.size(); ++i) {
    const int e = g.find_edge(nodes[i], nodes[i + 1]);
    if (e < 0) throw std::runtime_error("path_through: no such edge");
    p.edge_indices.push_back(e);
  }
  return p;
}

// Central finite difference of a scalar function along one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x0,
                                 double eps = 1e-5) {
  return (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps);
}

}  // namespace nbm::test
