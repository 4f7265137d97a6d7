#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nbm {

// One directed edge in a residual graph. Every edge has a paired reverse
// edge; augmentation moves capacity between the two so cap + pair cap is
// conserved per pair.
struct Edge {
  int u = 0;
  int v = 0;
  int cap = 0;
  int weight = 1;
  int pair = -1;
};

struct ResidualGraph {
  int n = 0;
  int src = 0;
  int sink = 0;
  std::vector<Edge> edges;
  std::vector<int> pair_sum;  // per edge, cap(e) + cap(pair(e)) at build time

  // Adds a forward/backward edge pair, returns the forward edge index.
  int add_pair(int u, int v, int cap_fwd, int cap_bwd = 0, int w_fwd = 1, int w_bwd = 1);

  // Recomputes pair_sum from current capacities and checks structural
  // invariants (pair symmetry, capacity range, no self edges).
  void finalize();

  int edge_count() const { return static_cast<int>(edges.size()); }
  // Index of the edge u->v, or -1. Graphs here are small enough for a scan.
  int find_edge(int u, int v) const;
};

// A src..sink walk given as the node sequence plus the edge index taken at
// each hop.
struct Path {
  std::vector<int> nodes;
  std::vector<int> edge_indices;

  int length() const { return static_cast<int>(edge_indices.size()); }
};

// Minimum residual capacity along p. Zero means the path is saturated, which
// is a normal value the simulator branches on; a path edge that does not
// belong to g is a structural error instead.
int bottleneck(const ResidualGraph& g, const Path& p);

// Moves `amount` units of capacity from every on-path edge to its pair.
// Rejects amounts above the bottleneck (would go negative).
void augment(ResidualGraph& g, const Path& p, int amount);

// Total flow pushed so far = capacity accumulated on edges entering src.
int flow_value(const ResidualGraph& g);

// Follows pred from sink back to src. Returns nullopt (an ordinary value,
// not an error) on a cycle, a walk longer than n-1 hops, or a claimed edge
// that is absent.
std::optional<Path> extract_path(const std::vector<int>& pred, int src, int sink,
                                 const ResidualGraph& g);

Path reverse_path(const ResidualGraph& g, const Path& p);

// Text graph format: `n src sink` header then one `u v cap weight pair`
// line per edge; records are separated by a blank line.
void write_graph(std::ostream& os, const ResidualGraph& g);
std::optional<ResidualGraph> read_graph(std::istream& is);
std::vector<ResidualGraph> read_graph_file(const std::string& path);
void write_graph_file(const std::string& path, const std::vector<ResidualGraph>& graphs);

}  // namespace nbm
