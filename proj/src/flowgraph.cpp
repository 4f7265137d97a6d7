#include "nbm/flowgraph.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nbm {

int ResidualGraph::add_pair(int u, int v, int cap_fwd, int cap_bwd, int w_fwd, int w_bwd) {
  const int idx = edge_count();
  edges.push_back({u, v, cap_fwd, w_fwd, idx + 1});
  edges.push_back({v, u, cap_bwd, w_bwd, idx});
  return idx;
}

void ResidualGraph::finalize() {
  if (n < 3) throw std::invalid_argument("graph: need at least 3 nodes");
  if (src == sink) throw std::invalid_argument("graph: src == sink");
  pair_sum.assign(edges.size(), 0);
  for (int i = 0; i < edge_count(); ++i) {
    const Edge& e = edges[i];
    if (e.u == e.v) throw std::invalid_argument("graph: self edge");
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw std::invalid_argument("graph: endpoint out of range");
    if (e.cap < 0 || e.cap > 255) throw std::invalid_argument("graph: capacity out of range");
    if (e.weight < 1) throw std::invalid_argument("graph: weight must be >= 1");
    if (e.pair < 0 || e.pair >= edge_count() || edges[e.pair].pair != i ||
        edges[e.pair].u != e.v || edges[e.pair].v != e.u)
      throw std::invalid_argument("graph: broken pair structure");
    pair_sum[i] = e.cap + edges[e.pair].cap;
  }
}

int ResidualGraph::find_edge(int u, int v) const {
  for (int i = 0; i < edge_count(); ++i)
    if (edges[i].u == u && edges[i].v == v) return i;
  return -1;
}

namespace {

void check_path_in_graph(const ResidualGraph& g, const Path& p) {
  if (p.nodes.size() != p.edge_indices.size() + 1)
    throw std::invalid_argument("path: node/edge count mismatch");
  for (int i = 0; i < p.length(); ++i) {
    const int e = p.edge_indices[i];
    if (e < 0 || e >= g.edge_count()) throw std::invalid_argument("path: edge index out of range");
    if (g.edges[e].u != p.nodes[i] || g.edges[e].v != p.nodes[i + 1])
      throw std::invalid_argument("path: edge does not join listed nodes");
  }
}

}  // namespace

int bottleneck(const ResidualGraph& g, const Path& p) {
  check_path_in_graph(g, p);
  int b = p.length() == 0 ? 0 : g.edges[p.edge_indices[0]].cap;
  for (int e : p.edge_indices) b = std::min(b, g.edges[e].cap);
  return b;
}

void augment(ResidualGraph& g, const Path& p, int amount) {
  if (amount < 0) throw std::invalid_argument("augment: negative amount");
  if (amount > bottleneck(g, p)) throw std::invalid_argument("augment: amount above bottleneck");
  for (int e : p.edge_indices) {
    g.edges[e].cap -= amount;
    g.edges[g.edges[e].pair].cap += amount;
  }
}

int flow_value(const ResidualGraph& g) {
  int total = 0;
  for (const Edge& e : g.edges)
    if (e.v == g.src) total += e.cap;
  return total;
}

std::optional<Path> extract_path(const std::vector<int>& pred, int src, int sink,
                                 const ResidualGraph& g) {
  std::vector<int> rev_nodes;
  std::vector<int> rev_edges;
  std::vector<char> seen(g.n, 0);
  int v = sink;
  seen[v] = 1;
  rev_nodes.push_back(v);
  while (v != src) {
    if (static_cast<int>(rev_edges.size()) >= g.n - 1) return std::nullopt;
    const int u = pred[v];
    if (u < 0 || u >= g.n || seen[u]) return std::nullopt;  // cycle or bad id
    const int e = g.find_edge(u, v);
    if (e < 0) return std::nullopt;
    rev_edges.push_back(e);
    rev_nodes.push_back(u);
    seen[u] = 1;
    v = u;
  }
  Path p;
  p.nodes.assign(rev_nodes.rbegin(), rev_nodes.rend());
  p.edge_indices.assign(rev_edges.rbegin(), rev_edges.rend());
  return p;
}

Path reverse_path(const ResidualGraph& g, const Path& p) {
  Path r;
  r.nodes.assign(p.nodes.rbegin(), p.nodes.rend());
  for (auto it = p.edge_indices.rbegin(); it != p.edge_indices.rend(); ++it)
    r.edge_indices.push_back(g.edges[*it].pair);
  return r;
}

void write_graph(std::ostream& os, const ResidualGraph& g) {
  os << g.n << ' ' << g.src << ' ' << g.sink << '\n';
  for (const Edge& e : g.edges)
    os << e.u << ' ' << e.v << ' ' << e.cap << ' ' << e.weight << ' ' << e.pair << '\n';
  os << '\n';
}

std::optional<ResidualGraph> read_graph(std::istream& is) {
  std::string line;
  // skip blank lines between records
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (!is && line.empty()) return std::nullopt;
  ResidualGraph g;
  {
    std::istringstream hs(line);
    if (!(hs >> g.n >> g.src >> g.sink)) return std::nullopt;
  }
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) break;
    std::istringstream es(line);
    Edge e;
    if (!(es >> e.u >> e.v >> e.cap >> e.weight >> e.pair))
      throw std::runtime_error("graph file: malformed edge line");
    g.edges.push_back(e);
  }
  g.finalize();
  return g;
}

std::vector<ResidualGraph> read_graph_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open graph file: " + path);
  std::vector<ResidualGraph> out;
  while (auto g = read_graph(is)) out.push_back(std::move(*g));
  return out;
}

void write_graph_file(const std::string& path, const std::vector<ResidualGraph>& graphs) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write graph file: " + path);
  for (const auto& g : graphs) write_graph(os, g);
}

}  // namespace nbm
