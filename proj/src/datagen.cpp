#include "nbm/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nbm {

uint64_t mix_seed(uint64_t master, uint64_t index) {
  // splitmix64 over the combined value
  uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::bipartite: return "bipartite";
    case DatasetKind::walk: return "walk";
    case DatasetKind::bfs_variety: return "bfs_variety";
  }
  return "?";
}

DatasetKind kind_from_name(const std::string& s) {
  if (s == "bipartite") return DatasetKind::bipartite;
  if (s == "walk") return DatasetKind::walk;
  if (s == "bfs_variety") return DatasetKind::bfs_variety;
  throw std::invalid_argument("unknown dataset kind: " + s);
}

ResidualGraph gen_bipartite(int subset_size, double p, Rng& rng, int weight_lo, int weight_hi) {
  if (subset_size < 2) throw std::invalid_argument("gen_bipartite: subset_size >= 2");
  if (p <= 0.0 && p != 0.0) throw std::invalid_argument("gen_bipartite: bad p");
  ResidualGraph g;
  g.n = 2 * subset_size + 2;
  g.src = 0;
  g.sink = g.n - 1;
  const int l0 = 1, r0 = 1 + subset_size;
  for (int i = 0; i < subset_size; ++i) g.add_pair(g.src, l0 + i, 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int i = 0; i < subset_size; ++i)
    for (int j = 0; j < subset_size; ++j)
      if (coin(rng) < p) g.add_pair(l0 + i, r0 + j, 1);
  for (int j = 0; j < subset_size; ++j) g.add_pair(r0 + j, g.sink, 1);
  assign_random_weights(g, rng, weight_lo, weight_hi);
  g.finalize();
  return g;
}

void assign_random_weights(ResidualGraph& g, Rng& rng, int lo, int hi) {
  std::uniform_int_distribution<int> w(lo, hi);
  for (Edge& e : g.edges) e.weight = w(rng);
}

std::pair<ResidualGraph, Path> gen_random_walk(int length, Rng& rng, int cap_lo, int cap_hi,
                                               int weight_lo, int weight_hi) {
  if (length < 1) throw std::invalid_argument("gen_random_walk: length >= 1");
  ResidualGraph g;
  // graphs need at least 3 nodes, so a length-1 walk carries one isolated id
  g.n = std::max(length + 1, 3);
  g.src = 0;
  g.sink = length;
  std::uniform_int_distribution<int> cap(cap_lo, cap_hi);
  Path p;
  p.nodes.push_back(0);
  for (int i = 0; i < length; ++i) {
    const int e = g.add_pair(i, i + 1, cap(rng));
    p.edge_indices.push_back(e);
    p.nodes.push_back(i + 1);
  }
  assign_random_weights(g, rng, weight_lo, weight_hi);
  g.finalize();
  return {std::move(g), std::move(p)};
}

ResidualGraph gen_bfs_variety(int subset_size, double p, double greedy_fraction, Rng& rng,
                              int weight_lo, int weight_hi) {
  if (greedy_fraction < 0.0 || greedy_fraction > 0.4)
    throw std::invalid_argument("gen_bfs_variety: greedy_fraction in [0, 0.4]");
  ResidualGraph g = gen_bipartite(subset_size, p, rng, weight_lo, weight_hi);
  const int max_pairs = static_cast<int>(greedy_fraction * subset_size);
  if (max_pairs == 0) return g;
  std::uniform_int_distribution<int> npairs(0, max_pairs);
  int want = npairs(rng);
  const int l0 = 1, r0 = 1 + subset_size;
  std::vector<int> left(subset_size);
  for (int i = 0; i < subset_size; ++i) left[i] = l0 + i;
  std::shuffle(left.begin(), left.end(), rng);
  std::vector<char> r_used(g.n, 0);
  for (int u : left) {
    if (want == 0) break;
    // greedy: first free partner in edge order
    for (const Edge& e : g.edges) {
      if (e.u != u || e.cap < 1 || e.v < r0 || e.v >= r0 + subset_size || r_used[e.v]) continue;
      Path path;
      path.nodes = {g.src, u, e.v, g.sink};
      path.edge_indices = {g.find_edge(g.src, u), g.find_edge(u, e.v), g.find_edge(e.v, g.sink)};
      augment(g, path, 1);
      r_used[e.v] = 1;
      --want;
      break;
    }
  }
  return g;
}

const ManifestEntry* Manifest::find(const std::string& role) const {
  for (const auto& e : entries)
    if (e.role == role) return &e;
  return nullptr;
}

ResidualGraph generate_one(const DatasetSpec& spec, uint64_t item_seed, Path* walk_path) {
  Rng rng(item_seed);
  switch (spec.kind) {
    case DatasetKind::bipartite:
      return gen_bipartite(spec.subset_size, spec.edge_prob, rng, spec.weight_lo, spec.weight_hi);
    case DatasetKind::walk: {
      auto [g, p] = gen_random_walk(spec.walk_length, rng, spec.cap_lo, spec.cap_hi,
                                    spec.weight_lo, spec.weight_hi);
      if (walk_path) *walk_path = p;
      return g;
    }
    case DatasetKind::bfs_variety:
      return gen_bfs_variety(spec.subset_size, spec.edge_prob, spec.greedy_fraction, rng,
                             spec.weight_lo, spec.weight_hi);
  }
  throw std::logic_error("unreachable");
}

Path walk_path_of(const ResidualGraph& g) {
  Path p;
  p.nodes.push_back(g.src);
  for (int e = 0; e < g.edge_count(); e += 2) {
    p.edge_indices.push_back(e);
    p.nodes.push_back(g.edges[e].v);
  }
  if (p.nodes.front() != g.src || p.nodes.back() != g.sink)
    throw std::invalid_argument("walk_path_of: not a walk record");
  return p;
}

Manifest build_datasets(const std::vector<DatasetSpec>& specs, const std::string& out_dir,
                        uint64_t master_seed) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Manifest m;
  m.master_seed = master_seed;
  if (!specs.empty()) {
    m.weight_lo = specs[0].weight_lo;
    m.weight_hi = specs[0].weight_hi;
  }
  for (const auto& spec : specs) {
    if (spec.count < 1) throw std::invalid_argument("build_datasets: count >= 1");
    std::vector<ResidualGraph> graphs;
    graphs.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i)
      graphs.push_back(generate_one(spec, mix_seed(spec.seed, i)));
    const std::string path = (fs::path(out_dir) / (spec.role + ".graphs")).string();
    write_graph_file(path, graphs);
    m.entries.push_back({spec.role, spec.kind, spec.count, path, spec.seed});
  }
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), m);
  return m;
}

std::vector<DatasetSpec> default_recipe(uint64_t master_seed) {
  std::vector<DatasetSpec> specs;
  uint64_t idx = 0;
  auto next_seed = [&] { return mix_seed(master_seed, idx++); };
  auto bip = [&](const std::string& role, int count, int subset) {
    DatasetSpec s;
    s.role = role;
    s.kind = DatasetKind::bipartite;
    s.count = count;
    s.subset_size = subset;
    s.edge_prob = 0.25;
    s.seed = next_seed();
    return s;
  };
  specs.push_back(bip("train", 300, 8));
  specs.push_back(bip("val", 50, 8));
  specs.push_back(bip("test_1x", 50, 8));
  specs.push_back(bip("test_2x", 50, 16));
  specs.push_back(bip("test_4x", 50, 32));
  specs.push_back(bip("test_8x", 50, 64));
  {
    DatasetSpec s;
    s.role = "variety";
    s.kind = DatasetKind::bfs_variety;
    s.count = 200;
    s.subset_size = 8;
    s.edge_prob = 0.25;
    s.greedy_fraction = 0.4;
    s.seed = next_seed();
    specs.push_back(s);
  }
  auto walk = [&](const std::string& role, int count) {
    DatasetSpec s;
    s.role = role;
    s.kind = DatasetKind::walk;
    s.count = count;
    s.walk_length = 5;
    s.seed = next_seed();
    return s;
  };
  specs.push_back(walk("walk_train", 300));
  specs.push_back(walk("walk_val", 50));
  specs.push_back(walk("walk_test", 200));
  return specs;
}

std::vector<DatasetSpec> sweep_p_recipe(uint64_t master_seed) {
  std::vector<DatasetSpec> specs;
  uint64_t idx = 100;
  const std::pair<std::string, double> probs[] = {{"p20", 0.2}, {"p50", 0.5}, {"p75", 0.75}};
  const std::pair<std::string, int> scales[] = {{"1x", 8}, {"2x", 16}};
  for (const auto& [sname, subset] : scales)
    for (const auto& [pname, p] : probs) {
      DatasetSpec s;
      s.role = "test_" + pname + "_" + sname;
      s.kind = DatasetKind::bipartite;
      s.count = 50;
      s.subset_size = subset;
      s.edge_prob = p;
      s.seed = mix_seed(master_seed, idx++);
      specs.push_back(s);
    }
  return specs;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << "# master_seed " << m.master_seed << '\n';
  os << "# weight_range " << m.weight_lo << ' ' << m.weight_hi << '\n';
  for (const auto& e : m.entries)
    os << e.role << ' ' << kind_name(e.kind) << ' ' << e.count << ' ' << e.path << ' ' << e.seed
       << '\n';
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "master_seed") hs >> m.master_seed;
      else if (key == "weight_range") hs >> m.weight_lo >> m.weight_hi;
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    std::string kind;
    if (!(ls >> e.role >> kind >> e.count >> e.path >> e.seed))
      throw std::runtime_error("manifest: malformed line: " + line);
    e.kind = kind_from_name(kind);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace nbm
