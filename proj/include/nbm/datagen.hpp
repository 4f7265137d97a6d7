#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nbm/flowgraph.hpp"

namespace nbm {

using Rng = std::mt19937_64;

// Deterministic per-item seeding so parallel and serial generation agree.
uint64_t mix_seed(uint64_t master, uint64_t index);

enum class DatasetKind { bipartite, walk, bfs_variety };

std::string kind_name(DatasetKind k);
DatasetKind kind_from_name(const std::string& s);

struct DatasetSpec {
  std::string role;  // train / val / test_1x / walk_train / ...
  DatasetKind kind = DatasetKind::bipartite;
  int count = 1;
  int subset_size = 8;
  double edge_prob = 0.25;
  int walk_length = 5;
  int cap_lo = 1, cap_hi = 10;        // walk capacities
  int weight_lo = 1, weight_hi = 10;  // all edge weights
  double greedy_fraction = 0.0;       // bfs_variety only, <= 0.4
  uint64_t seed = 0;
};

// Unit-capacity bipartite flow network: src -> L (all), L -> R (each with
// probability p), R -> sink (all); every forward edge paired with a
// zero-capacity reverse edge; independent random weights on both directions.
ResidualGraph gen_bipartite(int subset_size, double p, Rng& rng,
                            int weight_lo = 1, int weight_hi = 10);

// Re-draws every edge weight (forward and backward) independently and
// uniformly; structure and capacities untouched.
void assign_random_weights(ResidualGraph& g, Rng& rng, int lo = 1, int hi = 10);

// Simple path of `length` fresh nodes with capacities uniform in
// [cap_lo, cap_hi]; the returned path is the known augmenting path whose
// bottleneck/augmentation supervise those two heads.
std::pair<ResidualGraph, Path> gen_random_walk(int length, Rng& rng, int cap_lo = 1,
                                               int cap_hi = 10, int weight_lo = 1,
                                               int weight_hi = 10);

// gen_bipartite output with a random fraction (<= greedy_fraction) of L
// greedily matched via augment, yielding partially saturated residual
// graphs.
ResidualGraph gen_bfs_variety(int subset_size, double p, double greedy_fraction, Rng& rng,
                              int weight_lo = 1, int weight_hi = 10);

struct ManifestEntry {
  std::string role;
  DatasetKind kind = DatasetKind::bipartite;
  int count = 0;
  std::string path;
  uint64_t seed = 0;
};

struct Manifest {
  uint64_t master_seed = 0;
  int weight_lo = 1, weight_hi = 10;
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& role) const;
};

// Materializes every spec to disk (one graph file per spec) and writes the
// manifest; aborts without a manifest on i/o failure.
Manifest build_datasets(const std::vector<DatasetSpec>& specs, const std::string& out_dir,
                        uint64_t master_seed);

// Full protocol: 300 train + 50 val bipartite at subset 8, 50 test
// graphs at each of subsets {8,16,32,64}, 200 bfs-variety train graphs, and
// the random-walk sets.
std::vector<DatasetSpec> default_recipe(uint64_t master_seed);
// Edge-probability sweep: 50 graphs per (scale in {1x,2x}) x (p in
// {1/5, 1/2, 3/4}).
std::vector<DatasetSpec> sweep_p_recipe(uint64_t master_seed);

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

ResidualGraph generate_one(const DatasetSpec& spec, uint64_t item_seed, Path* walk_path = nullptr);

// Reconstructs the supervision path of a walk record (forward edges are laid
// out in path order at even indices).
Path walk_path_of(const ResidualGraph& g);

}  // namespace nbm
