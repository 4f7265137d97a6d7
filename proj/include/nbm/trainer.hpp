#pragma once

#include <string>
#include <vector>

#include "nbm/datagen.hpp"
#include "nbm/gnncore.hpp"

namespace nbm {

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 32;
  int patience = 10;  // epochs without val improvement before stopping
  int max_epochs = 100;
  uint64_t seed = 1;
  Processor processor = Processor::mpnn_max;
  // per-task loss weights
  double w_pred = 1.0;
  double w_dist = 1.0;
  double w_term = 1.0;
  double w_reach = 1.0;
  double w_bottleneck = 1.0;
  double w_capacity = 1.0;
  bool use_variety = false;     // include the bfs-variety set (pna default)
  int long_path_oversample = 1;  // extra copies of states whose augmenting path zigzags
  bool redraw_weights = true;   // fresh edge weights per epoch
  int sim_eval_every = 1;       // epochs between validation max-flow simulations; 0 = off
  int sim_eval_runs = 1;
  int threads = 2;
};

struct Checkpoint {
  ModelParameters params;
  TrainConfig config;
  int epoch = 0;
  double val_last_step_pred_acc = 0.0;
};

struct HistoryRow {
  int epoch = 0;
  std::string task, split, metric;
  double value = 0.0;
};

struct TrainData {
  std::vector<ResidualGraph> train_bip, val_bip, variety;
  std::vector<ResidualGraph> walk_train, walk_val;
};

TrainData load_train_data(const Manifest& manifest);

// One residual state along a Ford-Fulkerson trajectory together with its
// supervision traces; training iterates over all intermediate states so the
// executor sees the residual graphs it must handle during simulation.
struct BipSample {
  ResidualGraph state;
  ExecutionTrace bf, bfs;
  std::optional<Path> bf_path;  // the augmenting path taken from this state
};

std::vector<BipSample> ford_fulkerson_samples(const ResidualGraph& g, uint64_t weight_seed,
                                              bool redraw_weights);

// A walk contributes two supervision states: its original capacities
// (bottleneck = the minima, capacity targets = cap - bottleneck) and the
// augmented capacities whose zero edges teach the head to flag saturated
// paths.
struct WalkSample {
  ResidualGraph graph;
  std::vector<int> path_edges;
  ExecutionTrace bf;
  Mat bottleneck_target;  // path-length x 1 distribution (uniform over minima)
  int amount = 0;         // bottleneck handed to the augmentation step
  std::vector<std::pair<int, int>> capacity_targets;  // (edge index, new forward cap)
};

std::vector<WalkSample> walk_samples(const ResidualGraph& g, uint64_t weight_seed,
                                     bool redraw_weights);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Checkpoint best;
  std::vector<HistoryRow> history;
};

// Teacher-forced multi-task training of all subroutines simultaneously with
// Adam and early stopping on last-step predecessor validation accuracy.
// Throws TrainingError with the offending batch on non-finite loss.
TrainResult train(const TrainConfig& config, const TrainData& data);

struct SubroutineMetrics {
  double pred_step_acc = 0.0;
  double pred_last_acc = 0.0;
  double term_acc = 0.0;
  double reach_acc = 0.0;
  double bottleneck_acc = 0.0;       // walks: argmax lands on a minimum-capacity edge
  double bottleneck_tnr = 0.0;       // bipartite: zero-capacity edge detected (cap 0 = negative)
  double augment_acc = 0.0;          // bipartite paths, per-edge exact match
  double augment_acc_walk = 0.0;
  int tnr_negative_count = 0;
};

struct SubroutineEvalData {
  // (label, graphs) bipartite sets, e.g. one per scale, plus evaluation walks
  std::vector<std::pair<std::string, std::vector<ResidualGraph>>> bip_sets;
  std::vector<ResidualGraph> walks;
};

// params == nullptr runs the classical short-circuit: ground truth is fed
// through the same counters, so every accuracy must come out 1.0.
SubroutineMetrics evaluate_subroutines(const ModelParameters* params,
                                       const SubroutineEvalData& data, uint64_t seed,
                                       int threads);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history_csv(const std::string& path);

}  // namespace nbm
