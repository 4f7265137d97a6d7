#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nbm/bitcodec.hpp"
#include "nbm/classical.hpp"
#include "nbm/flowgraph.hpp"
#include "nbm/tape.hpp"

namespace nbm {

constexpr int kLatentDim = 32;                  // K
constexpr int kNodeFeatDim = kEmbedDim + 3;     // embedded distance, reach, is-src, is-sink
constexpr int kEdgeFeatDim = 2 * kEmbedDim;     // embedded capacity + weight
constexpr int kBfOutputDim = kNumBits + 1;  // distance bits + reachability logit
constexpr int kAttnHeads = 4;
constexpr int kAttnFeedForwardDim = 2 * kLatentDim;

enum class Processor { mpnn_max, pna_no_std };
enum class Algo { bellman_ford, bfs };
enum class RolloutMode { teacher_forced, free_running };

std::string processor_name(Processor p);
Processor processor_from_name(const std::string& s);

// All learned weights, registered in one store so tapes, Adam and checkpoints
// address them by slot.
struct ModelParameters {
  ParamStore store;
  Processor processor = Processor::mpnn_max;

  int cap_table = -1, weight_table = -1;
  int enc_bf_w = -1, enc_bf_b = -1, enc_bfs_w = -1, enc_bfs_b = -1;
  int msg_w1 = -1, msg_b1 = -1, msg_w2 = -1, msg_b2 = -1;
  int upd_w1 = -1, upd_b1 = -1, upd_w2 = -1, upd_b2 = -1;
  int empty_agg = -1;
  int dec_bf_w = -1, dec_bf_b = -1, dec_bfs_w = -1, dec_bfs_b = -1;
  int term_w = -1, term_b = -1;
  int pred_w1 = -1, pred_b1 = -1, pred_w2 = -1, pred_b2 = -1;
  int attn_wq = -1, attn_bq = -1, attn_wk = -1, attn_bk = -1;
  int attn_wv = -1, attn_bv = -1, attn_wo = -1, attn_bo = -1;
  int attn_ln1_g = -1, attn_ln1_b = -1, attn_ln2_g = -1, attn_ln2_b = -1;
  int attn_ff_w1 = -1, attn_ff_b1 = -1, attn_ff_w2 = -1, attn_ff_b2 = -1;
  int bott_out_w = -1, bott_out_b = -1;
  int cap_score_w1 = -1, cap_score_b1 = -1, cap_score_w2 = -1, cap_score_b2 = -1;

  static ModelParameters init(Processor kind, uint64_t seed);
};

// Message adjacency for one graph: every directed edge plus one self-loop
// per node (capacity infinity, weight 0) so each node can retain its state.
// Self-loops exist for message passing only and are appended after the graph
// edges, so bank row i == graph edge i.
struct GraphWiring {
  int n = 0;
  int m_graph = 0;  // directed graph edges (bank rows)
  std::vector<int> msg_src, msg_dst;
  Mat cap_bits, weight_bits;        // (m_graph + n) x 8
  std::vector<double> in_degree;    // per node, self-loop included
  int src = 0, sink = 0;

  int candidate_row(int pred_node, int node, const ResidualGraph& g) const;
};

GraphWiring wire_graph(const ResidualGraph& g);

// Algorithm state fed to the network at one step.
struct NodeState {
  std::vector<int> dist;   // kInf allowed; saturates to 254 when encoded
  std::vector<int> reach;  // 0/1
};

NodeState state_from_trace(const TraceStep& s);
NodeState initial_state(const ResidualGraph& g);

// Supervision targets for the Bellman-Ford decoder: per node, the encoded
// distance bits (saturating at 254) plus the reachability bit.
Mat bf_state_targets(const TraceStep& s);

// x_i = [embed(dist) | reach | is-src | is-sink]
Var encode_node_features(Tape& t, const ModelParameters& p, const GraphWiring& w,
                         const NodeState& state);
Var encode_edge_features(Tape& t, const ModelParameters& p, const GraphWiring& w);

Var encode(Tape& t, const ModelParameters& p, Algo algo, Var x, Var h_prev);
// One processor step; returns H and stores the per-edge messages (bank rows
// first) in *msgs_out.
Var process(Tape& t, const ModelParameters& p, const GraphWiring& w, Var z, Var e,
            Var* msgs_out);
Var decode(Tape& t, const ModelParameters& p, Algo algo, Var z, Var h);
// Mean-pool latents, affine map; the sigmoid of this logit is tau. Rollouts
// proceed while tau > 0.5 and t < n-1.
Var termination_logit(Tape& t, const ModelParameters& p, Var h);

struct RolloutStep {
  Var z, h, y;
  Var msgs;       // graph-edge messages (the bank)
  Var tau_logit;  // bellman-ford only
  NodeState input;
};

struct Rollout {
  std::vector<RolloutStep> steps;
  Var edge_feats;
  NodeState final_state;  // free-running: thresholded predictions after the last step
};

// Teacher-forced mode feeds trace state t-1 into step t and rolls
// `forced_steps` rounds (the trace must be padded at least that far).
// Free-running feeds thresholded predictions back as inputs and always stops
// within n-1 steps. Bellman-Ford stops once tau <= 0.5 and the predicted
// state has reached a fixpoint; mean pooling alone cannot tell "one path
// left" from "done" on graphs much larger than the training scale, while a
// round that changes nothing is the algorithm's own stopping condition. BFS
// stops at the predicted reach fixpoint.
Rollout rollout(Tape& t, const ModelParameters& p, const GraphWiring& w, Algo algo,
                RolloutMode mode, const ExecutionTrace* trace, int forced_steps = -1);

}  // namespace nbm
