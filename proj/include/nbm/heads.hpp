#pragma once

#include <vector>

#include "nbm/gnncore.hpp"

namespace nbm {

// Predecessor scores: one logit per incoming candidate (every directed graph
// edge plus the self-loop), softmax per receiving node. Candidate rows are
// exactly the message rows, so w.msg_dst is the segment layout.
Var predecessor_logits(Tape& t, const ModelParameters& p, const GraphWiring& w, Var h,
                       Var edge_feats);

// argmax per node over candidate logits -> pred map (self-loop -> pred = i).
std::vector<int> predecessor_argmax(const Mat& logits, const GraphWiring& w);

// Per-node reachability probability from the BFS decoder output.
double reach_probability(double logit);

// Messages of the on-path edges (path order) through one transformer encoder
// layer and a per-edge scalar map; softmax over the path. Off-path edges are
// masked out deterministically: they are simply absent from the candidate
// set, so their probability is exactly zero.
Var bottleneck_logits(Tape& t, const ModelParameters& p, Var bank,
                      const std::vector<int>& path_edge_rows);

// Full per-edge distribution including the exact zeros, for contract checks.
Mat bottleneck_distribution(const Mat& path_probs, int m_graph,
                            const std::vector<int>& path_edge_rows);

// Candidate logits for the new forward capacity of one path edge, candidates
// {0..c_e}. The subtracted amount (the path bottleneck handed to the
// augmentation step) and the candidate values are encoded with the shared
// capacity table.
Var capacity_logits(Tape& t, const ModelParameters& p, Var bank, int edge_row, int c_e,
                    int amount);

}  // namespace nbm
