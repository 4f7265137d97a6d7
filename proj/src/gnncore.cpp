#include "nbm/gnncore.hpp"

#include <cmath>
#include <stdexcept>

namespace nbm {

std::string processor_name(Processor p) {
  return p == Processor::mpnn_max ? "mpnn" : "pna_no_std";
}

Processor processor_from_name(const std::string& s) {
  if (s == "mpnn") return Processor::mpnn_max;
  if (s == "pna_no_std") return Processor::pna_no_std;
  throw std::invalid_argument("unknown processor: " + s);
}

ModelParameters ModelParameters::init(Processor kind, uint64_t seed) {
  ModelParameters p;
  p.processor = kind;
  std::mt19937_64 rng(seed);
  auto w = [&](const std::string& name, int r, int c) {
    return p.store.add(name, xavier_uniform(r, c, rng));
  };
  auto b = [&](const std::string& name, int c) { return p.store.add(name, Mat(1, c)); };
  auto ones = [&](const std::string& name, int c) {
    return p.store.add(name, Mat::filled(1, c, 1.0));
  };
  const int K = kLatentDim;

  p.cap_table = w("cap_table", kNumBits, kEmbedDim);
  p.weight_table = w("weight_table", kNumBits, kEmbedDim);

  p.enc_bf_w = w("enc_bf_w", kNodeFeatDim + K, K);
  p.enc_bf_b = b("enc_bf_b", K);
  p.enc_bfs_w = w("enc_bfs_w", kNodeFeatDim + K, K);
  p.enc_bfs_b = b("enc_bfs_b", K);

  p.msg_w1 = w("msg_w1", 2 * K + kEdgeFeatDim, K);
  p.msg_b1 = b("msg_b1", K);
  p.msg_w2 = w("msg_w2", K, K);
  p.msg_b2 = b("msg_b2", K);

  const int agg_dim = kind == Processor::mpnn_max ? K : 9 * K;
  p.upd_w1 = w("upd_w1", K + agg_dim, K);
  p.upd_b1 = b("upd_b1", K);
  p.upd_w2 = w("upd_w2", K, K);
  p.upd_b2 = b("upd_b2", K);
  p.empty_agg = b("empty_agg", K);

  p.dec_bf_w = w("dec_bf_w", 2 * K, kBfOutputDim);
  p.dec_bf_b = b("dec_bf_b", kBfOutputDim);
  p.dec_bfs_w = w("dec_bfs_w", 2 * K, 1);
  p.dec_bfs_b = b("dec_bfs_b", 1);

  p.term_w = w("term_w", K, 1);
  p.term_b = b("term_b", 1);

  p.pred_w1 = w("pred_w1", 2 * K + kEdgeFeatDim, K);
  p.pred_b1 = b("pred_b1", K);
  p.pred_w2 = w("pred_w2", K, 1);
  p.pred_b2 = b("pred_b2", 1);

  p.attn_wq = w("attn_wq", K, K);
  p.attn_bq = b("attn_bq", K);
  p.attn_wk = w("attn_wk", K, K);
  p.attn_bk = b("attn_bk", K);
  p.attn_wv = w("attn_wv", K, K);
  p.attn_bv = b("attn_bv", K);
  p.attn_wo = w("attn_wo", K, K);
  p.attn_bo = b("attn_bo", K);
  p.attn_ln1_g = ones("attn_ln1_g", K);
  p.attn_ln1_b = b("attn_ln1_b", K);
  p.attn_ff_w1 = w("attn_ff_w1", K, kAttnFeedForwardDim);
  p.attn_ff_b1 = b("attn_ff_b1", kAttnFeedForwardDim);
  p.attn_ff_w2 = w("attn_ff_w2", kAttnFeedForwardDim, K);
  p.attn_ff_b2 = b("attn_ff_b2", K);
  p.attn_ln2_g = ones("attn_ln2_g", K);
  p.attn_ln2_b = b("attn_ln2_b", K);
  p.bott_out_w = w("bott_out_w", K, 1);
  p.bott_out_b = b("bott_out_b", 1);

  p.cap_score_w1 = w("cap_score_w1", K + 2 * kEmbedDim, K);
  p.cap_score_b1 = b("cap_score_b1", K);
  p.cap_score_w2 = w("cap_score_w2", K, 1);
  p.cap_score_b2 = b("cap_score_b2", 1);
  return p;
}

int GraphWiring::candidate_row(int pred_node, int node, const ResidualGraph& g) const {
  if (pred_node == node) return m_graph + node;  // self-loop
  const int e = g.find_edge(pred_node, node);
  if (e < 0) throw std::invalid_argument("candidate_row: edge absent");
  return e;
}

GraphWiring wire_graph(const ResidualGraph& g) {
  GraphWiring w;
  w.n = g.n;
  w.m_graph = g.edge_count();
  w.src = g.src;
  w.sink = g.sink;
  const int total = w.m_graph + w.n;
  w.msg_src.reserve(total);
  w.msg_dst.reserve(total);
  w.cap_bits = Mat(total, kNumBits);
  w.weight_bits = Mat(total, kNumBits);
  auto put_bits = [&](Mat& m, int row, int value) {
    const Bits bits = to_bits(value);
    for (int i = 0; i < kNumBits; ++i) m.at(row, i) = bits[i];
  };
  for (int i = 0; i < w.m_graph; ++i) {
    const Edge& e = g.edges[i];
    w.msg_src.push_back(e.u);
    w.msg_dst.push_back(e.v);
    put_bits(w.cap_bits, i, std::min(e.cap, kMaxFinite));
    put_bits(w.weight_bits, i, std::min(e.weight, kMaxFinite));
  }
  for (int v = 0; v < w.n; ++v) {
    w.msg_src.push_back(v);
    w.msg_dst.push_back(v);
    put_bits(w.cap_bits, w.m_graph + v, kInf);
    put_bits(w.weight_bits, w.m_graph + v, 0);
  }
  w.in_degree.assign(w.n, 0.0);
  for (int d : w.msg_dst) w.in_degree[d] += 1.0;
  return w;
}

NodeState state_from_trace(const TraceStep& s) { return {s.dist, s.reach}; }

Mat bf_state_targets(const TraceStep& s) {
  const int n = static_cast<int>(s.dist.size());
  Mat m(n, kBfOutputDim);
  for (int v = 0; v < n; ++v) {
    const Bits bits = to_bits(s.dist[v] == kInf ? kInf : std::min(s.dist[v], kMaxFinite));
    for (int i = 0; i < kNumBits; ++i) m.at(v, i) = bits[i];
    m.at(v, kNumBits) = s.reach[v];
  }
  return m;
}

NodeState initial_state(const ResidualGraph& g) {
  NodeState s;
  s.dist.assign(g.n, kInf);
  s.reach.assign(g.n, 0);
  s.dist[g.src] = 0;
  s.reach[g.src] = 1;
  return s;
}

namespace {

Mat dist_bits_mat(const std::vector<int>& dist) {
  Mat m(static_cast<int>(dist.size()), kNumBits);
  for (size_t r = 0; r < dist.size(); ++r) {
    const Bits bits = to_bits(dist[r] == kInf ? kInf : std::min(dist[r], kMaxFinite));
    for (int i = 0; i < kNumBits; ++i) m.at(static_cast<int>(r), i) = bits[i];
  }
  return m;
}

Var mlp2(Tape& t, Var in, int w1, int b1, int w2, int b2) {
  Var h = t.relu(t.add_row_broadcast(t.matmul(in, t.param(w1)), t.param(b1)));
  return t.add_row_broadcast(t.matmul(h, t.param(w2)), t.param(b2));
}

}  // namespace

Var encode_node_features(Tape& t, const ModelParameters& p, const GraphWiring& w,
                         const NodeState& state) {
  Var emb = t.matmul(t.input(dist_bits_mat(state.dist)), t.param(p.cap_table));
  Mat flags(w.n, 3);
  for (int i = 0; i < w.n; ++i) {
    flags.at(i, 0) = state.reach[i];
    flags.at(i, 1) = i == w.src ? 1.0 : 0.0;
    flags.at(i, 2) = i == w.sink ? 1.0 : 0.0;
  }
  return t.concat_cols({emb, t.input(std::move(flags))});
}

Var encode_edge_features(Tape& t, const ModelParameters& p, const GraphWiring& w) {
  Var cap = t.matmul(t.input(w.cap_bits), t.param(p.cap_table));
  Var wt = t.matmul(t.input(w.weight_bits), t.param(p.weight_table));
  return t.concat_cols({cap, wt});
}

Var encode(Tape& t, const ModelParameters& p, Algo algo, Var x, Var h_prev) {
  const int wslot = algo == Algo::bellman_ford ? p.enc_bf_w : p.enc_bfs_w;
  const int bslot = algo == Algo::bellman_ford ? p.enc_bf_b : p.enc_bfs_b;
  return t.add_row_broadcast(t.matmul(t.concat_cols({x, h_prev}), t.param(wslot)),
                             t.param(bslot));
}

Var process(Tape& t, const ModelParameters& p, const GraphWiring& w, Var z, Var e,
            Var* msgs_out) {
  Var msg_in = t.concat_cols({t.gather_rows(z, w.msg_src), t.gather_rows(z, w.msg_dst), e});
  Var msgs = mlp2(t, msg_in, p.msg_w1, p.msg_b1, p.msg_w2, p.msg_b2);
  if (msgs_out) {
    std::vector<int> bank_rows(w.m_graph);
    for (int i = 0; i < w.m_graph; ++i) bank_rows[i] = i;
    *msgs_out = t.gather_rows(msgs, bank_rows);
  }
  Var agg;
  if (p.processor == Processor::mpnn_max) {
    agg = t.segment_max(msgs, w.msg_dst, w.n, t.param(p.empty_agg));
  } else {
    Var mean = t.segment_mean(msgs, w.msg_dst, w.n);
    Var mx = t.segment_max(msgs, w.msg_dst, w.n, t.param(p.empty_agg));
    Var mn = t.segment_min(msgs, w.msg_dst, w.n, t.param(p.empty_agg));
    // degree scalers: identity, amplification, attenuation (log-based, +1)
    double delta = 0.0;
    for (double d : w.in_degree) delta += std::log(d + 1.0);
    delta /= w.n;
    std::vector<double> amp(w.n), att(w.n);
    for (int i = 0; i < w.n; ++i) {
      amp[i] = std::log(w.in_degree[i] + 1.0) / delta;
      att[i] = delta / std::log(w.in_degree[i] + 1.0);
    }
    std::vector<Var> parts;
    for (Var a : {mean, mx, mn}) {
      parts.push_back(a);
      parts.push_back(t.mul_rows(a, amp));
      parts.push_back(t.mul_rows(a, att));
    }
    agg = t.concat_cols(parts);
  }
  return mlp2(t, t.concat_cols({z, agg}), p.upd_w1, p.upd_b1, p.upd_w2, p.upd_b2);
}

Var decode(Tape& t, const ModelParameters& p, Algo algo, Var z, Var h) {
  const int wslot = algo == Algo::bellman_ford ? p.dec_bf_w : p.dec_bfs_w;
  const int bslot = algo == Algo::bellman_ford ? p.dec_bf_b : p.dec_bfs_b;
  return t.add_row_broadcast(t.matmul(t.concat_cols({z, h}), t.param(wslot)), t.param(bslot));
}

Var termination_logit(Tape& t, const ModelParameters& p, Var h) {
  return t.add_row_broadcast(t.matmul(t.mean_rows(h), t.param(p.term_w)), t.param(p.term_b));
}

Rollout rollout(Tape& t, const ModelParameters& p, const GraphWiring& w, Algo algo,
                RolloutMode mode, const ExecutionTrace* trace, int forced_steps) {
  const bool forced = mode == RolloutMode::teacher_forced;
  if (forced && !trace) throw std::invalid_argument("rollout: teacher forcing needs a trace");
  int max_steps = w.n - 1;
  if (forced) {
    if (forced_steps < 0) forced_steps = trace->length();
    if (forced_steps > trace->length())
      throw std::invalid_argument("rollout: trace shorter than forced_steps");
    max_steps = std::max(1, forced_steps);
  }

  Rollout out;
  out.edge_feats = encode_edge_features(t, p, w);
  Var h_prev = t.input(Mat(w.n, kLatentDim));
  NodeState state;
  if (forced) {
    state = state_from_trace(trace->at(0));
  } else {
    state.dist.assign(w.n, kInf);
    state.reach.assign(w.n, 0);
    state.dist[w.src] = 0;
    state.reach[w.src] = 1;
  }
  std::vector<int> first_reach_step(w.n, -1);  // free-running BFS distance bookkeeping
  if (!forced) {
    first_reach_step[w.src] = 0;
  }

  for (int step = 1; step <= max_steps; ++step) {
    RolloutStep s;
    s.input = state;
    Var x = encode_node_features(t, p, w, state);
    s.z = encode(t, p, algo, x, h_prev);
    s.h = process(t, p, w, s.z, out.edge_feats, &s.msgs);
    s.y = decode(t, p, algo, s.z, s.h);
    if (algo == Algo::bellman_ford) s.tau_logit = termination_logit(t, p, s.h);
    h_prev = s.h;

    NodeState next;
    bool stop = false;
    if (forced) {
      next = state_from_trace(trace->at(step));
    } else {
      const Mat& yv = t.value(s.y);
      if (algo == Algo::bellman_ford) {
        next.dist.resize(w.n);
        next.reach.resize(w.n);
        bool changed = false;
        for (int i = 0; i < w.n; ++i) {
          // the reachability logit decides infinity; bit noise alone cannot
          // turn an unreached node into a spurious finite distance
          next.reach[i] = yv.at(i, kNumBits) > 0.0 ? 1 : 0;
          if (!next.reach[i]) {
            next.dist[i] = kInf;
          } else {
            Bits bits;
            for (int bpos = 0; bpos < kNumBits; ++bpos)
              bits[bpos] = yv.at(i, bpos) > 0.0 ? 1 : 0;
            const int d = from_bits(bits);
            next.dist[i] = d == kInf ? kMaxFinite : d;
          }
          changed = changed || next.dist[i] != state.dist[i];
        }
        stop = t.value(s.tau_logit).data[0] <= 0.0 && !changed;
      } else {
        next.reach.resize(w.n);
        next.dist.resize(w.n);
        bool changed = false;
        for (int i = 0; i < w.n; ++i) {
          next.reach[i] = yv.at(i, 0) > 0.0 ? 1 : 0;
          if (next.reach[i] != state.reach[i]) changed = true;
          if (next.reach[i] && first_reach_step[i] < 0) first_reach_step[i] = step;
          next.dist[i] = next.reach[i] && first_reach_step[i] >= 0 ? first_reach_step[i] : kInf;
        }
        stop = !changed;  // predicted fixpoint
      }
    }
    out.steps.push_back(std::move(s));
    state = std::move(next);
    if (!forced && stop) break;
  }
  out.final_state = std::move(state);
  return out;
}

}  // namespace nbm
