#include "nbm/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace nbm {

Var predecessor_logits(Tape& t, const ModelParameters& p, const GraphWiring& w, Var h,
                       Var edge_feats) {
  Var in = t.concat_cols(
      {t.gather_rows(h, w.msg_src), t.gather_rows(h, w.msg_dst), edge_feats});
  Var hidden = t.relu(t.add_row_broadcast(t.matmul(in, t.param(p.pred_w1)), t.param(p.pred_b1)));
  return t.add_row_broadcast(t.matmul(hidden, t.param(p.pred_w2)), t.param(p.pred_b2));
}

std::vector<int> predecessor_argmax(const Mat& logits, const GraphWiring& w) {
  std::vector<int> pred(w.n, -1);
  std::vector<double> best(w.n, -1e300);
  for (int r = 0; r < logits.rows; ++r) {
    const int node = w.msg_dst[r];
    if (logits.data[r] > best[node]) {
      best[node] = logits.data[r];
      pred[node] = w.msg_src[r];
    }
  }
  return pred;
}

double reach_probability(double logit) { return 1.0 / (1.0 + std::exp(-logit)); }

Var bottleneck_logits(Tape& t, const ModelParameters& p, Var bank,
                      const std::vector<int>& path_edge_rows) {
  if (path_edge_rows.empty()) throw std::invalid_argument("bottleneck_logits: empty path");
  Var x = t.gather_rows(bank, path_edge_rows);
  Var q = t.add_row_broadcast(t.matmul(x, t.param(p.attn_wq)), t.param(p.attn_bq));
  Var k = t.add_row_broadcast(t.matmul(x, t.param(p.attn_wk)), t.param(p.attn_bk));
  Var v = t.add_row_broadcast(t.matmul(x, t.param(p.attn_wv)), t.param(p.attn_bv));
  const int dh = kLatentDim / kAttnHeads;
  std::vector<Var> heads;
  for (int head = 0; head < kAttnHeads; ++head) {
    const int c0 = head * dh, c1 = c0 + dh;
    Var qh = t.slice_cols(q, c0, c1);
    Var kh = t.slice_cols(k, c0, c1);
    Var vh = t.slice_cols(v, c0, c1);
    Var scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  Var attn = t.add_row_broadcast(t.matmul(t.concat_cols(heads), t.param(p.attn_wo)),
                                 t.param(p.attn_bo));
  Var res1 = t.layer_norm_rows(t.add(x, attn), t.param(p.attn_ln1_g), t.param(p.attn_ln1_b));
  Var ff = t.add_row_broadcast(
      t.matmul(t.relu(t.add_row_broadcast(t.matmul(res1, t.param(p.attn_ff_w1)),
                                          t.param(p.attn_ff_b1))),
               t.param(p.attn_ff_w2)),
      t.param(p.attn_ff_b2));
  Var res2 = t.layer_norm_rows(t.add(res1, ff), t.param(p.attn_ln2_g), t.param(p.attn_ln2_b));
  return t.add_row_broadcast(t.matmul(res2, t.param(p.bott_out_w)), t.param(p.bott_out_b));
}

Mat bottleneck_distribution(const Mat& path_probs, int m_graph,
                            const std::vector<int>& path_edge_rows) {
  Mat full(m_graph, 1);
  for (size_t i = 0; i < path_edge_rows.size(); ++i)
    full.data[path_edge_rows[i]] = path_probs.data[i];
  return full;
}

Var capacity_logits(Tape& t, const ModelParameters& p, Var bank, int edge_row, int c_e,
                    int amount) {
  if (c_e < 0) throw std::invalid_argument("capacity_logits: negative capacity");
  Mat cand_bits(c_e + 1, kNumBits);
  Mat amount_bits(c_e + 1, kNumBits);
  const Bits ab = to_bits(amount);
  for (int val = 0; val <= c_e; ++val) {
    const Bits bits = to_bits(val);
    for (int i = 0; i < kNumBits; ++i) {
      cand_bits.at(val, i) = bits[i];
      amount_bits.at(val, i) = ab[i];
    }
  }
  Var cand_emb = t.matmul(t.input(std::move(cand_bits)), t.param(p.cap_table));
  Var amount_emb = t.matmul(t.input(std::move(amount_bits)), t.param(p.cap_table));
  Var msg = t.gather_rows(bank, std::vector<int>(static_cast<size_t>(c_e) + 1, edge_row));
  Var in = t.concat_cols({msg, cand_emb, amount_emb});
  Var hidden = t.relu(
      t.add_row_broadcast(t.matmul(in, t.param(p.cap_score_w1)), t.param(p.cap_score_b1)));
  return t.add_row_broadcast(t.matmul(hidden, t.param(p.cap_score_w2)), t.param(p.cap_score_b2));
}

}  // namespace nbm
