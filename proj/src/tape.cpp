#include "nbm/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace nbm {

Var Tape::push(Mat value, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.grad = Mat(n.value.rows, n.value.cols);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Mat value) { return push(std::move(value), nullptr); }

Var Tape::param(int slot) {
  if (param_cache_[slot] >= 0) return Var{param_cache_[slot]};
  Var v = push(store_->values[slot], [slot](Tape& t, Node& n) {
    Mat& acc = (*t.param_grads_)[slot];
    for (size_t i = 0; i < n.grad.size(); ++i) acc.data[i] += n.grad.data[i];
  });
  param_cache_[slot] = v.id;
  return v;
}

Var Tape::add(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Mat out = av;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    Mat& gb = t.node(b).grad;
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga.data[i] += n.grad.data[i];
      gb.data[i] += n.grad.data[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Mat out = value(a);
  for (auto& v : out.data) v *= c;
  return push(std::move(out), [a, c](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (size_t i = 0; i < n.grad.size(); ++i) ga.data[i] += c * n.grad.data[i];
  });
}

Var Tape::relu(Var a) {
  Mat out = value(a);
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [a](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    const Mat& av = t.node(a).value;
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (av.data[i] > 0.0) ga.data[i] += n.grad.data[i];
  });
}

Var Tape::sigmoid(Var a) {
  Mat out = value(a);
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(out), [a](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.value.data[i];
      ga.data[i] += n.grad.data[i] * s * (1.0 - s);
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  Mat out = nbm::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    // dA += dC * B^T ; dB += A^T * dC
    matmul_nt_acc(n.grad, t.node(b).value, t.node(a).grad);
    matmul_tn_acc(t.node(a).value, n.grad, t.node(b).grad);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols != bv.cols) throw std::invalid_argument("matmul_nt: dims differ");
  Mat out(av.rows, bv.rows);
  matmul_nt_acc(av, bv, out);
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    // C = A B^T : dA += dC * B ; dB += dC^T * A
    matmul_acc(n.grad, t.node(b).value, t.node(a).grad);
    matmul_tn_acc(n.grad, t.node(a).value, t.node(b).grad);
  });
}

Var Tape::add_row_broadcast(Var a, Var bias) {
  const Mat& av = value(a);
  const Mat& bv = value(bias);
  if (bv.rows != 1 || bv.cols != av.cols)
    throw std::invalid_argument("add_row_broadcast: bias shape");
  Mat out = av;
  for (int r = 0; r < out.rows; ++r) {
    double* orow = out.row(r);
    for (int c = 0; c < out.cols; ++c) orow[c] += bv.data[c];
  }
  return push(std::move(out), [a, bias](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    Mat& gb = t.node(bias).grad;
    for (int r = 0; r < n.grad.rows; ++r) {
      const double* grow = n.grad.row(r);
      double* garow = ga.row(r);
      for (int c = 0; c < n.grad.cols; ++c) {
        garow[c] += grow[c];
        gb.data[c] += grow[c];
      }
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  const int rows = value(parts[0]).rows;
  int cols = 0;
  for (Var p : parts) {
    if (value(p).rows != rows) throw std::invalid_argument("concat_cols: rows differ");
    cols += value(p).cols;
  }
  Mat out(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    for (int r = 0; r < rows; ++r)
      std::copy(pv.row(r), pv.row(r) + pv.cols, out.row(r) + off);
    off += pv.cols;
  }
  std::vector<Var> saved = parts;
  return push(std::move(out), [saved](Tape& t, Node& n) {
    int off = 0;
    for (Var p : saved) {
      Mat& gp = t.node(p).grad;
      for (int r = 0; r < n.grad.rows; ++r) {
        const double* grow = n.grad.row(r) + off;
        double* prow = gp.row(r);
        for (int c = 0; c < gp.cols; ++c) prow[c] += grow[c];
      }
      off += gp.cols;
    }
  });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Mat& av = value(a);
  Mat out(av.rows, c1 - c0);
  for (int r = 0; r < av.rows; ++r)
    std::copy(av.row(r) + c0, av.row(r) + c1, out.row(r));
  return push(std::move(out), [a, c0](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (int r = 0; r < n.grad.rows; ++r) {
      const double* grow = n.grad.row(r);
      double* garow = ga.row(r) + c0;
      for (int c = 0; c < n.grad.cols; ++c) garow[c] += grow[c];
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Mat& av = value(a);
  Mat out(static_cast<int>(idx.size()), av.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(av.row(idx[r]), av.row(idx[r]) + av.cols, out.row(static_cast<int>(r)));
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (size_t r = 0; r < idx.size(); ++r) {
      const double* grow = n.grad.row(static_cast<int>(r));
      double* garow = ga.row(idx[r]);
      for (int c = 0; c < n.grad.cols; ++c) garow[c] += grow[c];
    }
  });
}

Var Tape::mul_rows(Var a, std::vector<double> row_scale) {
  const Mat& av = value(a);
  if (static_cast<int>(row_scale.size()) != av.rows)
    throw std::invalid_argument("mul_rows: scale length");
  Mat out = av;
  for (int r = 0; r < out.rows; ++r) {
    double* orow = out.row(r);
    for (int c = 0; c < out.cols; ++c) orow[c] *= row_scale[r];
  }
  return push(std::move(out), [a, s = std::move(row_scale)](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (int r = 0; r < n.grad.rows; ++r) {
      const double* grow = n.grad.row(r);
      double* garow = ga.row(r);
      for (int c = 0; c < n.grad.cols; ++c) garow[c] += grow[c] * s[r];
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Mat& av = value(a);
  Mat out(1, av.cols);
  for (int r = 0; r < av.rows; ++r)
    for (int c = 0; c < av.cols; ++c) out.data[c] += av.at(r, c);
  const double inv = 1.0 / av.rows;
  for (auto& v : out.data) v *= inv;
  return push(std::move(out), [a, inv](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (int r = 0; r < ga.rows; ++r) {
      double* garow = ga.row(r);
      for (int c = 0; c < ga.cols; ++c) garow[c] += n.grad.data[c] * inv;
    }
  });
}

Var Tape::softmax_rows(Var a) {
  Mat out = value(a);
  for (int r = 0; r < out.rows; ++r) {
    double* row = out.row(r);
    double mx = row[0];
    for (int c = 1; c < out.cols; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < out.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < out.cols; ++c) row[c] /= sum;
  }
  return push(std::move(out), [a](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (int r = 0; r < n.grad.rows; ++r) {
      const double* p = n.value.row(r);
      const double* g = n.grad.row(r);
      double dot = 0.0;
      for (int c = 0; c < n.grad.cols; ++c) dot += p[c] * g[c];
      double* garow = ga.row(r);
      for (int c = 0; c < n.grad.cols; ++c) garow[c] += p[c] * (g[c] - dot);
    }
  });
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const Mat& av = value(a);
  const int cols = av.cols;
  Mat xhat(av.rows, cols);
  std::vector<double> inv_sigma(av.rows);
  for (int r = 0; r < av.rows; ++r) {
    const double* row = av.row(r);
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += row[c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (int c = 0; c < cols; ++c) xhat.at(r, c) = (row[c] - mu) * is;
  }
  const Mat& gv = value(gain);
  const Mat& bv = value(bias);
  Mat out(av.rows, cols);
  for (int r = 0; r < av.rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = xhat.at(r, c) * gv.data[c] + bv.data[c];
  return push(std::move(out),
              [a, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                  Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    Mat& gg = t.node(gain).grad;
    Mat& gb = t.node(bias).grad;
    const Mat& gv = t.node(gain).value;
    const int cols = n.grad.cols;
    for (int r = 0; r < n.grad.rows; ++r) {
      const double* dy = n.grad.row(r);
      const double* xh = xhat.row(r);
      double mean_w = 0.0, mean_wx = 0.0;
      for (int c = 0; c < cols; ++c) {
        const double w = dy[c] * gv.data[c];
        mean_w += w;
        mean_wx += w * xh[c];
        gg.data[c] += dy[c] * xh[c];
        gb.data[c] += dy[c];
      }
      mean_w /= cols;
      mean_wx /= cols;
      double* garow = ga.row(r);
      for (int c = 0; c < cols; ++c) {
        const double w = dy[c] * gv.data[c];
        garow[c] += (w - mean_w - xh[c] * mean_wx) * inv_sigma[r];
      }
    }
  });
}

namespace {

void check_segments(const Mat& av, const std::vector<int>& seg, int nseg) {
  if (static_cast<int>(seg.size()) != av.rows)
    throw std::invalid_argument("segment op: seg length != rows");
  for (int s : seg)
    if (s < 0 || s >= nseg) throw std::invalid_argument("segment op: id out of range");
}

}  // namespace

Var Tape::segment_max(Var a, std::vector<int> seg, int nseg, Var empty_default) {
  const Mat& av = value(a);
  check_segments(av, seg, nseg);
  Mat out(nseg, av.cols);
  // arg[s][c] = row index achieving the max, or -1 when segment s is empty
  std::vector<int> arg(static_cast<size_t>(nseg) * av.cols, -1);
  for (int r = 0; r < av.rows; ++r) {
    const int s = seg[r];
    const double* row = av.row(r);
    for (int c = 0; c < av.cols; ++c) {
      int& am = arg[static_cast<size_t>(s) * av.cols + c];
      if (am < 0 || row[c] > out.at(s, c)) {
        out.at(s, c) = row[c];
        am = r;
      }
    }
  }
  const Mat& dv = value(empty_default);
  std::vector<char> empty(nseg, 1);
  for (int s : seg) empty[s] = 0;
  for (int s = 0; s < nseg; ++s)
    if (empty[s]) std::copy(dv.data.begin(), dv.data.end(), out.row(s));
  return push(std::move(out),
              [a, empty_default, arg = std::move(arg), empty = std::move(empty)](
                  Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    Mat& gd = t.node(empty_default).grad;
    for (int s = 0; s < n.grad.rows; ++s) {
      const double* grow = n.grad.row(s);
      if (empty[s]) {
        for (int c = 0; c < n.grad.cols; ++c) gd.data[c] += grow[c];
        continue;
      }
      for (int c = 0; c < n.grad.cols; ++c)
        ga.at(arg[static_cast<size_t>(s) * n.grad.cols + c], c) += grow[c];
    }
  });
}

Var Tape::segment_min(Var a, std::vector<int> seg, int nseg, Var empty_default) {
  Var neg = scale(a, -1.0);
  Var negd = scale(empty_default, -1.0);
  return scale(segment_max(neg, std::move(seg), nseg, negd), -1.0);
}

Var Tape::segment_mean(Var a, std::vector<int> seg, int nseg) {
  const Mat& av = value(a);
  check_segments(av, seg, nseg);
  std::vector<double> count(nseg, 0.0);
  for (int s : seg) count[s] += 1.0;
  Mat out(nseg, av.cols);
  for (int r = 0; r < av.rows; ++r) {
    const double* row = av.row(r);
    double* orow = out.row(seg[r]);
    for (int c = 0; c < av.cols; ++c) orow[c] += row[c];
  }
  for (int s = 0; s < nseg; ++s)
    if (count[s] > 0.0)
      for (int c = 0; c < av.cols; ++c) out.at(s, c) /= count[s];
  return push(std::move(out),
              [a, seg = std::move(seg), count = std::move(count)](Tape& t, Node& n) {
    Mat& ga = t.node(a).grad;
    for (int r = 0; r < ga.rows; ++r) {
      const int s = seg[r];
      const double* grow = n.grad.row(s);
      double* garow = ga.row(r);
      for (int c = 0; c < n.grad.cols; ++c) garow[c] += grow[c] / count[s];
    }
  });
}

Var Tape::bce_with_logits_sum(Var logits, Mat targets) {
  const Mat& zv = value(logits);
  if (!zv.same_shape(targets)) throw std::invalid_argument("bce: shape mismatch");
  double loss = 0.0;
  for (size_t i = 0; i < zv.size(); ++i) {
    const double z = zv.data[i], t = targets.data[i];
    loss += std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
  }
  Mat out(1, 1);
  out.data[0] = loss;
  return push(std::move(out), [logits, targets = std::move(targets)](Tape& t, Node& n) {
    Mat& gz = t.node(logits).grad;
    const Mat& zv = t.node(logits).value;
    const double up = n.grad.data[0];
    for (size_t i = 0; i < zv.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-zv.data[i]));
      gz.data[i] += up * (s - targets.data[i]);
    }
  });
}

Var Tape::seg_softmax_xent_sum(Var logits, std::vector<int> seg, int nseg, Mat targets) {
  const Mat& zv = value(logits);
  if (zv.cols != 1 || !zv.same_shape(targets))
    throw std::invalid_argument("seg_softmax_xent: expects N x 1 logits/targets");
  check_segments(zv, seg, nseg);
  Mat probs = segment_softmax(zv, seg, nseg);
  double loss = 0.0;
  for (int r = 0; r < zv.rows; ++r)
    if (targets.data[r] > 0.0) loss -= targets.data[r] * std::log(std::max(probs.data[r], 1e-300));
  Mat out(1, 1);
  out.data[0] = loss;
  return push(std::move(out),
              [logits, probs = std::move(probs), targets = std::move(targets)](Tape& t, Node& n) {
    Mat& gz = t.node(logits).grad;
    const double up = n.grad.data[0];
    for (int r = 0; r < gz.rows; ++r)
      gz.data[r] += up * (probs.data[r] - targets.data[r]);
  });
}

Var Tape::lincomb(const std::vector<std::pair<double, Var>>& terms) {
  double total = 0.0;
  for (const auto& [w, v] : terms) total += w * value(v).data[0];
  Mat out(1, 1);
  out.data[0] = total;
  return push(std::move(out), [terms](Tape& t, Node& n) {
    for (const auto& [w, v] : terms) t.node(v).grad.data[0] += w * n.grad.data[0];
  });
}

void Tape::backward(Var loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  ln.grad.data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
}

Mat segment_softmax(const Mat& logits, const std::vector<int>& seg, int nseg) {
  std::vector<double> mx(nseg, -1e300), sum(nseg, 0.0);
  for (int r = 0; r < logits.rows; ++r) mx[seg[r]] = std::max(mx[seg[r]], logits.data[r]);
  Mat probs(logits.rows, 1);
  for (int r = 0; r < logits.rows; ++r) {
    probs.data[r] = std::exp(logits.data[r] - mx[seg[r]]);
    sum[seg[r]] += probs.data[r];
  }
  for (int r = 0; r < logits.rows; ++r) probs.data[r] /= sum[seg[r]];
  return probs;
}

}  // namespace nbm
