#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "nbm/mat.hpp"

namespace nbm {

// Named parameter arrays. Slots are handed out at registration time and used
// as stable ids by tapes, the optimizer and checkpoint io.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Mat> values;

  int add(const std::string& name, Mat value) {
    names.push_back(name);
    values.push_back(std::move(value));
    return static_cast<int>(values.size()) - 1;
  }
  int find(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  size_t count() const { return values.size(); }

  std::vector<Mat> zero_grads() const {
    std::vector<Mat> g;
    g.reserve(values.size());
    for (const auto& v : values) g.emplace_back(v.rows, v.cols);
    return g;
  }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Mat. Forward values are computed eagerly as ops
// are pushed; backward() walks the recording in reverse. One tape per
// sample/rollout; parameter gradients accumulate into an external buffer so
// tapes can be built in parallel and reduced deterministically.
class Tape {
 public:
  Tape(const ParamStore* store, std::vector<Mat>* param_grads)
      : store_(store), param_grads_(param_grads),
        param_cache_(store ? store->count() : 0, -1) {}

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  Var input(Mat value);      // constant leaf, no gradient
  Var param(int slot);       // trainable leaf, cached per tape

  Var add(Var a, Var b);
  Var scale(Var a, double c);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);                     // A * B^T
  Var add_row_broadcast(Var a, Var bias);          // bias is 1 x C
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int c0, int c1);           // [c0, c1)
  Var gather_rows(Var a, std::vector<int> idx);
  Var mul_rows(Var a, std::vector<double> row_scale);
  Var mean_rows(Var a);                            // 1 x C
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);

  // Per-segment reductions over rows; seg[i] in [0, nseg). Empty segments
  // take the given default row (max/min) or zeros (mean).
  Var segment_max(Var a, std::vector<int> seg, int nseg, Var empty_default);
  Var segment_min(Var a, std::vector<int> seg, int nseg, Var empty_default);
  Var segment_mean(Var a, std::vector<int> seg, int nseg);

  // Losses; all return 1x1.
  Var bce_with_logits_sum(Var logits, Mat targets);
  // logits/targets are N x 1; softmax within each segment, summed
  // cross-entropy over segments. Targets may be soft distributions.
  Var seg_softmax_xent_sum(Var logits, std::vector<int> seg, int nseg, Mat targets);
  Var lincomb(const std::vector<std::pair<double, Var>>& terms);

  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, Node&)> back;
  };

  Var push(Mat value, std::function<void(Tape&, Node&)> back);
  Node& node(Var v) { return nodes_[v.id]; }

  const ParamStore* store_;
  std::vector<Mat>* param_grads_;
  std::vector<int> param_cache_;
  std::vector<Node> nodes_;
};

// Host-side softmax over one segment layout, for inference/metrics.
Mat segment_softmax(const Mat& logits, const std::vector<int>& seg, int nseg);

}  // namespace nbm
