#include "nbm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nbm/heads.hpp"
#include "nbm/parallel.hpp"
#include "nbm/simulator.hpp"

namespace nbm {

TrainData load_train_data(const Manifest& manifest) {
  TrainData d;
  auto load = [&](const std::string& role, bool required) -> std::vector<ResidualGraph> {
    const ManifestEntry* e = manifest.find(role);
    if (!e) {
      if (required) throw std::runtime_error("manifest missing role: " + role);
      return {};
    }
    return read_graph_file(e->path);
  };
  d.train_bip = load("train", true);
  d.val_bip = load("val", true);
  d.variety = load("variety", false);
  d.walk_train = load("walk_train", true);
  d.walk_val = load("walk_val", false);
  return d;
}

std::vector<BipSample> ford_fulkerson_samples(const ResidualGraph& g, uint64_t weight_seed,
                                              bool redraw_weights) {
  ResidualGraph work = g;
  if (redraw_weights) {
    Rng rng(weight_seed);
    assign_random_weights(work, rng);
  }
  std::vector<BipSample> samples;
  while (true) {
    BipSample s;
    s.state = work;
    s.bf = bellman_ford_trace(work);
    s.bfs = bfs_trace(work);
    const bool reachable = s.bf.final().dist[work.sink] != kInf;
    if (!reachable) {
      samples.push_back(std::move(s));
      break;
    }
    auto path = extract_path(s.bf.final().pred, work.src, work.sink, work);
    const int b = bottleneck(work, *path);
    augment(work, *path, b);
    s.bf_path = std::move(path);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<WalkSample> walk_samples(const ResidualGraph& g, uint64_t weight_seed,
                                     bool redraw_weights) {
  ResidualGraph work = g;
  if (redraw_weights) {
    Rng rng(weight_seed);
    assign_random_weights(work, rng);
  }
  const Path path = walk_path_of(work);
  const int b = bottleneck(work, path);

  auto make = [&](const ResidualGraph& state, int target_cap) {
    WalkSample s;
    s.graph = state;
    s.path_edges = path.edge_indices;
    s.bf = bellman_ford_trace(state);
    s.bottleneck_target = Mat(path.length(), 1);
    int minima = 0;
    for (int e : path.edge_indices) minima += state.edges[e].cap == target_cap ? 1 : 0;
    for (int i = 0; i < path.length(); ++i)
      if (state.edges[path.edge_indices[i]].cap == target_cap)
        s.bottleneck_target.data[i] = 1.0 / minima;
    return s;
  };

  WalkSample original = make(work, b);
  original.amount = b;
  for (int e : path.edge_indices)
    original.capacity_targets.emplace_back(e, work.edges[e].cap - b);

  ResidualGraph augmented = work;
  augment(augmented, path, b);
  WalkSample saturated = make(augmented, 0);

  std::vector<WalkSample> out;
  out.push_back(std::move(original));
  out.push_back(std::move(saturated));
  return out;
}

namespace {

struct BipLossVars {
  Var pred, dist, term, reach;
};

BipLossVars bip_sample_losses(Tape& t, const ModelParameters& mp, const BipSample& s,
                              int bf_steps, int bfs_steps) {
  const GraphWiring w = wire_graph(s.state);
  BipLossVars out;

  {
    ExecutionTrace bf = s.bf;
    bf.pad_to(bf_steps);
    Rollout r = rollout(t, mp, w, Algo::bellman_ford, RolloutMode::teacher_forced, &bf, bf_steps);
    std::vector<std::pair<double, Var>> pred_terms, dist_terms, term_terms;
    const double pn = 1.0 / (static_cast<double>(bf_steps) * w.n);
    for (int step = 1; step <= bf_steps; ++step) {
      const RolloutStep& rs = r.steps[step - 1];
      Var plogits = predecessor_logits(t, mp, w, rs.h, r.edge_feats);
      Mat ptarget(w.m_graph + w.n, 1);
      for (int v = 0; v < w.n; ++v)
        ptarget.data[w.candidate_row(bf.at(step).pred[v], v, s.state)] += 1.0;
      pred_terms.emplace_back(pn, t.seg_softmax_xent_sum(plogits, w.msg_dst, w.n,
                                                         std::move(ptarget)));
      dist_terms.emplace_back(pn / kBfOutputDim,
                              t.bce_with_logits_sum(rs.y, bf_state_targets(bf.at(step))));
      Mat tau_target(1, 1);
      tau_target.data[0] = bf.at(step).terminated ? 0.0 : 1.0;  // continue while tau > 0.5
      term_terms.emplace_back(1.0 / bf_steps,
                              t.bce_with_logits_sum(rs.tau_logit, std::move(tau_target)));
    }
    out.pred = t.lincomb(pred_terms);
    out.dist = t.lincomb(dist_terms);
    out.term = t.lincomb(term_terms);
  }
  {
    ExecutionTrace bfs = s.bfs;
    bfs.pad_to(bfs_steps);
    Rollout r = rollout(t, mp, w, Algo::bfs, RolloutMode::teacher_forced, &bfs, bfs_steps);
    std::vector<std::pair<double, Var>> reach_terms;
    for (int step = 1; step <= bfs_steps; ++step) {
      Mat target(w.n, 1);
      for (int v = 0; v < w.n; ++v) target.data[v] = bfs.at(step).reach[v];
      reach_terms.emplace_back(1.0 / (static_cast<double>(bfs_steps) * w.n),
                               t.bce_with_logits_sum(r.steps[step - 1].y, std::move(target)));
    }
    out.reach = t.lincomb(reach_terms);
  }
  return out;
}

struct WalkLossVars {
  Var bottleneck, capacity;
  bool has_capacity = false;
};

WalkLossVars walk_sample_losses(Tape& t, const ModelParameters& mp, const WalkSample& s,
                                int bf_steps) {
  const GraphWiring w = wire_graph(s.graph);
  ExecutionTrace bf = s.bf;
  bf.pad_to(bf_steps);
  Rollout r = rollout(t, mp, w, Algo::bellman_ford, RolloutMode::teacher_forced, &bf, bf_steps);
  Var bank = r.steps.back().msgs;
  WalkLossVars out;
  {
    Var logits = bottleneck_logits(t, mp, bank, s.path_edges);
    const std::vector<int> seg(s.path_edges.size(), 0);
    out.bottleneck = t.seg_softmax_xent_sum(logits, seg, 1, s.bottleneck_target);
  }
  if (!s.capacity_targets.empty()) {
    std::vector<std::pair<double, Var>> terms;
    for (const auto& [edge, target] : s.capacity_targets) {
      const int c_e = s.graph.edges[edge].cap;
      Var logits = capacity_logits(t, mp, bank, edge, c_e, s.amount);
      Mat ctarget(c_e + 1, 1);
      ctarget.data[target] = 1.0;
      terms.emplace_back(1.0 / s.capacity_targets.size(),
                         t.seg_softmax_xent_sum(logits, std::vector<int>(c_e + 1, 0), 1,
                                                std::move(ctarget)));
    }
    out.capacity = t.lincomb(terms);
    out.has_capacity = true;
  }
  return out;
}

struct AdamState {
  std::vector<Mat> m, v;
  int step = 0;

  explicit AdamState(const ParamStore& store) : m(store.zero_grads()), v(store.zero_grads()) {}

  void update(ParamStore& store, const std::vector<Mat>& grads, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (size_t s = 0; s < store.values.size(); ++s) {
      Mat& theta = store.values[s];
      for (size_t i = 0; i < theta.size(); ++i) {
        const double g = grads[s].data[i];
        m[s].data[i] = beta1 * m[s].data[i] + (1.0 - beta1) * g;
        v[s].data[i] = beta2 * v[s].data[i] + (1.0 - beta2) * g * g;
        theta.data[i] -= lr * (m[s].data[i] / bc1) / (std::sqrt(v[s].data[i] / bc2) + eps);
      }
    }
  }
};

struct ValCounters {
  long pred_last_hit = 0, pred_last_total = 0;
  long pred_step_hit = 0, pred_step_total = 0;
  long term_hit = 0, term_total = 0;
  long reach_hit = 0, reach_total = 0;
  long bott_hit = 0, bott_total = 0;
  long cap_hit = 0, cap_total = 0;

  void merge(const ValCounters& o) {
    pred_last_hit += o.pred_last_hit;
    pred_last_total += o.pred_last_total;
    pred_step_hit += o.pred_step_hit;
    pred_step_total += o.pred_step_total;
    term_hit += o.term_hit;
    term_total += o.term_total;
    reach_hit += o.reach_hit;
    reach_total += o.reach_total;
    bott_hit += o.bott_hit;
    bott_total += o.bott_total;
    cap_hit += o.cap_hit;
    cap_total += o.cap_total;
  }
};

double ratio(long hit, long total) { return total == 0 ? 0.0 : static_cast<double>(hit) / total; }

// Teacher-forced accuracy counters for one residual state.
void count_bip_sample(const ModelParameters& mp, const BipSample& s, ValCounters& c) {
  const GraphWiring w = wire_graph(s.state);
  {
    ExecutionTrace bf = s.bf;
    const int steps = std::max(1, bf.length());
    bf.pad_to(steps);
    Tape t(&mp.store, nullptr);
    Rollout r = rollout(t, mp, w, Algo::bellman_ford, RolloutMode::teacher_forced, &bf, steps);
    for (int step = 1; step <= steps; ++step) {
      const RolloutStep& rs = r.steps[step - 1];
      Var plogits = predecessor_logits(t, mp, w, rs.h, r.edge_feats);
      const std::vector<int> pred = predecessor_argmax(t.value(plogits), w);
      for (int v = 0; v < w.n; ++v) {
        const bool hit = pred[v] == bf.at(step).pred[v];
        ++c.pred_step_total;
        c.pred_step_hit += hit ? 1 : 0;
        if (step == steps) {
          ++c.pred_last_total;
          c.pred_last_hit += hit ? 1 : 0;
        }
      }
      const bool cont_pred = t.value(rs.tau_logit).data[0] > 0.0;
      const bool cont_true = bf.at(step).terminated == 0;
      ++c.term_total;
      c.term_hit += cont_pred == cont_true ? 1 : 0;
    }
  }
  {
    ExecutionTrace bfs = s.bfs;
    const int steps = std::max(1, bfs.length());
    bfs.pad_to(steps);
    Tape t(&mp.store, nullptr);
    Rollout r = rollout(t, mp, w, Algo::bfs, RolloutMode::teacher_forced, &bfs, steps);
    for (int step = 1; step <= steps; ++step) {
      const Mat& y = t.value(r.steps[step - 1].y);
      for (int v = 0; v < w.n; ++v) {
        ++c.reach_total;
        c.reach_hit += (y.at(v, 0) > 0.0 ? 1 : 0) == bfs.at(step).reach[v] ? 1 : 0;
      }
    }
  }
}

void count_walk_sample(const ModelParameters& mp, const WalkSample& s, ValCounters& c) {
  const GraphWiring w = wire_graph(s.graph);
  ExecutionTrace bf = s.bf;
  const int steps = std::max(1, bf.length());
  bf.pad_to(steps);
  Tape t(&mp.store, nullptr);
  Rollout r = rollout(t, mp, w, Algo::bellman_ford, RolloutMode::teacher_forced, &bf, steps);
  Var bank = r.steps.back().msgs;
  {
    Var logits = bottleneck_logits(t, mp, bank, s.path_edges);
    const Mat& lv = t.value(logits);
    int best = 0;
    for (int i = 1; i < lv.rows; ++i)
      if (lv.data[i] > lv.data[best]) best = i;
    ++c.bott_total;
    c.bott_hit += s.bottleneck_target.data[best] > 0.0 ? 1 : 0;  // any minimum counts
  }
  for (const auto& [edge, target] : s.capacity_targets) {
    const int c_e = s.graph.edges[edge].cap;
    Var logits = capacity_logits(t, mp, bank, edge, c_e, s.amount);
    const Mat& lv = t.value(logits);
    int best = 0;
    for (int v = 1; v <= c_e; ++v)
      if (lv.data[v] > lv.data[best]) best = v;
    ++c.cap_total;
    c.cap_hit += best == target ? 1 : 0;
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainData& data) {
  if (data.train_bip.empty() || data.walk_train.empty())
    throw TrainingError("train: need bipartite and walk training sets");
  ModelParameters params = ModelParameters::init(config.processor, config.seed);
  AdamState adam(params.store);
  TrainResult result;
  result.best.config = config;
  result.best.params = params;

  // validation samples are fixed (stored weights) so the early-stop metric is
  // comparable across epochs
  std::vector<BipSample> val_samples;
  for (const auto& g : data.val_bip) {
    auto ss = ford_fulkerson_samples(g, 0, false);
    for (auto& s : ss) val_samples.push_back(std::move(s));
  }
  std::vector<WalkSample> val_walks;
  for (const auto& g : data.walk_val) {
    auto ss = walk_samples(g, 0, false);
    for (auto& s : ss) val_walks.push_back(std::move(s));
  }

  int best_epoch = -1;
  double best_acc = -1.0;
  Rng shuffle_rng(mix_seed(config.seed, 0xabcdef));

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    // fresh supervision: re-drawn weights change the reference trajectories
    std::vector<BipSample> bip;
    {
      std::vector<const ResidualGraph*> pool;
      for (const auto& g : data.train_bip) pool.push_back(&g);
      if (config.use_variety)
        for (const auto& g : data.variety) pool.push_back(&g);
      std::vector<std::vector<BipSample>> per_graph(pool.size());
      parallel_for(static_cast<int>(pool.size()), config.threads, [&](int i) {
        per_graph[i] = ford_fulkerson_samples(
            *pool[i], mix_seed(config.seed, 1000003ULL * epoch + i), config.redraw_weights);
      });
      for (auto& v : per_graph)
        for (auto& s : v) {
          const bool zigzag = s.bf_path && s.bf_path->length() > 3;
          const int copies = zigzag ? config.long_path_oversample : 1;
          for (int c = 1; c < copies; ++c) bip.push_back(s);
          bip.push_back(std::move(s));
        }
    }
    std::vector<WalkSample> walks;
    {
      std::vector<std::vector<WalkSample>> per_graph(data.walk_train.size());
      parallel_for(static_cast<int>(data.walk_train.size()), config.threads, [&](int i) {
        per_graph[i] = walk_samples(data.walk_train[i],
                                    mix_seed(config.seed, 2000003ULL * epoch + i),
                                    config.redraw_weights);
      });
      for (auto& v : per_graph)
        for (auto& s : v) walks.push_back(std::move(s));
    }
    std::shuffle(bip.begin(), bip.end(), shuffle_rng);
    std::shuffle(walks.begin(), walks.end(), shuffle_rng);

    double ep_pred = 0, ep_dist = 0, ep_term = 0, ep_reach = 0, ep_bott = 0, ep_cap = 0;
    int batches = 0;
    size_t walk_cursor = 0;
    const int nbatch = static_cast<int>(bip.size()) / config.batch_size;
    for (int batch = 0; batch < nbatch; ++batch) {
      const int b0 = batch * config.batch_size;
      std::vector<const BipSample*> bip_batch;
      for (int i = 0; i < config.batch_size; ++i) bip_batch.push_back(&bip[b0 + i]);
      std::vector<const WalkSample*> walk_batch;
      for (int i = 0; i < config.batch_size; ++i) {
        walk_batch.push_back(&walks[walk_cursor]);
        walk_cursor = (walk_cursor + 1) % walks.size();
      }
      int bf_steps = 1, bfs_steps = 1, walk_steps = 1;
      for (const BipSample* s : bip_batch) {
        bf_steps = std::max(bf_steps, s->bf.length());
        bfs_steps = std::max(bfs_steps, s->bfs.length());
      }
      for (const WalkSample* s : walk_batch) walk_steps = std::max(walk_steps, s->bf.length());

      const int tasks = 2 * config.batch_size;
      std::vector<std::vector<Mat>> grads(tasks);
      std::vector<std::array<double, 6>> losses(tasks, std::array<double, 6>{});
      parallel_for(tasks, config.threads, [&](int task) {
        grads[task] = params.store.zero_grads();
        Tape t(&params.store, &grads[task]);
        if (task < config.batch_size) {
          BipLossVars lv = bip_sample_losses(t, params, *bip_batch[task], bf_steps, bfs_steps);
          Var total = t.lincomb({{config.w_pred, lv.pred},
                                 {config.w_dist, lv.dist},
                                 {config.w_term, lv.term},
                                 {config.w_reach, lv.reach}});
          t.backward(total);
          losses[task] = {t.value(lv.pred).data[0], t.value(lv.dist).data[0],
                          t.value(lv.term).data[0], t.value(lv.reach).data[0], 0.0, 0.0};
        } else {
          const WalkSample* s = walk_batch[task - config.batch_size];
          WalkLossVars lv = walk_sample_losses(t, params, *s, walk_steps);
          std::vector<std::pair<double, Var>> terms{{config.w_bottleneck, lv.bottleneck}};
          if (lv.has_capacity) terms.emplace_back(config.w_capacity, lv.capacity);
          Var total = t.lincomb(terms);
          t.backward(total);
          losses[task] = {0.0, 0.0, 0.0, 0.0, t.value(lv.bottleneck).data[0],
                          lv.has_capacity ? t.value(lv.capacity).data[0] : 0.0};
        }
      });

      std::vector<Mat> grad = params.store.zero_grads();
      const double inv = 1.0 / config.batch_size;
      for (int task = 0; task < tasks; ++task)
        for (size_t s = 0; s < grad.size(); ++s)
          for (size_t i = 0; i < grad[s].size(); ++i)
            grad[s].data[i] += grads[task][s].data[i] * inv;

      double batch_loss = 0.0;
      for (const auto& l : losses)
        for (double v : l) batch_loss += v;
      if (!std::isfinite(batch_loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch));

      adam.update(params.store, grad, config.learning_rate);
      for (int task = 0; task < config.batch_size; ++task) {
        ep_pred += losses[task][0];
        ep_dist += losses[task][1];
        ep_term += losses[task][2];
        ep_reach += losses[task][3];
      }
      for (int task = config.batch_size; task < tasks; ++task) {
        ep_bott += losses[task][4];
        ep_cap += losses[task][5];
      }
      ++batches;
    }

    const double denom = std::max(1, batches * config.batch_size);
    auto hist = [&](const std::string& task, const std::string& split, const std::string& metric,
                    double value) { result.history.push_back({epoch, task, split, metric, value}); };
    hist("predecessor", "train", "loss", ep_pred / denom);
    hist("distance", "train", "loss", ep_dist / denom);
    hist("termination", "train", "loss", ep_term / denom);
    hist("reachability", "train", "loss", ep_reach / denom);
    hist("bottleneck", "train", "loss", ep_bott / denom);
    hist("capacity", "train", "loss", ep_cap / denom);

    // validation
    std::vector<ValCounters> vc(val_samples.size());
    parallel_for(static_cast<int>(val_samples.size()), config.threads,
                 [&](int i) { count_bip_sample(params, val_samples[i], vc[i]); });
    ValCounters c;
    for (const auto& v : vc) c.merge(v);
    std::vector<ValCounters> wc(val_walks.size());
    parallel_for(static_cast<int>(val_walks.size()), config.threads,
                 [&](int i) { count_walk_sample(params, val_walks[i], wc[i]); });
    for (const auto& v : wc) c.merge(v);
    const double val_last = ratio(c.pred_last_hit, c.pred_last_total);
    hist("predecessor", "val", "last_step_accuracy", val_last);
    hist("predecessor", "val", "step_accuracy", ratio(c.pred_step_hit, c.pred_step_total));
    hist("termination", "val", "accuracy", ratio(c.term_hit, c.term_total));
    hist("reachability", "val", "accuracy", ratio(c.reach_hit, c.reach_total));
    hist("bottleneck", "val", "accuracy", ratio(c.bott_hit, c.bott_total));
    hist("capacity", "val", "accuracy", ratio(c.cap_hit, c.cap_total));

    if (config.sim_eval_every > 0 && epoch % config.sim_eval_every == 0 &&
        !data.val_bip.empty()) {
      SimConfig sc;
      sc.termination = TerminationMode::bfs;
      sc.runs = config.sim_eval_runs;
      sc.threads = config.threads;
      DatasetAccuracy acc = accuracy_over_dataset(
          data.val_bip, neural_oracle_factory(&params, TerminationMode::bfs), sc,
          mix_seed(config.seed, 31337ULL + epoch));
      hist("maxflow", "val", "accuracy", acc.pair_accuracy);
      hist("maxflow", "val", "flow_error", acc.mean_flow_error);
    }

    std::cerr << "epoch " << epoch << ": train batches " << batches
              << ", val last-step pred acc " << val_last << "\n";

    if (val_last > best_acc) {
      best_acc = val_last;
      best_epoch = epoch;
      result.best.params = params;
      result.best.epoch = epoch;
      result.best.val_last_step_pred_acc = val_last;
    }
    if (epoch - best_epoch >= config.patience) break;
  }
  return result;
}

SubroutineMetrics evaluate_subroutines(const ModelParameters* params,
                                       const SubroutineEvalData& data, uint64_t seed,
                                       int threads) {
  struct FreeCounters {
    long tnr_hit = 0, tnr_total = 0;
    long aug_hit = 0, aug_total = 0;
  };
  ValCounters tf;
  FreeCounters fc;
  const bool classical = params == nullptr;

  for (const auto& [label, graphs] : data.bip_sets) {
    std::vector<ValCounters> per_tf(graphs.size());
    std::vector<FreeCounters> per_fc(graphs.size());
    parallel_for(static_cast<int>(graphs.size()), threads, [&, &graphs = graphs](int gi) {
      const uint64_t gseed = mix_seed(seed, std::hash<std::string>{}(label) + gi);
      auto samples = ford_fulkerson_samples(graphs[gi], gseed, true);
      ValCounters& c = per_tf[gi];
      FreeCounters& f = per_fc[gi];
      for (const auto& s : samples) {
        if (classical) {
          // ground truth through the same counters
          for (int step = 1; step <= std::max(1, s.bf.length()); ++step) {
            const int idx = std::min(step, s.bf.length());
            for (size_t v = 0; v < s.bf.at(0).pred.size(); ++v) {
              ++c.pred_step_total;
              ++c.pred_step_hit;
              if (step == std::max(1, s.bf.length())) {
                ++c.pred_last_total;
                ++c.pred_last_hit;
              }
            }
            (void)idx;
            ++c.term_total;
            ++c.term_hit;
          }
          for (int step = 1; step <= std::max(1, s.bfs.length()); ++step)
            for (size_t v = 0; v < s.bfs.at(0).reach.size(); ++v) {
              ++c.reach_total;
              ++c.reach_hit;
            }
        } else {
          count_bip_sample(*params, s, c);
        }
      }
      // simulation-context subroutine checks on the intermediate states
      Rng rng(mix_seed(gseed, 0xfeed));
      const ResidualGraph& original = samples.front().state;
      for (size_t k = 0; k < samples.size(); ++k) {
        ResidualGraph state = samples[k].state;
        assign_random_weights(state, rng);

        Mat bank;
        GraphWiring w;
        if (!classical) {
          w = wire_graph(state);
          Tape t(&params->store, nullptr);
          Rollout r =
              rollout(t, *params, w, Algo::bellman_ford, RolloutMode::free_running, nullptr);
          bank = t.value(r.steps.back().msgs);
        }

        // augmentation accuracy on this state's valid shortest path
        const ExecutionTrace bf = bellman_ford_trace(state);
        if (bf.final().dist[state.sink] != kInf) {
          const auto path = extract_path(bf.final().pred, state.src, state.sink, state);
          const int b = bottleneck(state, *path);
          for (int e : path->edge_indices) {
            const int c_e = state.edges[e].cap;
            const int target = c_e - b;
            int predicted = target;
            if (!classical) {
              Tape t(&params->store, nullptr);
              Var logits = capacity_logits(t, *params, t.input(bank), e, c_e, b);
              const Mat& lv = t.value(logits);
              predicted = 0;
              for (int v = 1; v <= c_e; ++v)
                if (lv.data[v] > lv.data[predicted]) predicted = v;
            }
            ++f.aug_total;
            f.aug_hit += predicted == target ? 1 : 0;
          }
        }

        // zero-capacity true negatives: a path valid in the original graph
        // but stale in this state (the kind an imperfect path-finder emits)
        if (k == 0) continue;
        ResidualGraph stale = original;
        for (int i = 0; i < stale.edge_count(); ++i) stale.edges[i].weight = state.edges[i].weight;
        const ExecutionTrace stale_bf = bellman_ford_trace(stale);
        if (stale_bf.final().dist[stale.sink] == kInf) continue;
        const auto stale_path = extract_path(stale_bf.final().pred, stale.src, stale.sink, stale);
        if (bottleneck(state, *stale_path) != 0) continue;
        int chosen;
        if (classical) {
          chosen = 0;
          for (int i = 1; i < stale_path->length(); ++i)
            if (state.edges[stale_path->edge_indices[i]].cap <
                state.edges[stale_path->edge_indices[chosen]].cap)
              chosen = i;
        } else {
          Tape t(&params->store, nullptr);
          Var logits = bottleneck_logits(t, *params, t.input(bank), stale_path->edge_indices);
          const Mat& lv = t.value(logits);
          chosen = 0;
          for (int i = 1; i < lv.rows; ++i)
            if (lv.data[i] > lv.data[chosen]) chosen = i;
        }
        ++f.tnr_total;
        f.tnr_hit += state.edges[stale_path->edge_indices[chosen]].cap == 0 ? 1 : 0;
      }
    });
    for (const auto& c : per_tf) tf.merge(c);
    for (const auto& f : per_fc) {
      fc.tnr_hit += f.tnr_hit;
      fc.tnr_total += f.tnr_total;
      fc.aug_hit += f.aug_hit;
      fc.aug_total += f.aug_total;
    }
  }

  ValCounters wtf;
  {
    std::vector<ValCounters> per(data.walks.size());
    parallel_for(static_cast<int>(data.walks.size()), threads, [&](int i) {
      auto samples = walk_samples(data.walks[i], mix_seed(seed, 0x3a1c + i), true);
      for (const auto& s : samples) {
        if (classical) {
          ++per[i].bott_total;
          ++per[i].bott_hit;
          for (size_t j = 0; j < s.capacity_targets.size(); ++j) {
            ++per[i].cap_total;
            ++per[i].cap_hit;
          }
        } else {
          count_walk_sample(*params, s, per[i]);
        }
      }
    });
    for (const auto& c : per) wtf.merge(c);
  }

  SubroutineMetrics m;
  m.pred_step_acc = ratio(tf.pred_step_hit, tf.pred_step_total);
  m.pred_last_acc = ratio(tf.pred_last_hit, tf.pred_last_total);
  m.term_acc = ratio(tf.term_hit, tf.term_total);
  m.reach_acc = ratio(tf.reach_hit, tf.reach_total);
  m.bottleneck_acc = ratio(wtf.bott_hit, wtf.bott_total);
  m.bottleneck_tnr = ratio(fc.tnr_hit, fc.tnr_total);
  m.augment_acc = ratio(fc.aug_hit, fc.aug_total);
  m.augment_acc_walk = ratio(wtf.cap_hit, wtf.cap_total);
  m.tnr_negative_count = static_cast<int>(fc.tnr_total);
  return m;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.precision(17);
  os << "nbm-checkpoint 1\n";
  os << "processor " << processor_name(ckpt.params.processor) << '\n';
  os << "epoch " << ckpt.epoch << '\n';
  os << "val_last_step_pred_acc " << ckpt.val_last_step_pred_acc << '\n';
  os << "learning_rate " << ckpt.config.learning_rate << '\n';
  os << "batch_size " << ckpt.config.batch_size << '\n';
  os << "patience " << ckpt.config.patience << '\n';
  os << "max_epochs " << ckpt.config.max_epochs << '\n';
  os << "seed " << ckpt.config.seed << '\n';
  os << "loss_weights " << ckpt.config.w_pred << ' ' << ckpt.config.w_dist << ' '
     << ckpt.config.w_term << ' ' << ckpt.config.w_reach << ' ' << ckpt.config.w_bottleneck
     << ' ' << ckpt.config.w_capacity << '\n';
  os << "use_variety " << (ckpt.config.use_variety ? 1 : 0) << '\n';
  os << "long_path_oversample " << ckpt.config.long_path_oversample << '\n';
  os << "redraw_weights " << (ckpt.config.redraw_weights ? 1 : 0) << '\n';
  const ParamStore& store = ckpt.params.store;
  for (size_t s = 0; s < store.count(); ++s) {
    const Mat& m = store.values[s];
    os << "param " << store.names[s] << ' ' << m.rows << ' ' << m.cols << '\n';
    for (size_t i = 0; i < m.size(); ++i) os << m.data[i] << (i + 1 == m.size() ? '\n' : ' ');
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "nbm-checkpoint" || version != 1)
    throw std::runtime_error("checkpoint: bad header");
  Checkpoint ckpt;
  std::string key;
  Processor proc = Processor::mpnn_max;
  while (is >> key) {
    if (key == "processor") {
      std::string name;
      is >> name;
      proc = processor_from_name(name);
      ckpt.params = ModelParameters::init(proc, 0);
      ckpt.config.processor = proc;
    } else if (key == "epoch") {
      is >> ckpt.epoch;
    } else if (key == "val_last_step_pred_acc") {
      is >> ckpt.val_last_step_pred_acc;
    } else if (key == "learning_rate") {
      is >> ckpt.config.learning_rate;
    } else if (key == "batch_size") {
      is >> ckpt.config.batch_size;
    } else if (key == "patience") {
      is >> ckpt.config.patience;
    } else if (key == "max_epochs") {
      is >> ckpt.config.max_epochs;
    } else if (key == "seed") {
      is >> ckpt.config.seed;
    } else if (key == "loss_weights") {
      is >> ckpt.config.w_pred >> ckpt.config.w_dist >> ckpt.config.w_term >>
          ckpt.config.w_reach >> ckpt.config.w_bottleneck >> ckpt.config.w_capacity;
    } else if (key == "use_variety") {
      int v;
      is >> v;
      ckpt.config.use_variety = v != 0;
    } else if (key == "long_path_oversample") {
      is >> ckpt.config.long_path_oversample;
    } else if (key == "redraw_weights") {
      int v;
      is >> v;
      ckpt.config.redraw_weights = v != 0;
    } else if (key == "param") {
      std::string name;
      int rows, cols;
      is >> name >> rows >> cols;
      const int slot = ckpt.params.store.find(name);
      if (slot < 0) throw std::runtime_error("checkpoint: unknown param " + name);
      Mat& m = ckpt.params.store.values[slot];
      if (m.rows != rows || m.cols != cols)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      for (size_t i = 0; i < m.size(); ++i) is >> m.data[i];
    } else {
      throw std::runtime_error("checkpoint: unexpected key " + key);
    }
  }
  return ckpt;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write history: " + path);
  os << "epoch,task,split,metric,value\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.task << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
}

std::vector<HistoryRow> read_history_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open history: " + path);
  std::vector<HistoryRow> rows;
  std::string line;
  if (!std::getline(is, line) || line != "epoch,task,split,metric,value")
    throw std::runtime_error("history: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    HistoryRow r;
    std::istringstream ls(line);
    std::string field;
    if (!std::getline(ls, field, ',')) throw std::runtime_error("history: bad row");
    r.epoch = std::stoi(field);
    if (!std::getline(ls, r.task, ',') || !std::getline(ls, r.split, ',') ||
        !std::getline(ls, r.metric, ','))
      throw std::runtime_error("history: bad row");
    if (!std::getline(ls, field)) throw std::runtime_error("history: bad row");
    r.value = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace nbm
