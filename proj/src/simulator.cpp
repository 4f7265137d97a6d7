#include "nbm/simulator.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nbm/heads.hpp"
#include "nbm/parallel.hpp"

namespace nbm {

PathProposal ClassicalOracle::find_path(const ResidualGraph& g) {
  const ExecutionTrace trace = bellman_ford_trace(g);
  if (trace.final().dist[g.sink] == kInf) return {false, std::nullopt};
  return {true, extract_path(trace.final().pred, g.src, g.sink, g)};
}

int ClassicalOracle::find_bottleneck(const ResidualGraph& g, const Path& p) {
  return bottleneck(g, p);
}

void ClassicalOracle::subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) {
  augment(g, p, amount);
}

NeuralOracle::NeuralOracle(const ModelParameters* params, TerminationMode mode)
    : params_(params), mode_(mode) {}

PathProposal NeuralOracle::find_path(const ResidualGraph& g) {
  const GraphWiring w = wire_graph(g);
  if (mode_ == TerminationMode::bfs) {
    Tape bfs_tape(&params_->store, nullptr);
    Rollout r = rollout(bfs_tape, *params_, w, Algo::bfs, RolloutMode::free_running, nullptr);
    // sink reachability at the final step is the termination signal
    const double sink_prob =
        reach_probability(bfs_tape.value(r.steps.back().y).at(g.sink, 0));
    if (sink_prob <= 0.5) return {false, std::nullopt};
  }
  Tape tape(&params_->store, nullptr);
  Rollout r = rollout(tape, *params_, w, Algo::bellman_ford, RolloutMode::free_running, nullptr);
  bank_ = tape.value(r.steps.back().msgs);
  bank_edges_ = g.edge_count();
  Var logits = predecessor_logits(tape, *params_, w, r.steps.back().h, r.edge_feats);
  const std::vector<int> pred = predecessor_argmax(tape.value(logits), w);
  return {true, extract_path(pred, g.src, g.sink, g)};
}

void NeuralOracle::ensure_bank(const ResidualGraph& g) {
  if (bank_edges_ == g.edge_count()) return;
  const GraphWiring w = wire_graph(g);
  Tape tape(&params_->store, nullptr);
  Rollout r = rollout(tape, *params_, w, Algo::bellman_ford, RolloutMode::free_running, nullptr);
  bank_ = tape.value(r.steps.back().msgs);
  bank_edges_ = g.edge_count();
}

int NeuralOracle::find_bottleneck(const ResidualGraph& g, const Path& p) {
  ensure_bank(g);
  Tape tape(&params_->store, nullptr);
  Var bank = tape.input(bank_);
  Var logits = bottleneck_logits(tape, *params_, bank, p.edge_indices);
  const Mat& lv = tape.value(logits);
  int best = 0;
  for (int i = 1; i < lv.rows; ++i)
    if (lv.data[i] > lv.data[best]) best = i;
  return g.edges[p.edge_indices[best]].cap;
}

void NeuralOracle::subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) {
  ensure_bank(g);
  Tape tape(&params_->store, nullptr);
  Var bank = tape.input(bank_);
  for (int e : p.edge_indices) {
    const int c_e = g.edges[e].cap;
    Var logits = capacity_logits(tape, *params_, bank, e, c_e, amount);
    const Mat& lv = tape.value(logits);
    int best = 0;
    for (int v = 1; v <= c_e; ++v)
      if (lv.data[v] > lv.data[best]) best = v;
    g.edges[e].cap = best;
    g.edges[g.edges[e].pair].cap = g.pair_sum[e] - best;
  }
}

int AblatedOracle::find_bottleneck(const ResidualGraph& g, const Path& p) {
  return flags_.classical_bottleneck ? classical_.find_bottleneck(g, p)
                                     : inner_->find_bottleneck(g, p);
}

void AblatedOracle::subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) {
  if (flags_.classical_augment) classical_.subtract_bottleneck(g, p, amount);
  else inner_->subtract_bottleneck(g, p, amount);
}

OracleFactory classical_oracle_factory() {
  return [] { return std::make_unique<ClassicalOracle>(); };
}

OracleFactory neural_oracle_factory(const ModelParameters* params, TerminationMode mode,
                                    AblationFlags flags) {
  if (mode == TerminationMode::threshold) {
    // only path finding runs neurally under threshold-based execution
    flags.classical_bottleneck = true;
    flags.classical_augment = true;
  }
  return [params, mode, flags]() -> std::unique_ptr<OracleInterface> {
    return std::make_unique<AblatedOracle>(std::make_unique<NeuralOracle>(params, mode), flags);
  };
}

OracleFactory ablated(OracleFactory factory, AblationFlags flags) {
  return [factory = std::move(factory), flags]() -> std::unique_ptr<OracleInterface> {
    return std::make_unique<AblatedOracle>(factory(), flags);
  };
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::no_path: return "no-path";
    case StopReason::bottleneck_mismatch: return "bottleneck-mismatch";
    case StopReason::rerun_exhausted: return "rerun-exhausted";
    case StopReason::augment_mismatch: return "augment-mismatch";
  }
  return "?";
}

namespace {

bool structurally_valid(const ResidualGraph& g, const Path& p) {
  if (p.nodes.empty() || p.nodes.front() != g.src || p.nodes.back() != g.sink) return false;
  if (p.nodes.size() != p.edge_indices.size() + 1 || p.edge_indices.empty()) return false;
  for (int i = 0; i < p.length(); ++i) {
    const int e = p.edge_indices[i];
    if (e < 0 || e >= g.edge_count()) return false;
    if (g.edges[e].u != p.nodes[i] || g.edges[e].v != p.nodes[i + 1]) return false;
  }
  return true;
}

// Threshold mode: a proposal counts as invalid when it is structurally broken
// or crosses a zero-capacity edge; t consecutive invalid attempts mean "no
// path", with edge weights re-randomised for every attempt.
PathProposal find_with_threshold(ResidualGraph& work, OracleInterface& oracle,
                                 const SimConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < cfg.t; ++attempt) {
    if (cfg.randomize_weights) assign_random_weights(work, rng);
    PathProposal prop = oracle.find_path(work);
    if (!prop.found) return {false, std::nullopt};  // oracle abstains definitively
    if (prop.path && structurally_valid(work, *prop.path) && bottleneck(work, *prop.path) >= 1)
      return {true, prop.path};
  }
  return {false, std::nullopt};
}

}  // namespace

SimulationResult simulate(const ResidualGraph& g, OracleInterface& oracle, const SimConfig& cfg,
                          uint64_t seed) {
  if (cfg.t < 1 || cfg.t_b < 1) throw std::invalid_argument("simulate: t and t_b must be >= 1");
  if (cfg.ablate_bottleneck || cfg.ablate_augment) {
    AblatedOracle wrapped(&oracle, {cfg.ablate_bottleneck, cfg.ablate_augment});
    SimConfig inner = cfg;
    inner.ablate_bottleneck = inner.ablate_augment = false;
    return simulate(g, wrapped, inner, seed);
  }
  Rng rng(seed);
  SimulationResult res;
  res.optimal_flow = ford_fulkerson_reference(g).flow;
  ResidualGraph work = g;
  int cnt_b = 1;
  while (true) {
    PathProposal prop;
    if (cfg.termination == TerminationMode::threshold) {
      prop = find_with_threshold(work, oracle, cfg, rng);
    } else {
      if (cfg.randomize_weights) assign_random_weights(work, rng);
      prop = oracle.find_path(work);
      if (prop.path && !structurally_valid(work, *prop.path)) prop.path = std::nullopt;
    }
    if (!prop.found) {
      res.reason = StopReason::no_path;
      break;
    }
    if (!prop.path) {
      // invalid proposal; reuse the zero-bottleneck rerun branch
      ++cnt_b;
      if (cnt_b > cfg.t_b) {
        res.reason = StopReason::rerun_exhausted;
        break;
      }
      continue;
    }
    const Path& p = *prop.path;
    const int oracle_b = oracle.find_bottleneck(work, p);
    const int real_b = bottleneck(work, p);
    ++cnt_b;
    if (oracle_b != real_b) {
      res.reason = StopReason::bottleneck_mismatch;
      break;
    }
    if (real_b == 0) {
      if (cnt_b > cfg.t_b) {
        res.reason = StopReason::rerun_exhausted;
        break;
      }
      continue;
    }
    ResidualGraph oracle_g = work;
    oracle.subtract_bottleneck(oracle_g, p, oracle_b);
    ResidualGraph ref_g = work;
    augment(ref_g, p, real_b);
    bool equal = oracle_g.edge_count() == ref_g.edge_count();
    for (int i = 0; equal && i < ref_g.edge_count(); ++i)
      equal = oracle_g.edges[i].cap == ref_g.edges[i].cap;
    if (!equal) {
      res.reason = StopReason::augment_mismatch;
      break;
    }
    work = std::move(ref_g);
    res.steps.push_back({p, real_b});
    cnt_b = 1;
  }
  res.achieved_flow = flow_value(work);
  res.success = res.achieved_flow == res.optimal_flow;
  return res;
}

DatasetAccuracy accuracy_over_dataset(const std::vector<ResidualGraph>& graphs,
                                      const OracleFactory& factory, const SimConfig& cfg,
                                      uint64_t master_seed) {
  if (graphs.empty()) throw std::invalid_argument("accuracy_over_dataset: empty dataset");
  const int num_graphs = static_cast<int>(graphs.size());
  const int tasks = num_graphs * cfg.runs;
  DatasetAccuracy acc;
  acc.results.resize(tasks);
  parallel_for(tasks, cfg.threads, [&](int task) {
    const int graph_id = task / cfg.runs;
    auto oracle = factory();
    acc.results[task] = simulate(graphs[graph_id], *oracle, cfg, mix_seed(master_seed, task));
  });
  acc.run_accuracy.assign(cfg.runs, 0.0);
  double flow_err = 0.0;
  int successes = 0;
  for (int task = 0; task < tasks; ++task) {
    const SimulationResult& r = acc.results[task];
    successes += r.success ? 1 : 0;
    acc.run_accuracy[task % cfg.runs] += r.success ? 1.0 : 0.0;
    flow_err += std::abs(r.achieved_flow - r.optimal_flow);
  }
  for (double& a : acc.run_accuracy) a /= num_graphs;
  acc.pair_accuracy = static_cast<double>(successes) / tasks;
  double mean = 0.0;
  for (double a : acc.run_accuracy) mean += a;
  mean /= cfg.runs;
  acc.mean_over_runs = mean;
  double var = 0.0;
  for (double a : acc.run_accuracy) var += (a - mean) * (a - mean);
  acc.std_over_runs = std::sqrt(var / cfg.runs);
  acc.mean_flow_error = flow_err / tasks;
  return acc;
}

void write_result_log(const std::string& path, const DatasetAccuracy& acc, int num_graphs,
                      int runs) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write result log: " + path);
  os << "graph_id,run,achieved,optimal,success,reason,steps\n";
  for (int g = 0; g < num_graphs; ++g)
    for (int r = 0; r < runs; ++r) {
      const SimulationResult& res = acc.results[g * runs + r];
      os << g << ',' << r << ',' << res.achieved_flow << ',' << res.optimal_flow << ','
         << (res.success ? 1 : 0) << ',' << stop_reason_name(res.reason) << ','
         << res.steps.size() << '\n';
    }
}

}  // namespace nbm
