#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nbm/classical.hpp"
#include "nbm/datagen.hpp"
#include "nbm/gnncore.hpp"

namespace nbm {

// One path-finding answer: not found terminates the outer loop; found with
// no path is an invalid proposal the simulator routes through the
// zero-bottleneck rerun branch.
struct PathProposal {
  bool found = false;
  std::optional<Path> path;
};

// The three-subroutine contract satisfied by classical and neural
// implementations alike. subtract_bottleneck must preserve every pair sum.
class OracleInterface {
 public:
  virtual ~OracleInterface() = default;
  virtual PathProposal find_path(const ResidualGraph& g) = 0;
  virtual int find_bottleneck(const ResidualGraph& g, const Path& p) = 0;
  virtual void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) = 0;
};

class ClassicalOracle : public OracleInterface {
 public:
  PathProposal find_path(const ResidualGraph& g) override;
  int find_bottleneck(const ResidualGraph& g, const Path& p) override;
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override;
};

enum class TerminationMode { threshold, bfs };

// Free-running neural subroutines behind the oracle contract. find_path
// keeps the last rollout's edge messages as the bank the bottleneck and
// capacity heads read from.
class NeuralOracle : public OracleInterface {
 public:
  NeuralOracle(const ModelParameters* params, TerminationMode mode);
  PathProposal find_path(const ResidualGraph& g) override;
  int find_bottleneck(const ResidualGraph& g, const Path& p) override;
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override;

 private:
  void ensure_bank(const ResidualGraph& g);

  const ModelParameters* params_;
  TerminationMode mode_;
  Mat bank_;
  int bank_edges_ = -1;
};

struct AblationFlags {
  bool classical_bottleneck = false;  // -bottle
  bool classical_augment = false;     // -augment
};

// Replaces flagged subroutines with classical ones, path finding untouched.
class AblatedOracle : public OracleInterface {
 public:
  AblatedOracle(std::unique_ptr<OracleInterface> inner, AblationFlags flags)
      : owned_(std::move(inner)), inner_(owned_.get()), flags_(flags) {}
  // non-owning: wraps an oracle that outlives this object
  AblatedOracle(OracleInterface* inner, AblationFlags flags) : inner_(inner), flags_(flags) {}
  PathProposal find_path(const ResidualGraph& g) override { return inner_->find_path(g); }
  int find_bottleneck(const ResidualGraph& g, const Path& p) override;
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override;

 private:
  std::unique_ptr<OracleInterface> owned_;
  OracleInterface* inner_ = nullptr;
  ClassicalOracle classical_;
  AblationFlags flags_;
};

using OracleFactory = std::function<std::unique_ptr<OracleInterface>()>;

OracleFactory classical_oracle_factory();
// In threshold mode only path finding runs neurally; bottleneck and
// augmentation default to classical there unless flags request otherwise.
OracleFactory neural_oracle_factory(const ModelParameters* params, TerminationMode mode,
                                    AblationFlags flags = {});
OracleFactory ablated(OracleFactory factory, AblationFlags flags);

struct SimConfig {
  TerminationMode termination = TerminationMode::threshold;
  int t = 5;               // consecutive invalid-path attempts before giving up
  int t_b = 5;             // zero-bottleneck rerun threshold (cnt_b bound)
  bool ablate_bottleneck = false;  // force the classical bottleneck subroutine
  bool ablate_augment = false;     // force the classical augmentation subroutine
  int runs = 10;           // independent simulation runs per graph
  int threads = 2;
  bool randomize_weights = true;  // fresh weights per path-finding attempt
};

enum class StopReason { no_path, bottleneck_mismatch, rerun_exhausted, augment_mismatch };

std::string stop_reason_name(StopReason r);

struct SimStep {
  Path path;
  int pushed = 0;
};

struct SimulationResult {
  int achieved_flow = 0;
  int optimal_flow = 0;
  bool success = false;
  StopReason reason = StopReason::no_path;
  std::vector<SimStep> steps;
};

// Algorithm-2 loop: path proposal, bottleneck comparison against the real
// minimum (mismatch terminates), zero-bottleneck reruns counted by cnt_b
// against t_b, and augmentation verified edge-wise against the classical
// update before it is applied.
SimulationResult simulate(const ResidualGraph& g, OracleInterface& oracle, const SimConfig& cfg,
                          uint64_t seed);

struct DatasetAccuracy {
  double pair_accuracy = 0.0;       // fraction of (graph, run) successes
  double mean_over_runs = 0.0;      // mean of per-run accuracies (same value)
  double std_over_runs = 0.0;       // std of per-run accuracies
  double mean_flow_error = 0.0;     // mean |achieved - optimal|
  std::vector<double> run_accuracy;
  std::vector<SimulationResult> results;  // graph-major, run-minor
};

DatasetAccuracy accuracy_over_dataset(const std::vector<ResidualGraph>& graphs,
                                      const OracleFactory& factory, const SimConfig& cfg,
                                      uint64_t master_seed);

// Result log rows: graph_id, run, achieved, optimal, success, reason, steps.
void write_result_log(const std::string& path, const DatasetAccuracy& acc, int num_graphs,
                      int runs);

}  // namespace nbm
