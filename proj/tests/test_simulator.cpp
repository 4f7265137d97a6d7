#include <doctest.h>

#include <random>

#include <fstream>

#include "nbm/simulator.hpp"
#include "support.hpp"

using namespace nbm;
using nbm::test::two_path_graph;

namespace {

// Deterministic misbehaving oracles for protocol tests.
class FailingOracle : public OracleInterface {
 public:
  int calls = 0;
  PathProposal find_path(const ResidualGraph&) override {
    ++calls;
    return {true, std::nullopt};  // always proposes garbage
  }
  int find_bottleneck(const ResidualGraph& g, const Path& p) override { return bottleneck(g, p); }
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override {
    augment(g, p, amount);
  }
};

// Always proposes a fixed (saturated) path and detects its zero bottleneck.
class ZeroBottleneckOracle : public OracleInterface {
 public:
  explicit ZeroBottleneckOracle(Path path) : path_(std::move(path)) {}
  int calls = 0;
  PathProposal find_path(const ResidualGraph&) override {
    ++calls;
    return {true, path_};
  }
  int find_bottleneck(const ResidualGraph& g, const Path& p) override { return bottleneck(g, p); }
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override {
    augment(g, p, amount);
  }

 private:
  Path path_;
};

class WrongBottleneckOracle : public ClassicalOracle {
 public:
  int find_bottleneck(const ResidualGraph& g, const Path& p) override {
    return ClassicalOracle::find_bottleneck(g, p) + 1;
  }
};

class CorruptAugmentOracle : public ClassicalOracle {
 public:
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override {
    ClassicalOracle::subtract_bottleneck(g, p, amount);
    g.edges[p.edge_indices[0]].cap += 1;  // break the update
  }
};

// Random garbage path proposals; used for the feasibility property.
class AdversarialOracle : public OracleInterface {
 public:
  explicit AdversarialOracle(uint64_t seed) : rng_(seed) {}
  PathProposal find_path(const ResidualGraph& g) override {
    if (rng_() % 8 == 0) return {false, std::nullopt};
    std::vector<int> pred(g.n);
    for (int v = 0; v < g.n; ++v) pred[v] = static_cast<int>(rng_() % g.n);
    return {true, extract_path(pred, g.src, g.sink, g)};
  }
  int find_bottleneck(const ResidualGraph& g, const Path& p) override {
    const int real = bottleneck(g, p);
    return rng_() % 4 == 0 ? real + 1 : real;
  }
  void subtract_bottleneck(ResidualGraph& g, const Path& p, int amount) override {
    augment(g, p, amount);
    if (rng_() % 4 == 0 && !p.edge_indices.empty()) {
      Edge& e = g.edges[p.edge_indices[0]];
      Edge& pair = g.edges[e.pair];
      if (e.cap > 0) {
        e.cap -= 1;
        pair.cap += 1;  // pair-sum preserving corruption
      }
    }
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

TEST_CASE("classical oracle reproduces the reference run") {
  std::mt19937_64 rng(1);
  SimConfig cfg;
  cfg.t = 5;
  for (int trial = 0; trial < 10; ++trial) {
    ResidualGraph g = gen_bipartite(6, 0.3, rng);
    ClassicalOracle oracle;
    SimulationResult r = simulate(g, oracle, cfg, 42 + trial);
    CHECK(r.success);
    CHECK(r.achieved_flow == r.optimal_flow);
    CHECK(r.reason == StopReason::no_path);
    // perfect-oracle equivalence: flow contribution per step matches
    const FordFulkersonResult ref = ford_fulkerson_reference(g);
    REQUIRE(r.steps.size() == ref.steps.size());
    for (size_t i = 0; i < r.steps.size(); ++i)
      CHECK(r.steps[i].pushed == ref.steps[i].bottleneck);
  }
}

TEST_CASE("classical oracle on both termination modes of the example graph") {
  for (TerminationMode mode : {TerminationMode::threshold, TerminationMode::bfs}) {
    SimConfig cfg;
    cfg.termination = mode;
    ClassicalOracle oracle;
    SimulationResult r = simulate(two_path_graph(), oracle, cfg, 7);
    CHECK(r.success);
    CHECK(r.achieved_flow == 2);
  }
}

TEST_CASE("failing oracle terminates with zero flow and the exact attempt bound") {
  SimConfig cfg;
  cfg.termination = TerminationMode::threshold;
  cfg.t = 4;
  FailingOracle oracle;
  SimulationResult r = simulate(two_path_graph(), oracle, cfg, 3);
  CHECK(r.achieved_flow == 0);
  CHECK_FALSE(r.success);  // optimal is 2
  CHECK(r.reason == StopReason::no_path);
  CHECK(oracle.calls == 4);  // exactly t consecutive invalid attempts

  SUBCASE("success iff the optimum is zero") {
    ResidualGraph empty;
    empty.n = 3;
    empty.src = 0;
    empty.sink = 2;
    empty.add_pair(1, 2, 1);
    empty.finalize();
    FailingOracle o2;
    SimulationResult r2 = simulate(empty, o2, cfg, 3);
    CHECK(r2.achieved_flow == 0);
    CHECK(r2.success);
  }
}

TEST_CASE("zero-bottleneck reruns are bounded by t_b") {
  ResidualGraph g = two_path_graph();
  Path bottom = nbm::test::path_through(g, {0, 2, 4, 5});
  augment(g, bottom, 1);  // saturate the proposed path
  SimConfig cfg;
  cfg.termination = TerminationMode::bfs;
  cfg.t_b = 3;
  ZeroBottleneckOracle oracle(bottom);
  SimulationResult r = simulate(g, oracle, cfg, 5);
  CHECK(r.reason == StopReason::rerun_exhausted);
  CHECK(oracle.calls == 3);  // up to t_b path-finding reruns
  CHECK(r.achieved_flow == 1);  // only the pre-existing unit of flow
  CHECK_FALSE(r.success);       // one more path was available
}

TEST_CASE("bottleneck mismatch terminates instantly") {
  SimConfig cfg;
  WrongBottleneckOracle oracle;
  SimulationResult r = simulate(two_path_graph(), oracle, cfg, 9);
  CHECK(r.reason == StopReason::bottleneck_mismatch);
  CHECK(r.achieved_flow == 0);
  CHECK(r.steps.empty());
}

TEST_CASE("corrupted augmentation is rejected before it is applied") {
  SimConfig cfg;
  CorruptAugmentOracle oracle;
  SimulationResult r = simulate(two_path_graph(), oracle, cfg, 10);
  CHECK(r.reason == StopReason::augment_mismatch);
  CHECK(r.achieved_flow == 0);  // the corrupt update never lands
}

TEST_CASE("-augment ablation silences augment mismatches") {
  SimConfig cfg;
  AblatedOracle oracle(std::make_unique<CorruptAugmentOracle>(),
                       {.classical_augment = true});
  SimulationResult r = simulate(two_path_graph(), oracle, cfg, 11);
  CHECK(r.success);
  CHECK(r.achieved_flow == 2);

  SUBCASE("the SimConfig switch behaves identically") {
    SimConfig flagged;
    flagged.ablate_augment = true;
    CorruptAugmentOracle bad;
    SimulationResult r2 = simulate(two_path_graph(), bad, flagged, 11);
    CHECK(r2.success);
    CHECK(r2.achieved_flow == 2);
  }
}

TEST_CASE("ablating everything on the classical oracle changes nothing") {
  std::mt19937_64 rng(12);
  ResidualGraph g = gen_bipartite(5, 0.4, rng);
  SimConfig cfg;
  ClassicalOracle plain;
  AblatedOracle full(std::make_unique<ClassicalOracle>(),
                     {.classical_bottleneck = true, .classical_augment = true});
  SimulationResult a = simulate(g, plain, cfg, 13);
  SimulationResult b = simulate(g, full, cfg, 13);
  CHECK(a.achieved_flow == b.achieved_flow);
  CHECK(a.steps.size() == b.steps.size());
  CHECK(a.success == b.success);
}

TEST_CASE("feasibility holds under an adversarial oracle") {
  std::mt19937_64 rng(14);
  SimConfig cfg;
  cfg.termination = TerminationMode::bfs;
  for (int trial = 0; trial < 100; ++trial) {
    ResidualGraph g = gen_bipartite(4 + static_cast<int>(rng() % 4), 0.4, rng);
    AdversarialOracle oracle(trial);
    SimulationResult r = simulate(g, oracle, cfg, trial);
    CHECK(r.achieved_flow <= r.optimal_flow);
    CHECK(r.achieved_flow >= 0);
  }
}

TEST_CASE("accuracy_over_dataset with the classical oracle is exact") {
  std::mt19937_64 rng(15);
  std::vector<ResidualGraph> graphs;
  for (int i = 0; i < 8; ++i) graphs.push_back(gen_bipartite(6, 0.3, rng));
  SimConfig cfg;
  cfg.runs = 4;
  cfg.threads = 2;
  DatasetAccuracy acc = accuracy_over_dataset(graphs, classical_oracle_factory(), cfg, 99);
  CHECK(acc.pair_accuracy == 1.0);
  CHECK(acc.mean_over_runs == 1.0);
  CHECK(acc.std_over_runs == 0.0);
  CHECK(acc.mean_flow_error == 0.0);
  CHECK(acc.results.size() == graphs.size() * 4);
}

TEST_CASE("result log rows follow the documented shape") {
  std::mt19937_64 rng(16);
  std::vector<ResidualGraph> graphs{gen_bipartite(4, 0.5, rng)};
  SimConfig cfg;
  cfg.runs = 2;
  DatasetAccuracy acc = accuracy_over_dataset(graphs, classical_oracle_factory(), cfg, 1);
  const std::string path = "/tmp/nbm_test_log.csv";
  write_result_log(path, acc, 1, 2);
  std::ifstream is(path);
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "graph_id,run,achieved,optimal,success,reason,steps");
  int rows = 0;
  while (std::getline(is, row)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("neural oracle plumbing stays structurally sound untrained") {
  // an untrained network must never crash the simulator, only lose
  ModelParameters params = ModelParameters::init(Processor::mpnn_max, 17);
  std::mt19937_64 rng(18);
  ResidualGraph g = gen_bipartite(4, 0.5, rng);
  for (TerminationMode mode : {TerminationMode::threshold, TerminationMode::bfs}) {
    SimConfig cfg;
    cfg.termination = mode;
    cfg.t = 2;
    cfg.t_b = 2;
    auto oracle = neural_oracle_factory(&params, mode)();
    SimulationResult r = simulate(g, *oracle, cfg, 19);
    CHECK(r.achieved_flow <= r.optimal_flow);
  }
}
