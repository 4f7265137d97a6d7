// Experiment driver: dataset generation, training, evaluation grids,
// ablations, edge-probability sweeps and training-curve plots.
//
// Exit codes: 0 success, 2 config error, 3 training failure, 4 data error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nbm/kvconfig.hpp"
#include "nbm/simulator.hpp"
#include "nbm/trainer.hpp"

namespace fs = std::filesystem;
using namespace nbm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitData = 4;

struct CellResult {
  std::string model, heuristic, scale;
  double mean = 0, stddev = 0, pair = 0, flow_error = 0;
};

void write_table(const std::string& path, const std::vector<CellResult>& cells, uint64_t seed) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "# seed " << seed << "\n";
  os << "model,heuristic,scale,accuracy_mean,accuracy_std,pair_accuracy,mean_flow_error\n";
  os.precision(6);
  for (const auto& c : cells)
    os << c.model << ',' << c.heuristic << ',' << c.scale << ',' << c.mean << ',' << c.stddev
       << ',' << c.pair << ',' << c.flow_error << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

TrainConfig train_config_from(const KvConfig& cfg, uint64_t seed_flag) {
  TrainConfig tc;
  tc.learning_rate = cfg.get("learning_rate", tc.learning_rate);
  tc.batch_size = cfg.get("batch_size", tc.batch_size);
  tc.patience = cfg.get("patience", tc.patience);
  tc.max_epochs = cfg.get("max_epochs", tc.max_epochs);
  tc.seed = static_cast<uint64_t>(cfg.get("seed", static_cast<long long>(seed_flag)));
  tc.processor = processor_from_name(cfg.get("processor", std::string("mpnn")));
  tc.w_pred = cfg.get("w_pred", tc.w_pred);
  tc.w_dist = cfg.get("w_dist", tc.w_dist);
  tc.w_term = cfg.get("w_term", tc.w_term);
  tc.w_reach = cfg.get("w_reach", tc.w_reach);
  tc.w_bottleneck = cfg.get("w_bottleneck", tc.w_bottleneck);
  tc.w_capacity = cfg.get("w_capacity", tc.w_capacity);
  tc.use_variety = cfg.get("use_variety", tc.processor == Processor::pna_no_std);
  tc.long_path_oversample = cfg.get("long_path_oversample", tc.long_path_oversample);
  tc.redraw_weights = cfg.get("redraw_weights", tc.redraw_weights);
  tc.sim_eval_every = cfg.get("sim_eval_every", tc.sim_eval_every);
  tc.sim_eval_runs = cfg.get("sim_eval_runs", tc.sim_eval_runs);
  tc.threads = cfg.get("threads", tc.threads);
  return tc;
}

int run_gen(const std::string& config_path, const std::string& out_dir, uint64_t seed) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
  const uint64_t master = static_cast<uint64_t>(cfg.get("seed", static_cast<long long>(seed)));
  const std::string recipe = cfg.get("recipe", std::string("default"));
  std::vector<DatasetSpec> specs;
  if (recipe == "default") specs = default_recipe(master);
  else if (recipe == "sweep_p") specs = sweep_p_recipe(master);
  else {
    std::cerr << "unknown recipe: " << recipe << "\n";
    return kExitConfig;
  }
  try {
    Manifest m = build_datasets(specs, out_dir, master);
    std::cout << "wrote " << m.entries.size() << " datasets under " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

int run_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, uint64_t seed) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
  TrainConfig tc = train_config_from(cfg, seed);
  TrainData data;
  try {
    data = load_train_data(read_manifest(manifest_path));
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  try {
    fs::create_directories(out_dir);
    TrainResult result = train(tc, data);
    const std::string ckpt_path =
        (fs::path(out_dir) / (processor_name(tc.processor) + ".ckpt")).string();
    save_checkpoint(ckpt_path, result.best);
    write_history_csv((fs::path(out_dir) / "history.csv").string(), result.history);
    std::cout << "checkpoint " << ckpt_path << " (epoch " << result.best.epoch
              << ", val last-step predecessor accuracy " << result.best.val_last_step_pred_acc
              << ")\n";
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

std::vector<std::pair<std::string, std::vector<ResidualGraph>>> load_scales(
    const Manifest& manifest, const std::vector<std::string>& wanted) {
  std::vector<std::pair<std::string, std::vector<ResidualGraph>>> sets;
  for (const auto& name : wanted) {
    const ManifestEntry* e = manifest.find("test_" + name);
    if (!e) {
      std::cerr << "warning: no test set for scale " << name << ", skipping\n";
      continue;
    }
    sets.emplace_back(name, read_graph_file(e->path));
  }
  return sets;
}

int run_eval(const std::string& config_path, const std::string& manifest_path,
             const std::string& checkpoint_path, const std::string& out_dir, uint64_t seed) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
  try {
    const Manifest manifest = read_manifest(manifest_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::string model = processor_name(ckpt.params.processor);
    auto scales = load_scales(manifest, split_list(cfg.get("scales", std::string("1x,2x,4x,8x"))));
    if (scales.empty()) {
      std::cerr << "no test sets found\n";
      return kExitData;
    }
    SimConfig sc;
    sc.runs = cfg.get("runs", 10);
    sc.t_b = cfg.get("t_b", 5);
    sc.threads = cfg.get("threads", 2);
    const uint64_t eval_seed = static_cast<uint64_t>(cfg.get("seed", static_cast<long long>(seed)));
    fs::create_directories(out_dir);

    std::vector<CellResult> cells;
    auto run_cell = [&](const std::string& model_name, const std::string& heuristic,
                        const OracleFactory& factory, TerminationMode mode, int t,
                        const std::string& scale, const std::vector<ResidualGraph>& graphs) {
      SimConfig cell_cfg = sc;
      cell_cfg.termination = mode;
      cell_cfg.t = t;
      DatasetAccuracy acc = accuracy_over_dataset(graphs, factory, cell_cfg,
                                                  mix_seed(eval_seed, cells.size()));
      cells.push_back({model_name, heuristic, scale, acc.mean_over_runs, acc.std_over_runs,
                       acc.pair_accuracy, acc.mean_flow_error});
      write_result_log((fs::path(out_dir) /
                        ("log_" + model_name + "_" + heuristic + "_" + scale + ".csv")).string(),
                       acc, static_cast<int>(graphs.size()), cell_cfg.runs);
      std::cout << model_name << "(" << heuristic << ") " << scale << ": "
                << acc.mean_over_runs * 100 << "% +- " << acc.std_over_runs * 100 << "%\n";
    };

    for (const auto& [scale, graphs] : scales) {
      for (const std::string& ts : split_list(cfg.get("thresholds", std::string("1,3,5")))) {
        const int t = std::stoi(ts);
        run_cell(model, "t=" + ts, neural_oracle_factory(&ckpt.params, TerminationMode::threshold),
                 TerminationMode::threshold, t, scale, graphs);
      }
      if (cfg.get("include_bfs", true))
        run_cell(model, "bfs", neural_oracle_factory(&ckpt.params, TerminationMode::bfs),
                 TerminationMode::bfs, sc.t, scale, graphs);
      if (cfg.get("include_classical", true))
        run_cell("classical", "t=1", classical_oracle_factory(), TerminationMode::threshold, 1,
                 scale, graphs);
    }
    write_table((fs::path(out_dir) / "table1.csv").string(), cells, eval_seed);
  } catch (const std::exception& e) {
    std::cerr << "eval failed: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& manifest_path,
               const std::string& checkpoint_path, const std::string& out_dir, uint64_t seed) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
  try {
    const Manifest manifest = read_manifest(manifest_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::string model = processor_name(ckpt.params.processor);
    auto scales = load_scales(manifest, split_list(cfg.get("scales", std::string("1x,2x,4x,8x"))));
    SimConfig sc;
    sc.termination = TerminationMode::bfs;
    sc.runs = cfg.get("runs", 10);
    sc.t_b = cfg.get("t_b", 5);
    sc.threads = cfg.get("threads", 2);
    const uint64_t eval_seed = static_cast<uint64_t>(cfg.get("seed", static_cast<long long>(seed)));
    fs::create_directories(out_dir);

    const std::pair<std::string, AblationFlags> variants[] = {
        {"bfs", {}},
        {"bfs-bottle", {.classical_bottleneck = true}},
        {"bfs-augment", {.classical_augment = true}},
        {"bfs-augment-bottle", {.classical_bottleneck = true, .classical_augment = true}},
    };
    std::vector<CellResult> cells;
    for (const auto& [scale, graphs] : scales)
      for (const auto& [name, flags] : variants) {
        DatasetAccuracy acc = accuracy_over_dataset(
            graphs, neural_oracle_factory(&ckpt.params, TerminationMode::bfs, flags), sc,
            mix_seed(eval_seed, cells.size()));
        cells.push_back({model, name, scale, acc.mean_over_runs, acc.std_over_runs,
                         acc.pair_accuracy, acc.mean_flow_error});
        std::cout << model << "(" << name << ") " << scale << ": " << acc.mean_over_runs * 100
                  << "% +- " << acc.std_over_runs * 100 << "%\n";
      }
    write_table((fs::path(out_dir) / "table2.csv").string(), cells, eval_seed);
  } catch (const std::exception& e) {
    std::cerr << "ablation failed: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

int run_sweep_p(const std::string& config_path, const std::string& manifest_path,
                const std::string& checkpoint_path, const std::string& out_dir, uint64_t seed) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::from_file(config_path);
  try {
    const Manifest manifest = read_manifest(manifest_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::string model = processor_name(ckpt.params.processor);
    SimConfig sc;
    sc.runs = cfg.get("runs", 10);
    sc.t_b = cfg.get("t_b", 5);
    sc.threads = cfg.get("threads", 2);
    const uint64_t eval_seed = static_cast<uint64_t>(cfg.get("seed", static_cast<long long>(seed)));
    fs::create_directories(out_dir);

    std::vector<CellResult> cells;
    for (const std::string scale : {"1x", "2x"})
      for (const std::string p : {"p20", "p50", "p75"}) {
        const ManifestEntry* e = manifest.find("test_" + p + "_" + scale);
        if (!e) {
          std::cerr << "warning: missing sweep set " << p << " " << scale << ", skipping\n";
          continue;
        }
        const auto graphs = read_graph_file(e->path);
        for (const auto& heuristic : {std::string("t=5"), std::string("bfs")}) {
          SimConfig cell_cfg = sc;
          cell_cfg.termination =
              heuristic == "bfs" ? TerminationMode::bfs : TerminationMode::threshold;
          cell_cfg.t = 5;
          DatasetAccuracy acc = accuracy_over_dataset(
              graphs, neural_oracle_factory(&ckpt.params, cell_cfg.termination), cell_cfg,
              mix_seed(eval_seed, cells.size()));
          cells.push_back({model, heuristic, scale + "/" + p, acc.mean_over_runs,
                           acc.std_over_runs, acc.pair_accuracy, acc.mean_flow_error});
          std::cout << model << "(" << heuristic << ") " << scale << " " << p << ": "
                    << acc.mean_over_runs * 100 << "% +- " << acc.std_over_runs * 100 << "%\n";
        }
      }
    write_table((fs::path(out_dir) / "table3.csv").string(), cells, eval_seed);
  } catch (const std::exception& e) {
    std::cerr << "sweep failed: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

// Minimal SVG line plot: per-epoch max-flow accuracy (solid) and mean
// absolute flow error (dashed).
void write_curves_svg(const std::string& path, const std::string& label,
                      const std::vector<std::pair<int, double>>& acc,
                      const std::vector<std::pair<int, double>>& err) {
  const int w = 640, h = 400, ml = 50, mr = 20, mt = 30, mb = 40;
  int max_epoch = 1;
  double max_err = 1e-9;
  for (auto& [e, v] : acc) max_epoch = std::max(max_epoch, e);
  for (auto& [e, v] : err) {
    max_epoch = std::max(max_epoch, e);
    max_err = std::max(max_err, v);
  }
  auto x_of = [&](double e) { return ml + (w - ml - mr) * (e - 1) / std::max(1, max_epoch - 1); };
  auto y_acc = [&](double v) { return mt + (h - mt - mb) * (1.0 - v); };
  auto y_err = [&](double v) { return mt + (h - mt - mb) * (1.0 - v / max_err); };
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>" << label
     << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
     << "' stroke='black'/>\n";
  os << "<text x='" << w / 2 << "' y='" << h - 10
     << "' text-anchor='middle' font-size='12'>epoch</text>\n";
  auto polyline = [&](const std::vector<std::pair<int, double>>& pts, auto y_of,
                      const char* color, bool dashed) {
    if (pts.empty()) return;
    os << "<polyline fill='none' stroke='" << color << "'";
    if (dashed) os << " stroke-dasharray='6,4'";
    os << " points='";
    for (auto& [e, v] : pts) os << x_of(e) << ',' << y_of(v) << ' ';
    os << "'/>\n";
  };
  polyline(acc, y_acc, "#1f77b4", false);
  polyline(err, y_err, "#d62728", true);
  os << "<text x='" << w - mr << "' y='" << mt + 12
     << "' text-anchor='end' font-size='11' fill='#1f77b4'>accuracy (solid)</text>\n";
  os << "<text x='" << w - mr << "' y='" << mt + 26
     << "' text-anchor='end' font-size='11' fill='#d62728'>flow error (dashed, max " << max_err
     << ")</text>\n";
  os << "</svg>\n";
}

int run_plot(const std::vector<std::string>& history_paths, const std::string& out_dir) {
  if (history_paths.empty()) {
    std::cerr << "plot: no history files\n";
    return kExitConfig;
  }
  try {
    fs::create_directories(out_dir);
    for (const auto& hp : history_paths) {
      const auto rows = read_history_csv(hp);
      std::vector<std::pair<int, double>> acc, err;
      for (const auto& r : rows) {
        if (r.task != "maxflow" || r.split != "val") continue;
        if (r.metric == "accuracy") acc.emplace_back(r.epoch, r.value);
        else if (r.metric == "flow_error") err.emplace_back(r.epoch, r.value);
      }
      if (acc.empty() && err.empty())
        throw std::runtime_error(hp + " has no per-epoch max-flow rows");
      const std::string stem = fs::path(hp).stem().string();
      write_curves_svg((fs::path(out_dir) / (stem + "_curves.svg")).string(), stem, acc, err);
      std::cout << "wrote " << (fs::path(out_dir) / (stem + "_curves.svg")).string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "plot failed: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural max-flow executor: experiments"};
  app.require_subcommand(1);

  std::string config, manifest, checkpoint, out = "out";
  uint64_t seed = 1;
  std::vector<std::string> histories;

  auto add_common = [&](CLI::App* cmd, bool with_manifest, bool with_checkpoint) {
    cmd->add_option("--config", config, "key = value config file");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "master seed");
    if (with_manifest) cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    if (with_checkpoint)
      cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  };

  CLI::App* gen = app.add_subcommand("gen", "generate datasets");
  add_common(gen, false, false);
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, true, false);
  CLI::App* eval = app.add_subcommand("eval", "max-flow accuracy grid");
  add_common(eval, true, true);
  CLI::App* ablate = app.add_subcommand("ablate", "subroutine ablation grid");
  add_common(ablate, true, true);
  CLI::App* sweep = app.add_subcommand("sweep-p", "edge-probability sweep");
  add_common(sweep, true, true);
  CLI::App* plot = app.add_subcommand("plot", "training-curve plots");
  plot->add_option("--history", histories, "history csv (repeatable)")->required();
  plot->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (gen->parsed()) return run_gen(config, out, seed);
  if (train->parsed()) return run_train(config, manifest, out, seed);
  if (eval->parsed()) return run_eval(config, manifest, checkpoint, out, seed);
  if (ablate->parsed()) return run_ablate(config, manifest, checkpoint, out, seed);
  if (sweep->parsed()) return run_sweep_p(config, manifest, checkpoint, out, seed);
  if (plot->parsed()) return run_plot(histories, out);
  return kExitConfig;
}
