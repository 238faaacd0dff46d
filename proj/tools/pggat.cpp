// Command-line harness: instance generation and inspection, policy training
// and evaluation, solver benchmarking, horizon sweeps and ablation tables.
//
// Exit codes: 0 ok, 1 solver failure, 2 configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "pggat/bench.hpp"

namespace fs = std::filesystem;
using namespace pggat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolverFailure = 1;
constexpr int kExitConfigError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct GenArgs {
  std::string family = "euclidean";
  int size = 50;
  std::vector<std::uint64_t> seeds{1};
  double stochastic_fraction = 0.0;
  double horizon = 24.0;
  int cutoff_k = 10;
  bool asymmetric = false;
  std::string out_dir = "instances";
};

int run_gen(const GenArgs& args) {
  const std::string dir = resolve_output_dir(args.out_dir);
  fs::create_directories(dir);
  for (std::uint64_t seed : args.seeds) {
    InstanceSpec inst;
    if (args.family == "euclidean") {
      inst = generate_euclidean(args.size, seed, args.stochastic_fraction, args.horizon,
                                args.cutoff_k);
    } else if (args.family == "road") {
      inst = generate_road_style(args.size, seed, args.stochastic_fraction, args.horizon,
                                 args.cutoff_k, args.asymmetric);
    } else {
      throw ConfigError("unknown family: " + args.family);
    }
    std::ostringstream name;
    name << args.family << "-" << args.size << "-s" << seed << ".pgi";
    const std::string path = (fs::path(dir) / name.str()).string();
    save_instance(inst, path);
    std::cout << path << "\n";
  }
  return kExitOk;
}

int run_inspect(const std::string& path, bool show_matrix) {
  const InstanceSpec inst = load_instance(path);
  const RoutingNetwork& net = inst.network;
  double t_min = 1e300, t_max = 0.0, t_sum = 0.0;
  for (int i = 0; i < net.node_count; ++i) {
    for (int j = 0; j < net.node_count; ++j) {
      if (i == j) continue;
      t_min = std::min(t_min, net.travel_time(i, j));
      t_max = std::max(t_max, net.travel_time(i, j));
      t_sum += net.travel_time(i, j);
    }
  }
  const int off_diag = net.node_count * (net.node_count - 1);
  std::cout << "family              " << inst.family << "\n"
            << "seed                " << inst.seed << "\n"
            << "nodes               " << net.node_count << " (depot " << net.depot << ")\n"
            << "customers           " << inst.customer_count() << "\n"
            << "deterministic       " << inst.deterministic_customers.size() << "\n"
            << "stochastic          " << inst.stochastic_arrivals.size() << "\n"
            << "horizon_u (hours)   " << inst.horizon_U << "\n"
            << "request_cutoff_k    " << inst.request_cutoff_K << "\n"
            << "travel hours        min " << t_min << "  mean " << t_sum / off_diag << "  max "
            << t_max << "\n"
            << "coordinates         " << (net.coordinates.empty() ? "absent" : "present") << "\n"
            << "valid               yes\n";
  if (show_matrix) {
    std::cout << "travel_time\n";
    for (int i = 0; i < net.node_count; ++i) {
      for (int j = 0; j < net.node_count; ++j)
        std::cout << (j ? " " : "") << net.travel_time(i, j);
      std::cout << "\n";
    }
  }
  return kExitOk;
}

int run_train(TrainingConfig cfg, const std::string& resume, const std::string& log_path) {
  cfg.validate();
  if (!cfg.output_dir.empty()) {
    cfg.output_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(cfg.output_dir);
  }
  std::ofstream log_file;
  std::ostream* log = nullptr;
  std::string log_target = log_path;
  if (log_target.empty() && !cfg.output_dir.empty())
    log_target = (fs::path(cfg.output_dir) / "train_log.jsonl").string();
  if (!log_target.empty()) {
    log_file.open(log_target);
    if (!log_file) throw ConfigError("cannot open log file: " + log_target);
    log = &log_file;
  }

  const TrainingReport report = train(cfg, log, resume);
  int applied = 0;
  for (const auto& b : report.batches) applied += b.update_applied ? 1 : 0;
  std::cout << "batches            " << report.batches.size() << "\n"
            << "updates applied    " << applied << "\n";
  if (!report.batches.empty()) {
    std::cout << "first mean return  " << report.batches.front().mean_return << "\n"
              << "last mean return   " << report.batches.back().mean_return << "\n";
    if (report.batches.back().validation_served_pct >= 0.0)
      std::cout << "validation served% " << report.batches.back().validation_served_pct << "\n";
  }
  std::cout << "seconds            " << report.total_seconds << "\n";
  if (!report.final_checkpoint.empty())
    std::cout << "checkpoint         " << report.final_checkpoint << "\n";
  if (!log_target.empty()) std::cout << "log                " << log_target << "\n";
  return kExitOk;
}

int report_experiment(const ExperimentOutput& out) {
  std::cout << out.table.to_text();
  if (!out.records_path.empty()) std::cout << "records " << out.records_path << "\n";
  for (const auto& f : out.failures) std::cerr << "failure: " << f << "\n";
  return out.failures.empty() ? kExitOk : kExitSolverFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PG-GAT-Edge routing workbench for the finite-horizon VRP"};
  app.require_subcommand(1);

  // gen
  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "Generate instance files");
  gen->add_option("--family", gen_args.family, "euclidean | road");
  gen->add_option("--size", gen_args.size, "customer count")->check(CLI::PositiveNumber);
  gen->add_option("--seeds", gen_args.seeds, "instance seeds")->delimiter(',');
  gen->add_option("--stochastic-fraction", gen_args.stochastic_fraction)
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--horizon", gen_args.horizon, "time horizon U in hours");
  gen->add_option("--cutoff-k", gen_args.cutoff_k, "last arrival decision step K");
  gen->add_flag("--asymmetric", gen_args.asymmetric, "directed road times (road family only)");
  gen->add_option("--out", gen_args.out_dir, "output directory");

  // inspect
  std::string inspect_path;
  bool inspect_matrix = false;
  CLI::App* inspect = app.add_subcommand("inspect", "Validate and summarize an instance file");
  inspect->add_option("file", inspect_path, "instance file")->required();
  inspect->add_flag("--matrix", inspect_matrix, "print the travel-time matrix");

  // train
  std::string train_config_path, train_resume, train_log;
  TrainingConfig train_cfg;
  std::string train_family, train_baseline;
  int train_customers = -1, train_batches = -1, train_episodes = -1, train_threads = -1;
  int train_pad = -1, train_k = -1, train_cutoff = -1, train_val_interval = -1;
  double train_lr = -1.0, train_horizon = -1.0, train_horizon_max = -1.0, train_stoch = -1.0;
  std::uint64_t train_seed = 0;
  bool no_edge = false, no_global = false, no_horizon = false;
  std::string train_out;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a policy with REINFORCE");
  train_cmd->add_option("--config", train_config_path, "training config JSON");
  train_cmd->add_option("--family", train_family);
  train_cmd->add_option("--customers", train_customers);
  train_cmd->add_option("--batches", train_batches);
  train_cmd->add_option("--episodes-per-batch", train_episodes);
  train_cmd->add_option("--lr", train_lr);
  train_cmd->add_option("--horizon", train_horizon);
  train_cmd->add_option("--horizon-max", train_horizon_max, "sample U per episode up to this");
  train_cmd->add_option("--stochastic-fraction", train_stoch);
  train_cmd->add_option("--cutoff-k", train_cutoff);
  train_cmd->add_option("--baseline", train_baseline, "none | moving_average");
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--threads", train_threads);
  train_cmd->add_option("--pad-to", train_pad);
  train_cmd->add_option("--k-neighbors", train_k);
  train_cmd->add_option("--validation-interval", train_val_interval);
  train_cmd->add_flag("--no-edge-features", no_edge);
  train_cmd->add_flag("--no-global-embedding", no_global);
  train_cmd->add_flag("--no-horizon-in-embedding", no_horizon);
  train_cmd->add_option("--out", train_out, "output directory for checkpoints and the log");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->add_option("--log", train_log, "JSONL log path");

  // eval
  std::string eval_checkpoint, eval_family = "euclidean", eval_decode = "greedy", eval_out;
  std::vector<int> eval_sizes{8};
  std::vector<std::uint64_t> eval_seeds{1};
  double eval_horizon = 24.0, eval_stoch = 0.0;
  int eval_cutoff = 10, eval_reps = 1;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Decode a trained policy on an instance suite");
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--family", eval_family);
  eval_cmd->add_option("--sizes", eval_sizes)->delimiter(',');
  eval_cmd->add_option("--seeds", eval_seeds)->delimiter(',');
  eval_cmd->add_option("--horizon", eval_horizon);
  eval_cmd->add_option("--stochastic-fraction", eval_stoch);
  eval_cmd->add_option("--cutoff-k", eval_cutoff);
  eval_cmd->add_option("--decode", eval_decode, "greedy | sample");
  eval_cmd->add_option("--repetitions", eval_reps);
  eval_cmd->add_option("--out", eval_out, "output directory (omit to skip files)");

  // bench / sweep-horizon / ablate
  std::string bench_config_path, bench_out;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a solver-comparison experiment");
  bench_cmd->add_option("--config", bench_config_path, "experiment config JSON")->required();
  bench_cmd->add_option("--out", bench_out, "override the output directory");

  std::string sweep_config_path, sweep_out;
  std::vector<double> sweep_values;
  CLI::App* sweep_cmd = app.add_subcommand("sweep-horizon", "Evaluate solvers across horizons");
  sweep_cmd->add_option("--config", sweep_config_path, "experiment config JSON")->required();
  sweep_cmd->add_option("--horizons", sweep_values, "override horizon values")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "override the output directory");

  std::string ablate_config_path, ablate_out;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Compare the four policy variants");
  ablate_cmd->add_option("--config", ablate_config_path, "ablation config JSON")->required();
  ablate_cmd->add_option("--out", ablate_out, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (*gen) return run_gen(gen_args);
    if (*inspect) return run_inspect(inspect_path, inspect_matrix);

    if (*train_cmd) {
      TrainingConfig cfg;
      if (!train_config_path.empty()) cfg = training_config_from_json(read_file(train_config_path));
      if (!train_family.empty()) cfg.family = train_family;
      if (train_customers > 0) cfg.customer_count = train_customers;
      if (train_batches > 0) cfg.total_batches = train_batches;
      if (train_episodes > 0) cfg.episodes_per_batch = train_episodes;
      if (train_lr > 0) cfg.learning_rate = train_lr;
      if (train_horizon > 0) cfg.horizon_U = train_horizon;
      if (train_horizon_max > 0) cfg.horizon_U_max = train_horizon_max;
      if (train_stoch >= 0) cfg.stochastic_fraction = train_stoch;
      if (train_cutoff > 0) cfg.request_cutoff_K = train_cutoff;
      if (!train_baseline.empty()) {
        if (train_baseline == "none")
          cfg.baseline_mode = BaselineMode::none;
        else if (train_baseline == "moving_average")
          cfg.baseline_mode = BaselineMode::moving_average;
        else
          throw ConfigError("unknown baseline mode: " + train_baseline);
      }
      if (train_cmd->count("--seed")) cfg.seed = train_seed;
      if (train_threads >= 0) cfg.threads = train_threads;
      if (train_pad > 0) cfg.policy.pad_to = train_pad;
      if (train_k > 0) cfg.policy.k_neighbors = train_k;
      if (train_val_interval >= 0) cfg.validation_interval = train_val_interval;
      if (no_edge) cfg.policy.use_edge_features = false;
      if (no_global) cfg.policy.use_global_embedding = false;
      if (no_horizon) cfg.policy.use_horizon_in_embedding = false;
      if (!train_out.empty()) cfg.output_dir = train_out;
      return run_train(cfg, train_resume, train_log);
    }

    if (*eval_cmd) {
      ExperimentConfig cfg;
      cfg.family = eval_family;
      cfg.sizes = eval_sizes;
      cfg.seeds = eval_seeds;
      cfg.horizon_U = eval_horizon;
      cfg.stochastic_fraction = eval_stoch;
      cfg.request_cutoff_K = eval_cutoff;
      cfg.repetitions = eval_reps;
      SolverSpec spec;
      spec.name = "policy";
      spec.checkpoint = eval_checkpoint;
      if (eval_decode == "greedy")
        spec.decode = DecodeMode::greedy;
      else if (eval_decode == "sample")
        spec.decode = DecodeMode::sample;
      else
        throw ConfigError("unknown decode mode: " + eval_decode);
      cfg.solvers = {spec};
      cfg.write_files = !eval_out.empty();
      if (!eval_out.empty()) cfg.output_dir = eval_out;
      return report_experiment(run_experiment(cfg));
    }

    if (*bench_cmd) {
      ExperimentConfig cfg = experiment_config_from_json(read_file(bench_config_path));
      if (!bench_out.empty()) cfg.output_dir = bench_out;
      return report_experiment(run_experiment(cfg));
    }

    if (*sweep_cmd) {
      ExperimentConfig cfg = experiment_config_from_json(read_file(sweep_config_path));
      if (!sweep_values.empty()) cfg.horizon_values = sweep_values;
      if (!sweep_out.empty()) cfg.output_dir = sweep_out;
      cfg.validate();
      const SweepOutput out = horizon_sweep(cfg);
      std::cout << out.series_csv;
      if (!out.csv_path.empty()) std::cout << "series " << out.csv_path << "\n";
      return kExitOk;
    }

    if (*ablate_cmd) {
      const auto j = nlohmann::json::parse(read_file(ablate_config_path));
      AblationConfig cfg;
      if (!j.contains("suite")) throw ConfigError("ablation config needs a 'suite' object");
      cfg.suite = experiment_config_from_json(j["suite"].dump());
      const auto& ckpts = j.value("checkpoints", nlohmann::json::object());
      cfg.checkpoint_full = ckpts.value("full", std::string());
      cfg.checkpoint_no_edge = ckpts.value("no_edge_features", std::string());
      cfg.checkpoint_no_global = ckpts.value("no_global_embedding", std::string());
      cfg.checkpoint_no_horizon = ckpts.value("no_horizon_in_embedding", std::string());
      if (!ablate_out.empty()) cfg.suite.output_dir = ablate_out;
      const AblationOutput out = ablation_suite(cfg);
      std::cout << out.table_text;
      std::cout << "manifest " << out.manifest_json << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolverFailure;
  }
  return kExitConfigError;
}
