#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pggat/baselines.hpp"
#include "pggat/reinforce.hpp"

namespace pggat {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverSpec {
  std::string name;        // oracle | greedy | random | ga | vns | policy
  std::string checkpoint;  // policy only
  DecodeMode decode = DecodeMode::greedy;
  std::string policy_label;  // optional display label for policy rows
  GaOptions ga;
  VnsOptions vns;

  std::string label() const;
};

struct ExperimentConfig {
  std::string family = "euclidean";
  std::vector<int> sizes;
  std::vector<std::uint64_t> seeds;
  double stochastic_fraction = 0.0;
  double horizon_U = 24.0;
  int request_cutoff_K = 10;
  int repetitions = 1;
  std::vector<SolverSpec> solvers;
  std::vector<double> horizon_values;  // sweep only
  std::string output_dir = "bench_out";
  bool write_files = true;

  void validate() const;  // throws ConfigError
};

ExperimentConfig experiment_config_from_json(const std::string& text);

// Applies the PGGAT_OUTPUT_ROOT environment variable to relative paths.
std::string resolve_output_dir(const std::string& dir);

struct RawRecord {
  std::string solver;
  std::string family;
  int size = 0;
  std::uint64_t seed = 0;
  int rep = 0;
  int served = 0;
  int customers = 1;
  double served_pct = 0.0;
  double travel_hours = 0.0;
  bool feasible = false;
  bool clairvoyant = false;
  std::vector<int> route;

  std::string to_json() const;
  static RawRecord parse(const std::string& line);
};

struct TimingRecord {
  std::string solver;
  int size = 0;
  std::uint64_t seed = 0;
  int rep = 0;
  double seconds = 0.0;
};

struct ResultRow {
  std::string solver;
  std::string family;
  int size = 0;
  int n = 0;
  double served_pct_mean = 0.0;
  double served_pct_std = 0.0;
  double seconds_mean = 0.0;
  double feasibility_rate = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::string to_text() const;
  std::string to_csv() const;
};

struct ExperimentOutput {
  ResultTable table;
  std::vector<RawRecord> records;
  std::vector<TimingRecord> timings;
  std::vector<std::string> failures;
  std::string records_path;  // set when files were written
  std::string table_path;
};

// Runs every configured solver over the generated instance grid, verifies
// each result by replaying its route, aggregates the service-rate and
// decision-time table, and re-derives the aggregates from the raw records
// before returning.
ExperimentOutput run_experiment(const ExperimentConfig& config);

struct SweepOutput {
  std::vector<double> horizons;
  std::vector<ResultTable> tables;  // aligned with horizons
  std::string series_csv;           // series,u_hours,served_pct_mean,n
  std::string csv_path;
};

// Re-derives the instance grid at each horizon value (same seeds) and
// evaluates the configured solvers, producing plot-ready series data.
SweepOutput horizon_sweep(const ExperimentConfig& config);

struct AblationConfig {
  ExperimentConfig suite;  // solver list is ignored; the checkpoints drive the rows
  std::string checkpoint_full;
  std::string checkpoint_no_edge;
  std::string checkpoint_no_global;
  std::string checkpoint_no_horizon;
};

struct AblationRow {
  std::string variant;
  int n = 0;
  double served_pct_mean = 0.0;
  double ci_halfwidth = 0.0;  // 1.96 * std / sqrt(n)
};

struct AblationOutput {
  std::vector<AblationRow> rows;
  std::string table_text;
  std::string manifest_json;  // shared suite seeds + full-model config hash
};

// Greedy-decodes the four policy variants on one shared held-out suite.
// A missing or mis-flagged checkpoint raises a ConfigError naming the
// variant.
AblationOutput ablation_suite(const AblationConfig& config);

void write_text_file(const std::string& path, const std::string& content);

// Returns the record count; throws on any schema violation.
int validate_records_file(const std::string& path);

}  // namespace pggat
