#include "pggat/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "pggat/stats.hpp"

namespace pggat {

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kKnownSolvers[] = {"oracle", "greedy", "random", "ga", "vns", "policy"};

bool known_solver(const std::string& name) {
  for (const char* s : kKnownSolvers)
    if (name == s) return true;
  return false;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string SolverSpec::label() const {
  if (name == "policy") return policy_label.empty() ? "policy" : policy_label;
  return name;
}

void ExperimentConfig::validate() const {
  if (family != "euclidean" && family != "road") throw ConfigError("unknown family: " + family);
  if (sizes.empty()) throw ConfigError("at least one instance size is required");
  for (int s : sizes)
    if (s < 1) throw ConfigError("instance sizes must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one instance seed is required");
  if (stochastic_fraction < 0.0 || stochastic_fraction > 1.0)
    throw ConfigError("stochastic_fraction must be in [0,1]");
  if (!(horizon_U > 0.0)) throw ConfigError("horizon_u must be positive");
  if (request_cutoff_K < 1) throw ConfigError("cutoff_k must be >= 1");
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (solvers.empty()) throw ConfigError("at least one solver is required");
  std::set<std::string> labels;
  for (const auto& s : solvers) {
    if (!known_solver(s.name)) throw ConfigError("unknown solver: " + s.name);
    if (s.name == "policy") {
      if (s.checkpoint.empty()) throw ConfigError("policy solver requires a checkpoint path");
      if (!std::filesystem::exists(s.checkpoint))
        throw ConfigError("checkpoint does not exist: " + s.checkpoint);
    }
    if (!labels.insert(s.label()).second) throw ConfigError("duplicate solver label: " + s.label());
  }
  for (std::size_t i = 1; i < horizon_values.size(); ++i)
    if (!(horizon_values[i] > horizon_values[i - 1]))
      throw ConfigError("horizon sweep values must be strictly increasing");
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    c.family = j.value("family", c.family);
    c.sizes = j.value("sizes", c.sizes);
    c.seeds = j.value("seeds", c.seeds);
    c.stochastic_fraction = j.value("stochastic_fraction", c.stochastic_fraction);
    c.horizon_U = j.value("horizon_u", c.horizon_U);
    c.request_cutoff_K = j.value("cutoff_k", c.request_cutoff_K);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.horizon_values = j.value("horizon_values", c.horizon_values);
    if (j.contains("solvers")) {
      c.solvers.clear();
      for (const auto& js : j["solvers"]) {
        SolverSpec s;
        s.name = js.value("name", std::string());
        s.checkpoint = js.value("checkpoint", std::string());
        s.policy_label = js.value("label", std::string());
        const std::string decode = js.value("decode", std::string("greedy"));
        if (decode == "greedy")
          s.decode = DecodeMode::greedy;
        else if (decode == "sample")
          s.decode = DecodeMode::sample;
        else
          throw ConfigError("unknown decode mode: " + decode);
        s.ga.population = js.value("population", s.ga.population);
        s.ga.generations = js.value("generations", s.ga.generations);
        s.ga.mutation_rate = js.value("mutation_rate", s.ga.mutation_rate);
        s.vns.max_iterations = js.value("max_iterations", s.vns.max_iterations);
        s.vns.k_max = js.value("k_max", s.vns.k_max);
        c.solvers.push_back(std::move(s));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

std::string resolve_output_dir(const std::string& dir) {
  if (dir.empty()) return dir;
  std::filesystem::path p(dir);
  if (p.is_absolute()) return dir;
  const char* root = std::getenv("PGGAT_OUTPUT_ROOT");
  if (!root || !*root) return dir;
  return (std::filesystem::path(root) / p).string();
}

std::string RawRecord::to_json() const {
  nlohmann::json j;
  j["solver"] = solver;
  j["family"] = family;
  j["size"] = size;
  j["seed"] = seed;
  j["rep"] = rep;
  j["served"] = served;
  j["customers"] = customers;
  j["served_pct"] = served_pct;
  j["travel_hours"] = travel_hours;
  j["feasible"] = feasible;
  j["clairvoyant"] = clairvoyant;
  j["route"] = route;
  return j.dump();
}

RawRecord RawRecord::parse(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  RawRecord r;
  r.solver = j.at("solver").get<std::string>();
  r.family = j.at("family").get<std::string>();
  r.size = j.at("size").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rep = j.at("rep").get<int>();
  r.served = j.at("served").get<int>();
  r.customers = j.at("customers").get<int>();
  r.served_pct = j.at("served_pct").get<double>();
  r.travel_hours = j.at("travel_hours").get<double>();
  r.feasible = j.at("feasible").get<bool>();
  r.clairvoyant = j.at("clairvoyant").get<bool>();
  r.route = j.at("route").get<std::vector<int>>();
  return r;
}

std::string ResultTable::to_text() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %-10s %6s %6s %12s %10s %12s %8s\n", "solver", "family",
                "size", "n", "served%%", "std", "mean_sec", "feas%%");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %-10s %6d %6d %12.2f %10.2f %12.6f %8.1f\n",
                  r.solver.c_str(), r.family.c_str(), r.size, r.n, r.served_pct_mean,
                  r.served_pct_std, r.seconds_mean, 100.0 * r.feasibility_rate);
    out << buf;
  }
  return out.str();
}

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  out << "solver,family,size,n,served_pct_mean,served_pct_std,seconds_mean,feasibility_rate\n";
  for (const auto& r : rows) {
    out << r.solver << "," << r.family << "," << r.size << "," << r.n << "," << r.served_pct_mean
        << "," << r.served_pct_std << "," << r.seconds_mean << "," << r.feasibility_rate << "\n";
  }
  return out.str();
}

namespace {

struct LoadedPolicy {
  PolicyConfig config;
  std::shared_ptr<PolicyParameters> params;
};

SolverResult trajectory_result(const Trajectory& traj, const InstanceSpec& inst) {
  SolverResult r;
  r.route = traj.route(inst.network.depot);
  r.served_count = traj.served_count;
  r.total_travel = traj.total_travel;
  r.feasible = traj.feasible && traj.terminal_kind != TerminalKind::horizon_violated;
  return r;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  config.validate();
  const bool stochastic = config.stochastic_fraction > 0.0;

  std::map<std::string, LoadedPolicy> checkpoints;
  for (const auto& spec : config.solvers) {
    if (spec.name != "policy" || checkpoints.count(spec.checkpoint)) continue;
    Checkpoint ckpt = load_checkpoint(spec.checkpoint);
    checkpoints[spec.checkpoint] = {
        ckpt.config, std::make_shared<PolicyParameters>(std::move(ckpt.params))};
  }

  ExperimentOutput out;
  for (const auto& spec : config.solvers) {
    for (int size : config.sizes) {
      std::vector<double> served_pcts, seconds;
      int feasible_count = 0;
      for (std::uint64_t seed : config.seeds) {
        InstanceSpec inst;
        try {
          inst = make_family_instance(config.family, size, seed, config.stochastic_fraction,
                                      config.horizon_U, config.request_cutoff_K);
        } catch (const std::exception& e) {
          out.failures.push_back("instance " + config.family + "-" + std::to_string(size) + "-s" +
                                 std::to_string(seed) + ": " + e.what());
          continue;
        }
        if (stochastic && (spec.name == "ga" || spec.name == "vns")) continue;

        for (int rep = 0; rep < config.repetitions; ++rep) {
          SolverResult result;
          double elapsed = 0.0;
          try {
            const auto t0 = Clock::now();
            if (spec.name == "oracle") {
              result = oracle_exact(inst);
            } else if (spec.name == "greedy") {
              result = greedy_nearest_feasible(inst);
            } else if (spec.name == "ga") {
              result = ga_solve(inst, spec.ga, mix_seed(seed, 0x6A00ull, rep));
            } else if (spec.name == "vns") {
              result = vns_solve(inst, spec.vns, mix_seed(seed, 0x7500ull, rep));
            } else if (spec.name == "random") {
              RolloutOptions options;
              options.mode = DecodeMode::sample;
              options.seed = mix_seed(seed, 0xA400ull, rep);
              result = trajectory_result(rollout(inst, uniform_random_policy(), options), inst);
            } else {
              const LoadedPolicy& lp = checkpoints.at(spec.checkpoint);
              RolloutOptions options;
              options.mode = spec.decode;
              options.seed = mix_seed(seed, 0xDEC0ull, rep);
              options.k_neighbors = lp.config.k_neighbors;
              options.pad_to = lp.config.pad_to;
              result = trajectory_result(
                  rollout(inst, make_policy_fn(lp.config, lp.params), options), inst);
            }
            elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
          } catch (const std::exception& e) {
            out.failures.push_back(spec.label() + " on " + config.family + "-" +
                                   std::to_string(size) + "-s" + std::to_string(seed) + ": " +
                                   e.what());
            continue;
          }

          if (!verify_result(inst, result)) {
            out.failures.push_back(spec.label() + " on " + config.family + "-" +
                                   std::to_string(size) + "-s" + std::to_string(seed) +
                                   ": result failed independent verification");
            continue;
          }

          RawRecord record;
          record.solver = spec.label();
          record.family = config.family;
          record.size = size;
          record.seed = seed;
          record.rep = rep;
          record.served = result.served_count;
          record.customers = inst.customer_count();
          record.served_pct = 100.0 * result.served_count / inst.customer_count();
          record.travel_hours = result.total_travel;
          record.feasible = result.feasible;
          record.clairvoyant = result.clairvoyant;
          record.route = result.route;
          out.records.push_back(std::move(record));
          out.timings.push_back({spec.label(), size, seed, rep, elapsed});

          served_pcts.push_back(out.records.back().served_pct);
          seconds.push_back(elapsed);
          feasible_count += result.feasible ? 1 : 0;
        }
      }
      if (served_pcts.empty()) continue;
      ResultRow row;
      row.solver = spec.label();
      row.family = config.family;
      row.size = size;
      row.n = static_cast<int>(served_pcts.size());
      row.served_pct_mean = mean(served_pcts);
      row.served_pct_std = sample_stddev(served_pcts);
      row.seconds_mean = mean(seconds);
      row.feasibility_rate = static_cast<double>(feasible_count) / served_pcts.size();
      out.table.rows.push_back(std::move(row));
    }
  }

  // The table must be re-derivable from the raw records alone.
  for (const auto& row : out.table.rows) {
    std::vector<double> pcts;
    for (const auto& r : out.records)
      if (r.solver == row.solver && r.size == row.size) pcts.push_back(r.served_pct);
    if (static_cast<int>(pcts.size()) != row.n || std::abs(mean(pcts) - row.served_pct_mean) > 1e-9)
      throw std::logic_error("result table does not match the raw records");
  }

  if (config.write_files) {
    const std::string dir = resolve_output_dir(config.output_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream records_stream;
    for (const auto& r : out.records) records_stream << r.to_json() << "\n";
    out.records_path = dir + "/records.jsonl";
    write_text_file(out.records_path, records_stream.str());

    std::ostringstream timing_stream;
    for (const auto& t : out.timings) {
      nlohmann::json j;
      j["solver"] = t.solver;
      j["size"] = t.size;
      j["seed"] = t.seed;
      j["rep"] = t.rep;
      j["seconds"] = t.seconds;
      timing_stream << j.dump() << "\n";
    }
    write_text_file(dir + "/timings.jsonl", timing_stream.str());

    out.table_path = dir + "/table.txt";
    write_text_file(out.table_path, out.table.to_text());
    write_text_file(dir + "/table.csv", out.table.to_csv());
    validate_records_file(out.records_path);
  }
  return out;
}

SweepOutput horizon_sweep(const ExperimentConfig& config) {
  config.validate();
  if (config.horizon_values.empty()) throw ConfigError("horizon sweep needs horizon_values");

  SweepOutput out;
  std::ostringstream csv;
  csv << "series,u_hours,served_pct_mean,n\n";
  for (double u : config.horizon_values) {
    ExperimentConfig sub = config;
    sub.horizon_U = u;
    sub.horizon_values.clear();
    sub.write_files = false;
    ExperimentOutput result = run_experiment(sub);
    for (const auto& row : result.table.rows) {
      csv << row.solver << "@" << row.family << "-" << row.size << "," << u << ","
          << row.served_pct_mean << "," << row.n << "\n";
    }
    out.horizons.push_back(u);
    out.tables.push_back(std::move(result.table));
  }
  out.series_csv = csv.str();

  if (config.write_files) {
    const std::string dir = resolve_output_dir(config.output_dir);
    std::filesystem::create_directories(dir);
    out.csv_path = dir + "/horizon_sweep.csv";
    write_text_file(out.csv_path, out.series_csv);
    std::ostringstream tables;
    for (std::size_t i = 0; i < out.horizons.size(); ++i)
      tables << "U = " << out.horizons[i] << " hours\n" << out.tables[i].to_text() << "\n";
    write_text_file(dir + "/horizon_tables.txt", tables.str());
  }
  return out;
}

namespace {

struct VariantSpec {
  const char* variant;
  const std::string* path;
  bool edge, global, horizon;
};

}  // namespace

AblationOutput ablation_suite(const AblationConfig& config) {
  const VariantSpec variants[] = {
      {"full", &config.checkpoint_full, true, true, true},
      {"no_edge_features", &config.checkpoint_no_edge, false, true, true},
      {"no_global_embedding", &config.checkpoint_no_global, true, false, true},
      {"no_horizon_in_embedding", &config.checkpoint_no_horizon, true, true, false},
  };

  for (const auto& v : variants) {
    if (v.path->empty() || !std::filesystem::exists(*v.path))
      throw ConfigError(std::string("missing checkpoint for variant '") + v.variant +
                        "': " + (v.path->empty() ? "<unset>" : *v.path));
    const Checkpoint ckpt = load_checkpoint(*v.path);
    if (ckpt.config.use_edge_features != v.edge ||
        ckpt.config.use_global_embedding != v.global ||
        ckpt.config.use_horizon_in_embedding != v.horizon)
      throw ConfigError(std::string("checkpoint for variant '") + v.variant +
                        "' carries mismatched ablation flags");
  }

  AblationOutput out;
  std::string full_config_json;
  std::ostringstream table;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-26s %6s %12s %14s\n", "variant", "n", "served%%",
                "ci95_halfwidth");
  table << buf;

  for (const auto& v : variants) {
    ExperimentConfig sub = config.suite;
    sub.write_files = false;
    SolverSpec spec;
    spec.name = "policy";
    spec.checkpoint = *v.path;
    spec.decode = DecodeMode::greedy;
    spec.policy_label = v.variant;
    sub.solvers = {spec};
    const ExperimentOutput result = run_experiment(sub);
    if (!result.failures.empty())
      throw std::runtime_error("ablation variant failed: " + result.failures.front());
    if (std::string(v.variant) == "full")
      full_config_json = to_json_string(load_checkpoint(*v.path).config);

    std::vector<double> pcts;
    for (const auto& r : result.records) pcts.push_back(r.served_pct);
    AblationRow row;
    row.variant = v.variant;
    row.n = static_cast<int>(pcts.size());
    row.served_pct_mean = mean(pcts);
    row.ci_halfwidth = row.n > 1 ? 1.96 * sample_stddev(pcts) / std::sqrt(double(row.n)) : 0.0;
    std::snprintf(buf, sizeof(buf), "%-26s %6d %12.2f %14.2f\n", row.variant.c_str(), row.n,
                  row.served_pct_mean, row.ci_halfwidth);
    table << buf;
    out.rows.push_back(std::move(row));
  }
  out.table_text = table.str();

  nlohmann::json manifest;
  manifest["family"] = config.suite.family;
  manifest["sizes"] = config.suite.sizes;
  manifest["seeds"] = config.suite.seeds;
  manifest["horizon_u"] = config.suite.horizon_U;
  manifest["stochastic_fraction"] = config.suite.stochastic_fraction;
  manifest["full_config_hash"] = fnv1a(full_config_json);
  out.manifest_json = manifest.dump();

  if (config.suite.write_files) {
    const std::string dir = resolve_output_dir(config.suite.output_dir);
    std::filesystem::create_directories(dir);
    write_text_file(dir + "/ablation.txt", out.table_text);
    write_text_file(dir + "/ablation_manifest.json", out.manifest_json + "\n");
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

int validate_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RawRecord r;
    try {
      r = RawRecord::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("records schema violation at line " + std::to_string(count + 1) +
                               ": " + e.what());
    }
    if (r.customers < 1 || r.served < 0 || r.served > r.customers)
      throw std::runtime_error("records schema violation: served out of range");
    if (std::abs(r.served_pct - 100.0 * r.served / r.customers) > 1e-9)
      throw std::runtime_error("records schema violation: served_pct inconsistent");
    if (r.route.size() < 2) throw std::runtime_error("records schema violation: truncated route");
    ++count;
  }
  return count;
}

}  // namespace pggat
