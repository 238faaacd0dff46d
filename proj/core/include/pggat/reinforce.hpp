#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "pggat/policy.hpp"

namespace pggat {

enum class BaselineMode { none, moving_average };

struct TrainingConfig {
  int episodes_per_batch = 32;
  int total_batches = 100;
  double learning_rate = 1e-3;
  double discount = 1.0;
  BaselineMode baseline_mode = BaselineMode::none;
  double baseline_decay = 0.9;
  std::uint64_t seed = 0;
  int threads = 1;  // 0 = hardware concurrency

  // training instance family
  std::string family = "euclidean";  // euclidean | road
  int customer_count = 8;
  double stochastic_fraction = 0.0;
  double horizon_U = 24.0;
  double horizon_U_max = 0.0;  // > 0: per-episode U uniform in [horizon_U, horizon_U_max]
  int request_cutoff_K = 10;

  PolicyConfig policy;

  int validation_interval = 0;  // batches; 0 = off
  int validation_instances = 32;
  int checkpoint_interval = 0;  // batches; 0 = final only
  std::string output_dir;       // empty = no files written

  void validate() const;
};

std::string to_json_string(const TrainingConfig& config);
TrainingConfig training_config_from_json(const std::string& text);

InstanceSpec make_family_instance(const std::string& family, int customer_count,
                                  std::uint64_t seed, double stochastic_fraction, double horizon_U,
                                  int request_cutoff_K);

// Suffix sums of the rewards: G_t = sum_{t' >= t} discount^(t'-t) r_{t'}.
std::vector<double> compute_returns(const std::vector<double>& rewards, double discount);
std::vector<double> compute_returns(const Trajectory& trajectory, double discount);

// One sampled episode with its differentiable log-probabilities. The tape's
// parameter leaves are bound to the gradient buffers supplied at build time.
struct EpisodeRecord {
  std::vector<double> rewards;
  Tape tape;
  std::vector<Tape::Id> logp_ids;
  int served = 0;
  int customers = 1;
  bool feasible = true;
};

struct ParamView {
  std::vector<Mat*> values;
  std::vector<Mat*> grads;
};
ParamView make_param_view(PolicyParameters& params, PolicyParameters& grads);

struct StepStats {
  double grad_norm = 0.0;
  double baseline_used = 0.0;
  bool update_applied = false;
};

// Descends the loss -mean[(G_t - b) log pi(a_t|s_t)] by one plain gradient
// step. A non-finite gradient skips the update and leaves the parameters
// untouched. The moving-average baseline is used as frozen from previous
// batches and refreshed afterwards.
StepStats policy_gradient_step(std::vector<EpisodeRecord>& batch, const ParamView& params,
                               double learning_rate, double discount, BaselineMode mode,
                               double decay, double& baseline, bool& baseline_initialized);

EpisodeRecord run_training_episode(const TrainingConfig& config, const PolicyParameters& params,
                                   PolicyParameters& grads, const InstanceSpec& instance,
                                   std::uint64_t rollout_seed);

struct BatchStats {
  int batch = 0;
  double mean_return = 0.0;
  double mean_served_pct = 0.0;
  double feasibility_rate = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
  double validation_served_pct = -1.0;  // < 0 when validation did not run
  bool update_applied = true;
};

struct TrainingReport {
  std::vector<BatchStats> batches;
  std::string final_checkpoint;  // empty when output_dir is unset
  double total_seconds = 0.0;
};

// Full training loop: sample instances, collect a sampled-rollout batch,
// apply the gradient step, log one JSONL record per batch, periodically
// greedy-decode a fixed held-out set, and write checkpoints. Passing a
// checkpoint path resumes exactly where that run stopped.
TrainingReport train(const TrainingConfig& config, std::ostream* log = nullptr,
                     const std::string& resume_checkpoint = "");

}  // namespace pggat
