#include "pggat/reinforce.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace pggat {

void TrainingConfig::validate() const {
  if (episodes_per_batch < 1) throw std::invalid_argument("episodes_per_batch must be >= 1");
  if (total_batches < 1) throw std::invalid_argument("total_batches must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(discount > 0.0) || discount > 1.0) throw std::invalid_argument("discount must be in (0, 1]");
  if (baseline_decay < 0.0 || baseline_decay >= 1.0)
    throw std::invalid_argument("baseline_decay must be in [0, 1)");
  if (family != "euclidean" && family != "road")
    throw std::invalid_argument("unknown instance family: " + family);
  if (customer_count < 1) throw std::invalid_argument("customer_count must be >= 1");
  if (horizon_U_max > 0.0 && horizon_U_max < horizon_U)
    throw std::invalid_argument("horizon_U_max must be >= horizon_U");
  policy.validate();
  if (policy.pad_to < customer_count + 1)
    throw std::invalid_argument("policy.pad_to must cover the instance node count");
}

std::string to_json_string(const TrainingConfig& c) {
  nlohmann::json j;
  j["episodes_per_batch"] = c.episodes_per_batch;
  j["total_batches"] = c.total_batches;
  j["learning_rate"] = c.learning_rate;
  j["discount"] = c.discount;
  j["baseline_mode"] = c.baseline_mode == BaselineMode::moving_average ? "moving_average" : "none";
  j["baseline_decay"] = c.baseline_decay;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["family"] = c.family;
  j["customer_count"] = c.customer_count;
  j["stochastic_fraction"] = c.stochastic_fraction;
  j["horizon_u"] = c.horizon_U;
  j["horizon_u_max"] = c.horizon_U_max;
  j["cutoff_k"] = c.request_cutoff_K;
  j["policy"] = nlohmann::json::parse(to_json_string(c.policy));
  j["validation_interval"] = c.validation_interval;
  j["validation_instances"] = c.validation_instances;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["output_dir"] = c.output_dir;
  return j.dump();
}

TrainingConfig training_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainingConfig c;
  c.episodes_per_batch = j.value("episodes_per_batch", c.episodes_per_batch);
  c.total_batches = j.value("total_batches", c.total_batches);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.discount = j.value("discount", c.discount);
  const std::string mode = j.value("baseline_mode", std::string("none"));
  if (mode == "moving_average")
    c.baseline_mode = BaselineMode::moving_average;
  else if (mode == "none")
    c.baseline_mode = BaselineMode::none;
  else
    throw std::invalid_argument("unknown baseline_mode: " + mode);
  c.baseline_decay = j.value("baseline_decay", c.baseline_decay);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.family = j.value("family", c.family);
  c.customer_count = j.value("customer_count", c.customer_count);
  c.stochastic_fraction = j.value("stochastic_fraction", c.stochastic_fraction);
  c.horizon_U = j.value("horizon_u", c.horizon_U);
  c.horizon_U_max = j.value("horizon_u_max", c.horizon_U_max);
  c.request_cutoff_K = j.value("cutoff_k", c.request_cutoff_K);
  if (j.contains("policy")) c.policy = policy_config_from_json(j["policy"].dump());
  c.validation_interval = j.value("validation_interval", c.validation_interval);
  c.validation_instances = j.value("validation_instances", c.validation_instances);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.validate();
  return c;
}

InstanceSpec make_family_instance(const std::string& family, int customer_count,
                                  std::uint64_t seed, double stochastic_fraction, double horizon_U,
                                  int request_cutoff_K) {
  if (family == "euclidean")
    return generate_euclidean(customer_count, seed, stochastic_fraction, horizon_U, request_cutoff_K);
  if (family == "road")
    return generate_road_style(customer_count, seed, stochastic_fraction, horizon_U, request_cutoff_K);
  throw std::invalid_argument("unknown instance family: " + family);
}

std::vector<double> compute_returns(const std::vector<double>& rewards, double discount) {
  std::vector<double> returns(rewards.size());
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + discount * acc;
    returns[t] = acc;
  }
  return returns;
}

std::vector<double> compute_returns(const Trajectory& trajectory, double discount) {
  std::vector<double> rewards;
  rewards.reserve(trajectory.steps.size());
  for (const auto& s : trajectory.steps) rewards.push_back(s.reward);
  return compute_returns(rewards, discount);
}

ParamView make_param_view(PolicyParameters& params, PolicyParameters& grads) {
  ParamView view;
  for (auto& t : parameter_tensors(params)) view.values.push_back(t.mat);
  for (auto& t : parameter_tensors(grads)) view.grads.push_back(t.mat);
  return view;
}

StepStats policy_gradient_step(std::vector<EpisodeRecord>& batch, const ParamView& params,
                               double learning_rate, double discount, BaselineMode mode,
                               double decay, double& baseline, bool& baseline_initialized) {
  if (params.values.size() != params.grads.size())
    throw std::invalid_argument("policy_gradient_step: parameter view mismatch");
  for (Mat* g : params.grads) g->fill(0.0);

  std::size_t total_steps = 0;
  for (const auto& e : batch) total_steps += e.rewards.size();
  if (total_steps == 0) throw std::invalid_argument("policy_gradient_step: empty batch");

  StepStats stats;
  stats.baseline_used =
      (mode == BaselineMode::moving_average && baseline_initialized) ? baseline : 0.0;

  double return_sum = 0.0;
  for (auto& episode : batch) {
    if (episode.rewards.size() != episode.logp_ids.size())
      throw std::invalid_argument("policy_gradient_step: rewards/logp length mismatch");
    const std::vector<double> returns = compute_returns(episode.rewards, discount);
    std::vector<double> weights(returns.size());
    for (std::size_t t = 0; t < returns.size(); ++t) {
      weights[t] = -(returns[t] - stats.baseline_used) / static_cast<double>(total_steps);
      return_sum += returns[t];
    }
    const Tape::Id loss = episode.tape.weighted_sum(episode.logp_ids, weights);
    episode.tape.backward(loss);
  }

  double norm_sq = 0.0;
  for (Mat* g : params.grads)
    for (double x : g->v) norm_sq += x * x;
  stats.grad_norm = std::sqrt(norm_sq);
  stats.update_applied = std::isfinite(stats.grad_norm);

  if (stats.update_applied) {
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      Mat* v = params.values[i];
      const Mat* g = params.grads[i];
      for (std::size_t k = 0; k < v->size(); ++k) v->v[k] -= learning_rate * g->v[k];
    }
  }

  if (mode == BaselineMode::moving_average) {
    const double batch_mean = return_sum / static_cast<double>(total_steps);
    if (std::isfinite(batch_mean)) {
      if (!baseline_initialized) {
        baseline = batch_mean;
        baseline_initialized = true;
      } else {
        baseline = decay * baseline + (1.0 - decay) * batch_mean;
      }
    }
  }
  return stats;
}

EpisodeRecord run_training_episode(const TrainingConfig& config, const PolicyParameters& params,
                                   PolicyParameters& grads, const InstanceSpec& instance,
                                   std::uint64_t rollout_seed) {
  const NetworkState net_state = derive_for_policy(config.policy, instance);
  EpisodeGraph graph = begin_episode_graph(config.policy, params, grads, net_state);

  Rng rng(mix_seed(rollout_seed, 0x5A3Eull));
  const int n = instance.network.node_count;
  const int max_steps = n + instance.request_cutoff_K + 2;

  EpisodeRecord record;
  record.customers = instance.customer_count();
  EnvState state = reset(instance);
  while (!state.terminal) {
    if (static_cast<int>(record.rewards.size()) >= max_steps)
      throw std::runtime_error("training episode exceeded the step guard");
    const auto legal = legal_action_mask(instance, state);
    const Tape::Id probs_id = append_action_probs(graph, config.policy, state.vehicle, legal,
                                                  instance.horizon_U, instance.customer_count());
    const Mat& p = graph.tape.value(probs_id);

    const double r = rng.uniform();
    double acc = 0.0;
    int action = -1;
    for (int i = 0; i < n; ++i) {
      if (!legal[i] || p(0, i) <= 0.0) continue;
      acc += p(0, i);
      action = i;
      if (acc > r) break;
    }
    if (action < 0) throw std::runtime_error("sampled state had no legal probability mass");

    record.logp_ids.push_back(graph.tape.log_entry(probs_id, action));
    StepOutcome outcome = step(instance, state, action);
    record.rewards.push_back(outcome.reward);
    if (outcome.reward > 0.0) ++record.served;
    if (outcome.reward < 0.0) record.feasible = false;
    state = std::move(outcome.next_state);
  }
  record.tape = std::move(graph.tape);
  return record;
}

namespace {

double greedy_validation(const TrainingConfig& config,
                         const std::vector<InstanceSpec>& instances,
                         const PolicyParameters& params) {
  auto shared = std::make_shared<PolicyParameters>(params);
  const PolicyFn policy = make_policy_fn(config.policy, shared);
  double served = 0.0, total = 0.0;
  for (const auto& inst : instances) {
    RolloutOptions options;
    options.mode = DecodeMode::greedy;
    options.k_neighbors = config.policy.k_neighbors;
    options.pad_to = config.policy.pad_to;
    const Trajectory traj = rollout(inst, policy, options);
    served += traj.served_count;
    total += inst.customer_count();
  }
  return total > 0.0 ? 100.0 * served / total : 0.0;
}

}  // namespace

TrainingReport train(const TrainingConfig& config, std::ostream* log,
                     const std::string& resume_checkpoint) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  PolicyParameters params;
  long first_batch = 0;
  double baseline = 0.0;
  bool baseline_initialized = false;
  if (!resume_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_checkpoint);
    if (!(ckpt.config == config.policy))
      throw std::invalid_argument("resume checkpoint policy config differs from the training config");
    params = std::move(ckpt.params);
    if (ckpt.training) {
      first_batch = ckpt.training->next_batch;
      baseline = ckpt.training->baseline;
      baseline_initialized = ckpt.training->baseline_initialized;
    }
  } else {
    params = init_parameters(config.policy, mix_seed(config.seed, 0x1217ull));
  }
  PolicyParameters grads = zeros_like(params);
  const ParamView view = make_param_view(params, grads);

  std::vector<InstanceSpec> validation;
  if (config.validation_interval > 0) {
    for (int i = 0; i < config.validation_instances; ++i) {
      validation.push_back(make_family_instance(
          config.family, config.customer_count, mix_seed(config.seed, 0x7A11DA7Eull, i),
          config.stochastic_fraction, config.horizon_U, config.request_cutoff_K));
    }
  }

  if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);

  const int thread_count =
      config.threads > 0 ? config.threads
                         : std::max(1u, std::thread::hardware_concurrency());

  TrainingReport report;
  for (long batch = first_batch; batch < config.total_batches; ++batch) {
    const auto t_batch = std::chrono::steady_clock::now();

    std::vector<EpisodeRecord> episodes(config.episodes_per_batch);
    const auto run_episode = [&](int e) {
      const std::uint64_t key = static_cast<std::uint64_t>(batch) * config.episodes_per_batch + e;
      double horizon = config.horizon_U;
      if (config.horizon_U_max > 0.0) {
        Rng hr(mix_seed(config.seed, 0x40B1ull, key));
        horizon = hr.uniform(config.horizon_U, config.horizon_U_max);
      }
      const InstanceSpec inst =
          make_family_instance(config.family, config.customer_count,
                               mix_seed(config.seed, 0x1257ull, key), config.stochastic_fraction,
                               horizon, config.request_cutoff_K);
      episodes[e] = run_training_episode(config, params, grads, inst,
                                         mix_seed(config.seed, 0x4011ull, key));
    };
    if (thread_count <= 1 || config.episodes_per_batch == 1) {
      for (int e = 0; e < config.episodes_per_batch; ++e) run_episode(e);
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> workers;
      const int workers_n = std::min(thread_count, config.episodes_per_batch);
      workers.reserve(workers_n);
      for (int w = 0; w < workers_n; ++w) {
        workers.emplace_back([&] {
          for (int e = next.fetch_add(1); e < config.episodes_per_batch; e = next.fetch_add(1))
            run_episode(e);
        });
      }
      for (auto& w : workers) w.join();
    }

    const StepStats step_stats =
        policy_gradient_step(episodes, view, config.learning_rate, config.discount,
                             config.baseline_mode, config.baseline_decay, baseline,
                             baseline_initialized);

    BatchStats stats;
    stats.batch = static_cast<int>(batch);
    double return_sum = 0.0, served_pct_sum = 0.0, feasible = 0.0;
    for (const auto& e : episodes) {
      double ret = 0.0;
      for (double r : e.rewards) ret += r;
      return_sum += ret;
      served_pct_sum += 100.0 * e.served / e.customers;
      feasible += e.feasible ? 1.0 : 0.0;
    }
    stats.mean_return = return_sum / config.episodes_per_batch;
    stats.mean_served_pct = served_pct_sum / config.episodes_per_batch;
    stats.feasibility_rate = feasible / config.episodes_per_batch;
    stats.grad_norm = step_stats.grad_norm;
    stats.update_applied = step_stats.update_applied;

    const bool validate_now = config.validation_interval > 0 &&
                              ((batch + 1) % config.validation_interval == 0 ||
                               batch + 1 == config.total_batches);
    if (validate_now) stats.validation_served_pct = greedy_validation(config, validation, params);

    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_batch).count();

    if (log) {
      nlohmann::json j;
      j["batch"] = stats.batch;
      j["mean_return"] = stats.mean_return;
      j["mean_served_pct"] = stats.mean_served_pct;
      j["feasibility_rate"] = stats.feasibility_rate;
      j["grad_norm"] = stats.grad_norm;
      j["seconds"] = stats.seconds;
      j["update_applied"] = stats.update_applied;
      if (stats.validation_served_pct >= 0.0) j["validation_served_pct"] = stats.validation_served_pct;
      (*log) << j.dump() << "\n";
    }
    report.batches.push_back(stats);

    if (!config.output_dir.empty() && config.checkpoint_interval > 0 &&
        (batch + 1) % config.checkpoint_interval == 0 && batch + 1 != config.total_batches) {
      TrainingStateMeta meta{batch + 1, baseline, baseline_initialized};
      save_checkpoint(config.output_dir + "/checkpoint_batch" + std::to_string(batch + 1) + ".pgc",
                      config.policy, params, &meta);
    }
  }

  if (!config.output_dir.empty()) {
    TrainingStateMeta meta{config.total_batches, baseline, baseline_initialized};
    report.final_checkpoint = config.output_dir + "/checkpoint_final.pgc";
    save_checkpoint(report.final_checkpoint, config.policy, params, &meta);
  }
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace pggat
