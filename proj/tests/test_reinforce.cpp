#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pggat/reinforce.hpp"
#include "pggat/stats.hpp"
#include "test_oracles.hpp"

using namespace pggat;

namespace {

PolicyConfig tiny_policy(int pad_to) {
  PolicyConfig cfg;
  cfg.pad_to = pad_to;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.tau_embed_dim = 4;
  cfg.context_dim = 16;
  cfg.k_neighbors = 4;
  return cfg;
}

// Paper-sized network on the 2-customer family; the bootstrap out of the
// near-uniform initial policy needs the full embedding width.
TrainingConfig smoke_config(std::uint64_t seed) {
  TrainingConfig cfg;
  cfg.family = "euclidean";
  cfg.customer_count = 2;
  cfg.horizon_U = 24.0;  // every 2-customer tour fits
  cfg.episodes_per_batch = 16;
  cfg.total_batches = 60;
  cfg.learning_rate = 0.05;
  cfg.baseline_mode = BaselineMode::moving_average;
  cfg.seed = seed;
  cfg.threads = 2;
  cfg.policy.pad_to = 4;
  return cfg;
}

// Two-action softmax bandit: the logits are the parameters themselves.
struct ToyEpisode {
  Mat theta;
  Mat grad;
  EpisodeRecord record;
  Mat probs;

  ToyEpisode(double t0, double t1, int action, double reward) : theta(1, 2), grad(1, 2) {
    theta(0, 0) = t0;
    theta(0, 1) = t1;
    const Tape::Id id = record.tape.param(&theta, &grad);
    const Tape::Id p = record.tape.softmax_row(id);
    probs = record.tape.value(p);
    record.logp_ids.push_back(record.tape.log_entry(p, action));
    record.rewards.push_back(reward);
  }
};

}  // namespace

TEST_CASE("compute_returns: undiscounted suffix sums") {
  const std::vector<double> g = compute_returns({1.0, 0.0, 1.0}, 1.0);
  CHECK(g == std::vector<double>{2.0, 1.0, 1.0});
}

TEST_CASE("compute_returns: hand-checked discounting") {
  const std::vector<double> g = compute_returns({1.0, 0.0, 1.0}, 0.5);
  CHECK(g[0] == doctest::Approx(1.25));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(1.0));
}

TEST_CASE("compute_returns: a lone terminal penalty reaches every step") {
  const std::vector<double> g = compute_returns({0.0, 0.0, -7.0}, 1.0);
  for (double x : g) CHECK(x == doctest::Approx(-7.0));
}

TEST_CASE("policy_gradient_step: a zero-return batch leaves parameters untouched") {
  ToyEpisode toy(0.3, -0.2, 0, 0.0);
  std::vector<EpisodeRecord> batch;
  batch.push_back(std::move(toy.record));
  ParamView view;
  view.values.push_back(&toy.theta);
  view.grads.push_back(&toy.grad);

  double baseline = 0.0;
  bool initialized = false;
  const Mat before = toy.theta;
  const StepStats stats =
      policy_gradient_step(batch, view, 0.1, 1.0, BaselineMode::none, 0.9, baseline, initialized);
  CHECK(stats.update_applied);
  CHECK(toy.theta == before);
}

TEST_CASE("policy_gradient_step matches the closed-form two-action update") {
  // one step, action 0, return G: theta' = theta + lr * G * (e_a - p)
  const double G = 2.5, lr = 0.1;
  ToyEpisode toy(0.4, -0.6, 0, G);
  const double p0 = toy.probs(0, 0), p1 = toy.probs(0, 1);

  std::vector<EpisodeRecord> batch;
  batch.push_back(std::move(toy.record));
  ParamView view;
  view.values.push_back(&toy.theta);
  view.grads.push_back(&toy.grad);
  double baseline = 0.0;
  bool initialized = false;
  policy_gradient_step(batch, view, lr, 1.0, BaselineMode::none, 0.9, baseline, initialized);

  CHECK(toy.theta(0, 0) == doctest::Approx(0.4 + lr * G * (1.0 - p0)).epsilon(1e-6));
  CHECK(toy.theta(0, 1) == doctest::Approx(-0.6 + lr * G * (0.0 - p1)).epsilon(1e-6));
}

TEST_CASE("policy_gradient_step: batch loss gradient matches finite differences") {
  const TrainingConfig cfg = [] {
    TrainingConfig c;
    c.customer_count = 4;
    c.horizon_U = 9.0;
    c.policy = tiny_policy(5);
    c.seed = 5;
    return c;
  }();
  const InstanceSpec inst = make_family_instance(cfg.family, cfg.customer_count, 11, 0.0,
                                                 cfg.horizon_U, cfg.request_cutoff_K);
  PolicyParameters params = init_parameters(cfg.policy, 21);

  const auto batch_loss = [&](PolicyParameters& p, PolicyParameters* g) {
    PolicyParameters unused = g ? PolicyParameters{} : zeros_like(p);
    PolicyParameters& gr = g ? *g : unused;
    double loss = 0.0;
    std::vector<EpisodeRecord> records;
    for (std::uint64_t e = 0; e < 3; ++e)
      records.push_back(run_training_episode(cfg, p, gr, inst, e));
    std::size_t total_steps = 0;
    for (auto& r : records) total_steps += r.rewards.size();
    for (auto& r : records) {
      const auto returns = compute_returns(r.rewards, 1.0);
      std::vector<double> weights(returns.size());
      for (std::size_t t = 0; t < returns.size(); ++t) {
        weights[t] = -returns[t] / double(total_steps);
        loss += weights[t] * r.tape.value(r.logp_ids[t])(0, 0);
      }
      if (g) r.tape.backward(r.tape.weighted_sum(r.logp_ids, weights));
    }
    return loss;
  };

  PolicyParameters grads = zeros_like(params);
  batch_loss(params, &grads);

  Rng rng(23);
  const std::size_t total = parameter_count(params);
  constexpr double eps = 1e-5;
  for (int probe = 0; probe < 10; ++probe) {
    const std::size_t idx = rng.next_u64() % total;
    add_flat(params, idx, eps);
    const double up = batch_loss(params, nullptr);
    add_flat(params, idx, -2 * eps);
    const double down = batch_loss(params, nullptr);
    add_flat(params, idx, eps);
    CHECK(testing::rel_error(get_flat(grads, idx), (up - down) / (2 * eps)) < 1e-4);
  }
}

TEST_CASE("policy_gradient_step: non-finite gradients abort the update") {
  ToyEpisode toy(0.1, 0.2, 1, std::numeric_limits<double>::infinity());
  std::vector<EpisodeRecord> batch;
  batch.push_back(std::move(toy.record));
  ParamView view;
  view.values.push_back(&toy.theta);
  view.grads.push_back(&toy.grad);
  double baseline = 0.0;
  bool initialized = false;
  const Mat before = toy.theta;
  const StepStats stats =
      policy_gradient_step(batch, view, 0.1, 1.0, BaselineMode::none, 0.9, baseline, initialized);
  CHECK_FALSE(stats.update_applied);
  CHECK(toy.theta == before);
}

TEST_CASE("moving-average baseline barely shifts the large-batch gradient estimate") {
  // frozen 2-action policy, 4096 one-step episodes, both estimates side by side
  Rng rng(31);
  Mat theta(1, 2);
  theta(0, 0) = 0.35;
  theta(0, 1) = -0.15;
  const double p0 = std::exp(theta(0, 0)) / (std::exp(theta(0, 0)) + std::exp(theta(0, 1)));

  const int episodes = 4096;
  const double baseline = 0.6;  // frozen from earlier batches
  Mat grad_nb(1, 2), grad_b(1, 2);
  for (int e = 0; e < episodes; ++e) {
    const int action = rng.uniform() < p0 ? 0 : 1;
    const double reward = (action == 0 ? 1.0 : 0.2) + rng.uniform(-0.1, 0.1);
    const double d0 = (action == 0 ? 1.0 : 0.0) - p0;
    const double d1 = (action == 1 ? 1.0 : 0.0) - (1.0 - p0);
    grad_nb(0, 0) += reward * d0 / episodes;
    grad_nb(0, 1) += reward * d1 / episodes;
    grad_b(0, 0) += (reward - baseline) * d0 / episodes;
    grad_b(0, 1) += (reward - baseline) * d1 / episodes;
  }
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 2; ++i) {
    num += (grad_nb(0, i) - grad_b(0, i)) * (grad_nb(0, i) - grad_b(0, i));
    den += grad_nb(0, i) * grad_nb(0, i);
  }
  CHECK(std::sqrt(num) / std::sqrt(den) < 0.1);
}

TEST_CASE("train: identical config and seed reproduce per-batch returns exactly") {
  TrainingConfig cfg = smoke_config(7);
  cfg.total_batches = 5;
  const TrainingReport a = train(cfg);
  const TrainingReport b = train(cfg);
  REQUIRE(a.batches.size() == b.batches.size());
  for (std::size_t i = 0; i < a.batches.size(); ++i) {
    CHECK(a.batches[i].mean_return == b.batches[i].mean_return);
    CHECK(a.batches[i].grad_norm == b.batches[i].grad_norm);
  }
}

TEST_CASE("train: two-customer smoke run trends upward") {
  TrainingConfig cfg = smoke_config(3);
  cfg.total_batches = 300;
  cfg.episodes_per_batch = 32;
  cfg.learning_rate = 0.1;
  const TrainingReport report = train(cfg);
  std::vector<double> returns;
  for (const auto& b : report.batches) returns.push_back(b.mean_return);
  const TrendTest trend = spearman_trend(returns);
  CHECK(trend.rho > 0.0);
  CHECK(trend.p_value < 0.01);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += returns[i] / 10.0;
    late += returns[returns.size() - 1 - i] / 10.0;
  }
  CHECK(late > early);
}

TEST_CASE("train: ablation flags run end to end") {
  for (int variant = 0; variant < 3; ++variant) {
    TrainingConfig cfg = smoke_config(9);
    cfg.total_batches = 3;
    cfg.policy.use_edge_features = variant != 0;
    cfg.policy.use_global_embedding = variant != 1;
    cfg.policy.use_horizon_in_embedding = variant != 2;
    const TrainingReport report = train(cfg);
    CHECK(report.batches.size() == 3);
    for (const auto& b : report.batches) CHECK(b.update_applied);
  }
}

TEST_CASE("train: threaded batch collection reproduces the sequential run") {
  TrainingConfig cfg = smoke_config(13);
  cfg.total_batches = 4;
  const TrainingReport seq = train(cfg);
  cfg.threads = 2;
  const TrainingReport par = train(cfg);
  REQUIRE(seq.batches.size() == par.batches.size());
  for (std::size_t i = 0; i < seq.batches.size(); ++i) {
    CHECK(seq.batches[i].mean_return == par.batches[i].mean_return);
    CHECK(seq.batches[i].grad_norm == par.batches[i].grad_norm);
  }
}

TEST_CASE("checkpoint round trip: identical decode, exact resume") {
  const auto dir = std::filesystem::temp_directory_path() / "pggat_train_test";
  std::filesystem::remove_all(dir);

  TrainingConfig cfg = smoke_config(17);
  cfg.total_batches = 6;
  cfg.output_dir = dir.string();
  cfg.checkpoint_interval = 3;
  const TrainingReport full = train(cfg);
  REQUIRE_FALSE(full.final_checkpoint.empty());

  const Checkpoint loaded = load_checkpoint(full.final_checkpoint);
  CHECK(loaded.config == cfg.policy);
  REQUIRE(loaded.training.has_value());
  CHECK(loaded.training->next_batch == 6);

  auto params_a = std::make_shared<PolicyParameters>(loaded.params);
  const std::string copy = (dir / "copy.pgc").string();
  PolicyParameters reload = loaded.params;
  save_checkpoint(copy, loaded.config, reload);
  auto params_b = std::make_shared<PolicyParameters>(load_checkpoint(copy).params);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const InstanceSpec inst = make_family_instance("euclidean", 2, 900 + s, 0.0, 24.0, 10);
    RolloutOptions options;
    options.k_neighbors = cfg.policy.k_neighbors;
    options.pad_to = cfg.policy.pad_to;
    const Trajectory ta = rollout(inst, make_policy_fn(cfg.policy, params_a), options);
    const Trajectory tb = rollout(inst, make_policy_fn(cfg.policy, params_b), options);
    CHECK(ta.route(inst.network.depot) == tb.route(inst.network.depot));
  }

  const std::string mid = (dir / "checkpoint_batch3.pgc").string();
  REQUIRE(std::filesystem::exists(mid));
  TrainingConfig tail_cfg = cfg;
  tail_cfg.output_dir.clear();
  const TrainingReport tail = train(tail_cfg, nullptr, mid);
  REQUIRE(tail.batches.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(tail.batches[i].mean_return == full.batches[3 + i].mean_return);
    CHECK(tail.batches[i].grad_norm == full.batches[3 + i].grad_norm);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loading validates shapes against the config") {
  const auto path = (std::filesystem::temp_directory_path() / "pggat_shape.pgc").string();
  PolicyConfig cfg = tiny_policy(4);
  PolicyParameters params = init_parameters(cfg, 1);
  save_checkpoint(path, cfg, params);

  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = content.find("\"pad_to\":4");
  REQUIRE(pos != std::string::npos);
  std::string bad = content;
  bad.replace(pos, 10, "\"pad_to\":9");
  std::ofstream out(path);
  out << bad;
  out.close();
  CHECK_THROWS_AS(load_checkpoint(path), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("training log lines are JSON records with the batch fields") {
  TrainingConfig cfg = smoke_config(19);
  cfg.total_batches = 2;
  cfg.validation_interval = 1;
  cfg.validation_instances = 4;
  std::ostringstream log;
  train(cfg, &log);
  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("\"mean_return\"") != std::string::npos);
    CHECK(line.find("\"grad_norm\"") != std::string::npos);
    CHECK(line.find("\"validation_served_pct\"") != std::string::npos);
    ++count;
  }
  CHECK(count == 2);
}
