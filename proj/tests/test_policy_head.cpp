#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "pggat/policy.hpp"
#include "test_oracles.hpp"

using namespace pggat;

namespace {

Mat random_mat(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (double& x : m.v) x = rng.uniform(lo, hi);
  return m;
}

PolicyConfig small_config(int pad_to = 8) {
  PolicyConfig cfg;
  cfg.pad_to = pad_to;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.tau_embed_dim = 4;
  cfg.context_dim = 16;
  cfg.k_neighbors = 3;
  return cfg;
}

struct Fixture {
  InstanceSpec instance;
  NetworkState state;
  PolicyConfig cfg;
  PolicyParameters params;
  NodeEmbeddings embeddings;
};

Fixture make_fixture(std::uint64_t seed, int customers = 5, double stoch = 0.0) {
  Fixture f;
  f.cfg = small_config(customers + 1);
  f.instance = generate_euclidean(customers, seed, stoch, 24.0);
  f.state = derive_for_policy(f.cfg, f.instance);
  f.params = init_parameters(f.cfg, mix_seed(seed, 3));
  f.embeddings = encode(f.state, f.params.encoder);
  return f;
}

}  // namespace

TEST_CASE("encode_vehicle_state at reset: full horizon and full active set") {
  Fixture f = make_fixture(1);
  const EnvState s = reset(f.instance);
  const Mat v = encode_vehicle_state(s.vehicle, f.embeddings, f.instance.horizon_U,
                                     f.instance.customer_count());
  REQUIRE(v.cols == f.cfg.embed_dim + 2);
  CHECK(v(0, f.cfg.embed_dim) == doctest::Approx(1.0));      // tau / U
  CHECK(v(0, f.cfg.embed_dim + 1) == doctest::Approx(1.0));  // |C_t| / |C|
  for (int d = 0; d < f.cfg.embed_dim; ++d)
    CHECK(v(0, d) == f.embeddings.h(f.instance.network.depot, d));
}

TEST_CASE("encode_vehicle_state: stochastic EN-50 reset has half the requests active") {
  PolicyConfig cfg = small_config(51);
  const InstanceSpec inst = generate_euclidean(50, 1, 0.5, 18.0);
  const NetworkState state = derive_for_policy(cfg, inst);
  const PolicyParameters params = init_parameters(cfg, 5);
  const NodeEmbeddings emb = encode(state, params.encoder);
  const EnvState s = reset(inst);
  const Mat v = encode_vehicle_state(s.vehicle, emb, inst.horizon_U, inst.customer_count());
  CHECK(v(0, cfg.embed_dim + 1) == doctest::Approx(0.5));
}

TEST_CASE("encode_vehicle_state can drop the horizon component") {
  Fixture f = make_fixture(2);
  const EnvState s = reset(f.instance);
  const Mat v = encode_vehicle_state(s.vehicle, f.embeddings, f.instance.horizon_U,
                                     f.instance.customer_count(), false);
  CHECK(v.cols == f.cfg.embed_dim + 1);
}

TEST_CASE("global_graph_embedding: identical node embeddings are a fixed point") {
  Rng rng(3);
  Mat h(4, 6);
  const Mat row = random_mat(1, 6, rng);
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 6; ++d) h(i, d) = row(0, d);
  const Mat venc = random_mat(1, 5, rng);
  const Mat wq = random_mat(5, 6, rng);
  const Mat g = global_graph_embedding(venc, h, wq);
  for (int d = 0; d < 6; ++d) CHECK(g(0, d) == doctest::Approx(row(0, d)));
}

TEST_CASE("global_graph_embedding stays inside the per-coordinate hull") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat h = random_mat(5, 6, rng);
    const Mat venc = random_mat(1, 4, rng, -2.0, 2.0);
    const Mat wq = random_mat(4, 6, rng, -2.0, 2.0);
    const Mat g = global_graph_embedding(venc, h, wq);
    for (int d = 0; d < 6; ++d) {
      double lo = h(0, d), hi = h(0, d);
      for (int i = 1; i < 5; ++i) {
        lo = std::min(lo, h(i, d));
        hi = std::max(hi, h(i, d));
      }
      CHECK(g(0, d) >= lo - 1e-12);
      CHECK(g(0, d) <= hi + 1e-12);
    }
  }
}

TEST_CASE("global_graph_embedding: 3-node hand computation") {
  // Q chosen so scores are (0, ln 2, ln 4): weights 1/7, 2/7, 4/7
  Mat h(3, 2);
  h(0, 0) = 0.0;
  h(0, 1) = 1.0;
  h(1, 0) = std::log(2.0);
  h(1, 1) = 0.0;
  h(2, 0) = std::log(4.0);
  h(2, 1) = -1.0;
  Mat venc(1, 1);
  venc(0, 0) = 1.0;
  Mat wq(1, 2);
  wq(0, 0) = 1.0;
  wq(0, 1) = 0.0;  // Q = (1, 0); scores = h column 0
  const Mat g = global_graph_embedding(venc, h, wq);
  const double expected0 = (1.0 * 0.0 + 2.0 * std::log(2.0) + 4.0 * std::log(4.0)) / 7.0;
  const double expected1 = (1.0 * 1.0 + 2.0 * 0.0 + 4.0 * -1.0) / 7.0;
  CHECK(g(0, 0) == doctest::Approx(expected0).epsilon(1e-6));
  CHECK(g(0, 1) == doctest::Approx(expected1).epsilon(1e-6));
}

TEST_CASE("customer_embedding: empty, singleton, order-free") {
  Rng rng(5);
  const Mat h = random_mat(6, 4, rng);
  const Mat zero = customer_embedding({}, h);
  for (double v : zero.v) CHECK(v == 0.0);

  const Mat single = customer_embedding({3}, h);
  for (int d = 0; d < 4; ++d) CHECK(single(0, d) == h(3, d));

  const Mat sum = customer_embedding({1, 2, 4}, h);
  for (int d = 0; d < 4; ++d) CHECK(sum(0, d) == doctest::Approx(h(1, d) + h(2, d) + h(4, d)));
}

TEST_CASE("action_distribution: a single unmasked node takes all the mass") {
  Fixture f = make_fixture(6);
  const EnvState s = reset(f.instance);
  std::vector<std::uint8_t> legal(f.instance.network.node_count, 0);
  legal[2] = 1;
  const ActionDistribution dist = action_distribution(
      f.embeddings, s.vehicle, legal, f.params.head, f.instance.horizon_U, f.instance.customer_count());
  CHECK(dist.probabilities[2] == doctest::Approx(1.0).epsilon(1e-6));
  for (int i = 0; i < f.instance.network.node_count; ++i)
    if (i != 2) CHECK(dist.probabilities[i] < 1e-8);
}

TEST_CASE("action_distribution: logits stay inside the clip") {
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    Fixture f = make_fixture(seed, 6);
    EnvState s = reset(f.instance);
    const auto legal = legal_action_mask(f.instance, s);
    const ActionDistribution dist =
        action_distribution(f.embeddings, s.vehicle, legal, f.params.head, f.instance.horizon_U,
                            f.instance.customer_count());
    for (double u : dist.logits) CHECK(std::abs(u) <= f.params.head.clip_C);
  }
}

TEST_CASE("action_distribution matches a high-precision softmax oracle") {
  Fixture f = make_fixture(10, 7);
  Rng rng(11);
  EnvState s = reset(f.instance);
  const auto legal = legal_action_mask(f.instance, s);
  const ActionDistribution dist = action_distribution(
      f.embeddings, s.vehicle, legal, f.params.head, f.instance.horizon_U, f.instance.customer_count());
  const auto oracle = testing::longdouble_masked_softmax(dist.logits, legal, f.params.head.mask_Z);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(std::abs(dist.probabilities[i] - oracle[i]) < 1e-6);
}

TEST_CASE("action_distribution errors when everything is masked") {
  Fixture f = make_fixture(12);
  const EnvState s = reset(f.instance);
  const std::vector<std::uint8_t> legal(f.instance.network.node_count, 0);
  CHECK_THROWS_AS(action_distribution(f.embeddings, s.vehicle, legal, f.params.head,
                                      f.instance.horizon_U, f.instance.customer_count()),
                  std::logic_error);
}

TEST_CASE("masked probabilities leak less than 1e-8; legal ones sum to 1") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Fixture f = make_fixture(100 + seed, 6, seed % 2 ? 0.5 : 0.0);
    Rng rng(seed);
    EnvState s = reset(f.instance);
    while (!s.terminal) {
      const auto legal = legal_action_mask(f.instance, s);
      const ActionDistribution dist =
          action_distribution(f.embeddings, s.vehicle, legal, f.params.head, f.instance.horizon_U,
                              f.instance.customer_count());
      double legal_sum = 0.0;
      for (std::size_t i = 0; i < legal.size(); ++i) {
        if (legal[i])
          legal_sum += dist.probabilities[i];
        else
          CHECK(dist.probabilities[i] < 1e-8);
      }
      CHECK(std::abs(legal_sum - 1.0) < 1e-6);
      std::vector<int> options;
      for (int v = 0; v < f.instance.network.node_count; ++v)
        if (legal[v]) options.push_back(v);
      s = step(f.instance, s, options[rng.uniform_int(0, int(options.size()) - 1)]).next_state;
    }
  }
}

TEST_CASE("masked_softmax is invariant to shifting the legal logits") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 8;
    std::vector<double> logits(n);
    std::vector<std::uint8_t> legal(n);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      logits[i] = rng.uniform(-10.0, 10.0);
      legal[i] = rng.uniform() < 0.6;
      count += legal[i];
    }
    if (!count) legal[0] = 1;
    const double shift = rng.uniform(-5.0, 5.0);
    std::vector<double> shifted = logits;
    for (int i = 0; i < n; ++i)
      if (legal[i]) shifted[i] += shift;
    const auto a = masked_softmax(logits, legal, -1e9);
    const auto b = masked_softmax(shifted, legal, -1e9);
    for (int i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
  }
}

TEST_CASE("policy tape forward equals the plain action distribution") {
  for (std::uint64_t seed : {21ull, 22ull}) {
    Fixture f = make_fixture(seed, 6, 0.3);
    PolicyParameters grads = zeros_like(f.params);
    EpisodeGraph graph = begin_episode_graph(f.cfg, f.params, grads, f.state);
    Rng rng(seed);
    EnvState s = reset(f.instance);
    while (!s.terminal) {
      const auto legal = legal_action_mask(f.instance, s);
      const ActionDistribution plain =
          policy_forward(f.cfg, f.params, f.state, s.vehicle, legal, f.instance.horizon_U,
                         f.instance.customer_count());
      const Tape::Id probs = append_action_probs(graph, f.cfg, s.vehicle, legal,
                                                 f.instance.horizon_U, f.instance.customer_count());
      for (int i = 0; i < f.instance.network.node_count; ++i)
        CHECK(graph.tape.value(probs)(0, i) ==
              doctest::Approx(plain.probabilities[i]).epsilon(1e-12));
      std::vector<int> options;
      for (int v = 0; v < f.instance.network.node_count; ++v)
        if (legal[v]) options.push_back(v);
      s = step(f.instance, s, options[rng.uniform_int(0, int(options.size()) - 1)]).next_state;
    }
  }
}

TEST_CASE("log-probability is sensitive to the remaining horizon") {
  // d log p / d tau must be nonzero for generic parameters; allow 1 miss in 20
  int sensitive = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Fixture f = make_fixture(300 + seed, 5);
    EnvState s = reset(f.instance);
    s = step(f.instance, s, 1).next_state;  // away from reset so tau < U
    if (s.terminal) {
      ++sensitive;
      continue;
    }
    const auto legal = legal_action_mask(f.instance, s);
    int action = -1;
    for (int v = 0; v < f.instance.network.node_count && action < 0; ++v)
      if (legal[v]) action = v;

    const auto logp_at = [&](double tau) {
      VehicleState vs = s.vehicle;
      vs.remaining_horizon = tau;
      const ActionDistribution d = policy_forward(f.cfg, f.params, f.state, vs, legal,
                                                  f.instance.horizon_U, f.instance.customer_count());
      return std::log(d.probabilities[action]);
    };
    const double eps = 1e-5;
    const double grad =
        (logp_at(s.vehicle.remaining_horizon + eps) - logp_at(s.vehicle.remaining_horizon - eps)) /
        (2 * eps);
    if (std::abs(grad) > 1e-10) ++sensitive;
  }
  CHECK(sensitive >= 19);
}

TEST_CASE("end-to-end gradient check on a 6-node instance") {
  Fixture f = make_fixture(31, 5);  // 6 nodes
  PolicyParameters grads = zeros_like(f.params);

  EnvState s0 = reset(f.instance);
  const auto legal = legal_action_mask(f.instance, s0);
  int action = -1;
  for (int v = f.instance.network.node_count - 1; v >= 0 && action < 0; --v)
    if (legal[v]) action = v;

  const auto neg_logp = [&](PolicyParameters& p, PolicyParameters* g) {
    PolicyParameters unused = g ? PolicyParameters{} : zeros_like(p);
    EpisodeGraph graph = begin_episode_graph(f.cfg, p, g ? *g : unused, f.state);
    const Tape::Id probs = append_action_probs(graph, f.cfg, s0.vehicle, legal,
                                               f.instance.horizon_U, f.instance.customer_count());
    const Tape::Id logp = graph.tape.log_entry(probs, action);
    const Tape::Id loss = graph.tape.weighted_sum({logp}, {-1.0});
    if (g) graph.tape.backward(loss);
    return graph.tape.value(loss)(0, 0);
  };
  neg_logp(f.params, &grads);

  const std::size_t total = parameter_count(f.params);
  Rng rng(17);
  constexpr double eps = 1e-5;
  for (int checked = 0; checked < 60; ++checked) {
    const std::size_t idx = rng.next_u64() % total;
    add_flat(f.params, idx, eps);
    const double up = neg_logp(f.params, nullptr);
    add_flat(f.params, idx, -2 * eps);
    const double down = neg_logp(f.params, nullptr);
    add_flat(f.params, idx, eps);
    const double fd = (up - down) / (2 * eps);
    const double analytic = get_flat(grads, idx);
    CHECK(testing::rel_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("ablations change the context layout as configured") {
  PolicyConfig cfg = small_config();
  CHECK(cfg.context_input_dim() == 3 * cfg.embed_dim + cfg.tau_embed_dim);
  cfg.use_global_embedding = false;
  CHECK(cfg.context_input_dim() == 2 * cfg.embed_dim + cfg.tau_embed_dim);
  cfg.use_global_embedding = true;
  cfg.use_horizon_in_embedding = false;
  CHECK(cfg.vehicle_dim() == cfg.embed_dim + 1);

  const InstanceSpec inst = generate_euclidean(5, 3, 0.0, 24.0);
  for (auto [edge, global, horizon] :
       {std::tuple{false, true, true}, {true, false, true}, {true, true, false}}) {
    PolicyConfig c = small_config(6);
    c.use_edge_features = edge;
    c.use_global_embedding = global;
    c.use_horizon_in_embedding = horizon;
    const PolicyParameters params = init_parameters(c, 5);
    const NetworkState state = derive_for_policy(c, inst);
    if (!edge) {
      for (double v : state.edge_features_e.v) CHECK(v == 1.0);
    }
    const EnvState s = reset(inst);
    const auto legal = legal_action_mask(inst, s);
    const ActionDistribution dist =
        policy_forward(c, params, state, s.vehicle, legal, inst.horizon_U, inst.customer_count());
    double sum = 0.0;
    for (double p : dist.probabilities) sum += p;
    CHECK(sum == doctest::Approx(1.0));
  }
}
