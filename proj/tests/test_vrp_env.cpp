#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pggat/vrp_env.hpp"

using namespace pggat;

namespace {

InstanceSpec line_fixture() {
  // depot 0, customers 1 (1h away) and 2 (2h away), 1<->2 takes 1h
  InstanceSpec inst;
  inst.network.node_count = 3;
  inst.network.depot = 0;
  inst.network.travel_time = Mat(3, 3);
  inst.network.travel_time(0, 1) = inst.network.travel_time(1, 0) = 1.0;
  inst.network.travel_time(0, 2) = inst.network.travel_time(2, 0) = 2.0;
  inst.network.travel_time(1, 2) = inst.network.travel_time(2, 1) = 1.0;
  inst.horizon_U = 10.0;
  inst.deterministic_customers = {1, 2};
  return inst;
}

InstanceSpec with_arrival(InstanceSpec inst, int node, int step) {
  inst.deterministic_customers.erase(node);
  inst.stochastic_arrivals[node] = step;
  return inst;
}

}  // namespace

TEST_CASE("reset: deterministic EN-50 starts with every request active") {
  const InstanceSpec inst = generate_euclidean(50, 1, 0.0, 24.0);
  const EnvState s = reset(inst);
  CHECK(s.vehicle.active_requests.size() == 50);
  CHECK(s.vehicle.remaining_horizon == doctest::Approx(24.0));
  CHECK(s.vehicle.current_node == inst.network.depot);
  CHECK(s.vehicle.visited == std::set<int>{inst.network.depot});
  CHECK(s.vehicle.decision_step == 0);
  CHECK_FALSE(s.terminal);
}

TEST_CASE("reset: stochastic EN-50 starts with half the requests") {
  const InstanceSpec inst = generate_euclidean(50, 1, 0.5, 18.0);
  const EnvState s = reset(inst);
  CHECK(s.vehicle.active_requests.size() == 25);
}

TEST_CASE("mask: exhausted horizon at a customer masks everything") {
  const InstanceSpec inst = line_fixture();
  EnvState s = reset(inst);
  s.vehicle.current_node = 1;
  s.vehicle.visited = {0, 1};
  s.vehicle.active_requests = {2};
  s.vehicle.remaining_horizon = 0.0;
  const auto legal = legal_action_mask(inst, s);
  for (auto l : legal) CHECK_FALSE(l);
}

TEST_CASE("mask: trivially feasible single-customer instance") {
  InstanceSpec inst = line_fixture();
  inst.network.node_count = 2;
  inst.network.travel_time = Mat(2, 2);
  inst.network.travel_time(0, 1) = inst.network.travel_time(1, 0) = 5.0;
  inst.deterministic_customers = {1};
  inst.horizon_U = 24.0;  // round trip is 10h
  const EnvState s = reset(inst);
  const auto legal = legal_action_mask(inst, s);
  CHECK(legal[0]);
  CHECK(legal[1]);
}

TEST_CASE("mask equals a brute-force per-candidate simulation") {
  const InstanceSpec inst = generate_euclidean(5, 21, 0.4, 6.0);
  Rng rng(7);
  EnvState s = reset(inst);
  int guard = 0;
  while (!s.terminal && guard++ < 40) {
    const auto legal = legal_action_mask(inst, s);
    for (int v = 0; v < inst.network.node_count; ++v) {
      bool expected;
      if (v == inst.network.depot) {
        expected = s.vehicle.remaining_horizon -
                       inst.network.travel_time(s.vehicle.current_node, v) >= 0.0;
      } else if (s.vehicle.visited.count(v)) {
        expected = false;
      } else {
        // simulate the candidate move plus the direct return
        const double after_move = s.vehicle.remaining_horizon -
                                  inst.network.travel_time(s.vehicle.current_node, v);
        const double after_return = after_move - inst.network.travel_time(v, inst.network.depot);
        expected = after_return >= 0.0;
      }
      CHECK(static_cast<bool>(legal[v]) == expected);
    }
    // random legal move
    std::vector<int> options;
    for (int v = 0; v < inst.network.node_count; ++v)
      if (legal[v]) options.push_back(v);
    REQUIRE_FALSE(options.empty());
    s = step(inst, s, options[rng.uniform_int(0, static_cast<int>(options.size()) - 1)]).next_state;
  }
  CHECK(s.terminal);
}

TEST_CASE("mask errors on a terminal state") {
  const InstanceSpec inst = line_fixture();
  EnvState s = reset(inst);
  s = step(inst, s, 0).next_state;  // immediate depot return ends the episode
  CHECK(s.terminal);
  CHECK_THROWS_AS(legal_action_mask(inst, s), std::logic_error);
  CHECK_THROWS_AS(step(inst, s, 1), std::logic_error);
}

TEST_CASE("step: active customer with time left rewards +1") {
  const InstanceSpec inst = line_fixture();
  const StepOutcome out = step(inst, reset(inst), 1);
  CHECK(out.reward == 1.0);
  CHECK_FALSE(out.terminal);
  CHECK(out.next_state.vehicle.remaining_horizon == doctest::Approx(9.0));
  CHECK(out.next_state.vehicle.active_requests == std::set<int>{2});
  CHECK(out.next_state.served == std::set<int>{1});
}

TEST_CASE("step: horizon violation pays -M with M = customer count") {
  InstanceSpec inst = line_fixture();
  inst.horizon_U = 1.5;
  EnvState s = reset(inst);
  s = step(inst, s, 1).next_state;  // 0.5h left at node 1
  const StepOutcome out = step(inst, s, 2);  // needs 1h
  CHECK(out.reward == -2.0);
  CHECK(out.terminal);
  CHECK(out.terminal_kind == TerminalKind::horizon_violated);
}

TEST_CASE("step: hand-simulated 3-node episode") {
  const InstanceSpec inst = line_fixture();
  EnvState s = reset(inst);
  StepOutcome o1 = step(inst, s, 1);
  CHECK(o1.reward == 1.0);
  StepOutcome o2 = step(inst, o1.next_state, 0);
  CHECK(o2.reward == 0.0);
  CHECK(o2.terminal);
  CHECK(o2.terminal_kind == TerminalKind::returned_to_depot);
  CHECK(o2.next_state.served.size() == 1);
}

TEST_CASE("step: serving every customer ends as all_served_and_returned") {
  const InstanceSpec inst = line_fixture();
  EnvState s = reset(inst);
  s = step(inst, s, 1).next_state;
  s = step(inst, s, 2).next_state;
  const StepOutcome out = step(inst, s, 0);
  CHECK(out.terminal_kind == TerminalKind::all_served_and_returned);
}

TEST_CASE("step: stochastic requests join at their decision step") {
  const InstanceSpec inst = with_arrival(line_fixture(), 2, 2);
  EnvState s = reset(inst);
  CHECK(s.vehicle.active_requests == std::set<int>{1});
  s = step(inst, s, 1).next_state;  // decision step 1: nothing arrives
  CHECK(s.vehicle.active_requests.empty());
  const auto legal = legal_action_mask(inst, s);
  CHECK(legal[2]);  // unvisited nodes stay selectable before arrival
  s = step(inst, s, 2).next_state;  // decision step 2: node 2 arrives mid-move
  CHECK(s.vehicle.active_requests.empty());  // it was just visited, so it never activates
}

TEST_CASE("step: visiting a not-yet-active customer earns nothing and consumes the node") {
  const InstanceSpec inst = with_arrival(line_fixture(), 2, 3);
  EnvState s = reset(inst);
  const StepOutcome out = step(inst, s, 2);  // node 2 arrives only at step 3
  CHECK(out.reward == 0.0);
  CHECK(out.next_state.vehicle.visited.count(2) == 1);
  s = out.next_state;
  s = step(inst, s, 1).next_state;
  // a visited node must never re-activate when its arrival step comes up
  CHECK(s.vehicle.active_requests.empty());
  CHECK(s.served == std::set<int>{1});
}

TEST_CASE("rollout: feasibility of 1000 random-policy episodes") {
  const InstanceSpec inst = generate_euclidean(5, 3, 0.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    RolloutOptions options;
    options.mode = DecodeMode::sample;
    options.seed = i;
    const Trajectory traj = rollout(inst, uniform_random_policy(), options);
    REQUIRE(traj.feasible);
    REQUIRE(traj.total_travel <= inst.horizon_U + 1e-9);
    REQUIRE(traj.terminal_kind != TerminalKind::horizon_violated);
  }
}

TEST_CASE("rollout: greedy decode is deterministic") {
  const InstanceSpec inst = generate_euclidean(6, 4, 0.5, 10.0);
  RolloutOptions options;
  options.mode = DecodeMode::greedy;
  const Trajectory a = rollout(inst, uniform_random_policy(), options);
  const Trajectory b = rollout(inst, uniform_random_policy(), options);
  CHECK(a.route(0) == b.route(0));
  CHECK(a.total_travel == b.total_travel);
}

TEST_CASE("rollout: exhausting the customers forces the depot return") {
  const InstanceSpec inst = line_fixture();  // U = 10h, everything reachable
  RolloutOptions options;
  options.mode = DecodeMode::sample;
  options.seed = 5;
  const Trajectory traj = rollout(inst, uniform_random_policy(), options);
  CHECK(traj.steps.back().action == inst.network.depot);
  if (traj.served_count == 2) CHECK(traj.terminal_kind == TerminalKind::all_served_and_returned);
}

TEST_CASE("rollout properties: reward accounting, arrivals, determinism") {
  const InstanceSpec inst = generate_euclidean(8, 17, 0.5, 9.0);
  for (int i = 0; i < 200; ++i) {
    RolloutOptions options;
    options.mode = DecodeMode::sample;
    options.seed = 1000 + i;
    const Trajectory traj = rollout(inst, uniform_random_policy(), options);

    double positive = 0.0;
    std::set<int> rewarded;
    for (const auto& s : traj.steps)
      if (s.reward > 0.0) {
        positive += s.reward;
        CHECK(rewarded.insert(s.action).second);  // each customer rewards at most once
      }
    CHECK(positive == doctest::Approx(traj.served_count));

    // active ∪ visited never shrinks along the trajectory
    std::size_t last = 0;
    for (const auto& s : traj.steps) {
      std::set<int> known = s.state.active_requests;
      known.insert(s.state.visited.begin(), s.state.visited.end());
      CHECK(known.size() >= last);
      last = known.size();
    }

    const Trajectory again = rollout(inst, uniform_random_policy(), options);
    CHECK(again.route(inst.network.depot) == traj.route(inst.network.depot));
  }
}

TEST_CASE("trajectory export carries route, rewards and outcome") {
  const InstanceSpec inst = line_fixture();
  RolloutOptions options;
  options.mode = DecodeMode::greedy;
  const Trajectory traj = rollout(inst, uniform_random_policy(), options);
  const std::string record = trajectory_record(traj, inst);
  CHECK(record.find("\"route\"") != std::string::npos);
  CHECK(record.find("\"served_pct\"") != std::string::npos);
  CHECK(record.find("\"travel_hours\"") != std::string::npos);
}

TEST_CASE("replay_route matches rollout bookkeeping") {
  const InstanceSpec inst = generate_euclidean(6, 9, 0.5, 9.0);
  RolloutOptions options;
  options.mode = DecodeMode::sample;
  options.seed = 3;
  const Trajectory traj = rollout(inst, uniform_random_policy(), options);
  const RouteReplay replay = replay_route(inst, traj.route(inst.network.depot));
  CHECK(replay.feasible);
  CHECK(replay.served_count == traj.served_count);
  CHECK(replay.total_travel == doctest::Approx(traj.total_travel));
}
