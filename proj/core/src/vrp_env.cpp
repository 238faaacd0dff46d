#include "pggat/vrp_env.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace pggat {

const char* to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::none: return "none";
    case TerminalKind::returned_to_depot: return "returned_to_depot";
    case TerminalKind::horizon_violated: return "horizon_violated";
    case TerminalKind::all_served_and_returned: return "all_served_and_returned";
  }
  return "?";
}

std::vector<int> Trajectory::route(int depot) const {
  std::vector<int> out{depot};
  for (const auto& s : steps) out.push_back(s.action);
  return out;
}

EnvState reset(const InstanceSpec& instance) {
  instance.validate();
  EnvState state;
  state.vehicle.current_node = instance.network.depot;
  state.vehicle.active_requests = instance.deterministic_customers;
  state.vehicle.remaining_horizon = instance.horizon_U;
  state.vehicle.decision_step = 0;
  state.vehicle.visited = {instance.network.depot};
  return state;
}

std::vector<std::uint8_t> legal_action_mask(const InstanceSpec& instance, const EnvState& state) {
  if (state.terminal) throw std::logic_error("legal_action_mask called on terminal state");
  const RoutingNetwork& net = instance.network;
  const VehicleState& v = state.vehicle;
  std::vector<std::uint8_t> legal(net.node_count, 0);
  for (int node = 0; node < net.node_count; ++node) {
    if (node == net.depot) {
      legal[node] = v.remaining_horizon - net.travel_time(v.current_node, node) >= 0.0;
    } else if (!v.visited.count(node)) {
      const double after = v.remaining_horizon - net.travel_time(v.current_node, node) -
                           net.travel_time(node, net.depot);
      legal[node] = after >= 0.0;
    }
  }
  return legal;
}

StepOutcome step(const InstanceSpec& instance, const EnvState& state, int action) {
  if (state.terminal) throw std::logic_error("step called on terminal state");
  const RoutingNetwork& net = instance.network;
  if (action < 0 || action >= net.node_count) throw std::invalid_argument("action out of range");

  const VehicleState& v = state.vehicle;
  const double tau_after = v.remaining_horizon - net.travel_time(v.current_node, action);
  const bool was_active = v.active_requests.count(action) > 0;

  StepOutcome out;
  out.next_state = state;
  VehicleState& nv = out.next_state.vehicle;

  if (action != net.depot && was_active && tau_after > 0.0) {
    out.reward = 1.0;
    out.next_state.served.insert(action);
  } else if (action != net.depot && tau_after <= 0.0) {
    out.reward = -static_cast<double>(instance.customer_count());
  } else {
    out.reward = 0.0;
  }

  nv.current_node = action;
  nv.remaining_horizon = tau_after;
  nv.visited.insert(action);
  nv.active_requests.erase(action);
  nv.decision_step = v.decision_step + 1;
  for (auto [node, arrival] : instance.stochastic_arrivals) {
    if (arrival == nv.decision_step && nv.decision_step <= instance.request_cutoff_K &&
        !nv.visited.count(node)) {
      nv.active_requests.insert(node);
    }
  }

  if (tau_after < 0.0 || (action != net.depot && tau_after <= 0.0)) {
    out.terminal = true;
    out.terminal_kind = TerminalKind::horizon_violated;
  } else if (action == net.depot) {
    out.terminal = true;
    const bool all_served =
        static_cast<int>(out.next_state.served.size()) == instance.customer_count();
    out.terminal_kind =
        all_served ? TerminalKind::all_served_and_returned : TerminalKind::returned_to_depot;
  }
  out.next_state.terminal = out.terminal;
  out.next_state.terminal_kind = out.terminal_kind;
  return out;
}

Trajectory rollout(const InstanceSpec& instance, const PolicyFn& policy, const RolloutOptions& options) {
  const RoutingNetwork& net = instance.network;
  const int n = net.node_count;
  const int pad_to = options.pad_to > 0 ? options.pad_to : n;
  const int k = std::min(options.k_neighbors, n - 1);
  const NetworkState net_state = derive_network_state(instance, k, pad_to);

  Rng rng(mix_seed(options.seed, 0x5011ull));
  const int max_steps = n + instance.request_cutoff_K + 2;

  Trajectory traj;
  EnvState state = reset(instance);
  while (!state.terminal) {
    if (static_cast<int>(traj.steps.size()) >= max_steps)
      throw std::runtime_error("rollout exceeded the episode step guard");

    const auto legal = legal_action_mask(instance, state);
    std::vector<double> probs = policy(instance, net_state, state.vehicle, legal);
    if (static_cast<int>(probs.size()) != n)
      throw std::runtime_error("policy returned a probability vector of wrong length");

    double mass = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!legal[i]) probs[i] = 0.0;
      if (probs[i] < 0.0 || !std::isfinite(probs[i]))
        throw std::runtime_error("policy returned an invalid probability");
      mass += probs[i];
    }
    if (!(mass > 0.0)) throw std::runtime_error("policy assigned no mass to any legal action");

    int action = -1;
    if (options.mode == DecodeMode::greedy) {
      double best = -1.0;
      for (int i = 0; i < n; ++i) {
        if (legal[i] && probs[i] > best) {
          best = probs[i];
          action = i;
        }
      }
    } else {
      const double r = rng.uniform() * mass;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        action = i;
        if (acc > r) break;
      }
    }

    const double leg = net.travel_time(state.vehicle.current_node, action);
    StepOutcome outcome = step(instance, state, action);
    traj.steps.push_back({state.vehicle, action, outcome.reward});
    traj.total_travel += leg;
    if (outcome.reward > 0.0) ++traj.served_count;
    if (outcome.reward < 0.0) traj.feasible = false;
    state = std::move(outcome.next_state);
  }
  traj.terminal_kind = state.terminal_kind;
  return traj;
}

PolicyFn uniform_random_policy() {
  return [](const InstanceSpec&, const NetworkState&, const VehicleState&,
            const std::vector<std::uint8_t>& legal) {
    std::vector<double> probs(legal.size(), 0.0);
    int count = 0;
    for (auto l : legal) count += l;
    if (count > 0) {
      for (std::size_t i = 0; i < legal.size(); ++i)
        if (legal[i]) probs[i] = 1.0 / count;
    }
    return probs;
  };
}

RouteReplay replay_route(const InstanceSpec& instance, const std::vector<int>& route) {
  RouteReplay out;
  const int depot = instance.network.depot;
  if (route.size() < 2 || route.front() != depot || route.back() != depot) {
    out.violation = "route must start and end at the depot";
    return out;
  }
  std::set<int> seen;
  for (std::size_t i = 1; i + 1 < route.size(); ++i) {
    if (route[i] == depot) {
      out.violation = "depot appears mid-route";
      return out;
    }
    if (!seen.insert(route[i]).second) {
      out.violation = "customer repeated";
      return out;
    }
  }

  EnvState state = reset(instance);
  for (std::size_t i = 1; i < route.size(); ++i) {
    if (state.terminal) {
      out.violation = "route continues past a terminal state";
      return out;
    }
    out.total_travel += instance.network.travel_time(state.vehicle.current_node, route[i]);
    StepOutcome outcome = step(instance, state, route[i]);
    if (outcome.reward > 0.0) ++out.served_count;
    state = std::move(outcome.next_state);
  }
  if (out.total_travel > instance.horizon_U + 1e-9) {
    out.violation = "route exceeds the time horizon";
    return out;
  }
  out.feasible = true;
  return out;
}

std::string trajectory_record(const Trajectory& trajectory, const InstanceSpec& instance) {
  nlohmann::json j;
  j["route"] = trajectory.route(instance.network.depot);
  std::vector<double> rewards;
  rewards.reserve(trajectory.steps.size());
  for (const auto& s : trajectory.steps) rewards.push_back(s.reward);
  j["rewards"] = rewards;
  j["served"] = trajectory.served_count;
  j["served_pct"] = 100.0 * trajectory.served_count / instance.customer_count();
  j["travel_hours"] = trajectory.total_travel;
  j["feasible"] = trajectory.feasible;
  j["terminal"] = to_string(trajectory.terminal_kind);
  return j.dump();
}

}  // namespace pggat
