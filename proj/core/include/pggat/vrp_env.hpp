#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "pggat/routing_instance.hpp"

namespace pggat {

enum class TerminalKind { none, returned_to_depot, horizon_violated, all_served_and_returned };

const char* to_string(TerminalKind kind);

struct VehicleState {
  int current_node = 0;
  std::set<int> active_requests;
  double remaining_horizon = 0.0;  // hours; may go negative on a violating move
  int decision_step = 0;
  std::set<int> visited;

  bool operator==(const VehicleState&) const = default;
};

// Full environment state. served holds the customers that earned the unit
// reward; a node visited before its request arrives is in visited but never
// in served.
struct EnvState {
  VehicleState vehicle;
  std::set<int> served;
  bool terminal = false;
  TerminalKind terminal_kind = TerminalKind::none;

  bool operator==(const EnvState&) const = default;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  bool terminal = false;
  TerminalKind terminal_kind = TerminalKind::none;
};

struct TrajectoryStep {
  VehicleState state;  // state at decision time
  int action = 0;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int served_count = 0;
  double total_travel = 0.0;  // hours, every leg including the final one
  bool feasible = true;       // no failure penalty occurred
  TerminalKind terminal_kind = TerminalKind::none;

  std::vector<int> route(int depot) const;  // depot followed by the visited sequence
};

EnvState reset(const InstanceSpec& instance);

// 1 = selectable. A customer is selectable iff it is unvisited and the move
// plus a direct depot return fits the remaining horizon; the depot is
// selectable iff the direct move fits.
std::vector<std::uint8_t> legal_action_mask(const InstanceSpec& instance, const EnvState& state);

StepOutcome step(const InstanceSpec& instance, const EnvState& state, int action);

enum class DecodeMode { sample, greedy };

using PolicyFn = std::function<std::vector<double>(
    const InstanceSpec&, const NetworkState&, const VehicleState&, const std::vector<std::uint8_t>&)>;

struct RolloutOptions {
  DecodeMode mode = DecodeMode::greedy;
  std::uint64_t seed = 0;
  int k_neighbors = 10;  // clamped to node_count - 1
  int pad_to = 0;        // 0 -> node_count
};

Trajectory rollout(const InstanceSpec& instance, const PolicyFn& policy, const RolloutOptions& options);

// Uniform distribution over the selectable nodes.
PolicyFn uniform_random_policy();

// Replays a stored route through the environment; used to verify solver and
// policy outputs independently of how they were produced.
struct RouteReplay {
  int served_count = 0;
  double total_travel = 0.0;
  bool feasible = false;  // starts/ends at depot, no repeats, within horizon
  std::string violation;  // empty when feasible
};
RouteReplay replay_route(const InstanceSpec& instance, const std::vector<int>& route);

// One-line JSON record of an episode (route, rewards, served %, hours).
std::string trajectory_record(const Trajectory& trajectory, const InstanceSpec& instance);

}  // namespace pggat
