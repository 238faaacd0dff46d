#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pggat/vrp_env.hpp"

namespace pggat {

struct SolverResult {
  std::vector<int> route;  // starts and ends at the depot
  int served_count = 0;
  double total_travel = 0.0;  // hours
  bool feasible = false;
  double solve_time = 0.0;  // seconds
  bool clairvoyant = false;  // stochastic instance solved with full knowledge
};

// Exact maximum-service route by depth-first search over customer orders with
// branch-and-bound pruning; ties broken by smaller total travel. Hard-capped
// at 12 customers. Stochastic instances are solved as the clairvoyant
// relaxation over all customers and flagged as such.
SolverResult oracle_exact(const InstanceSpec& instance);

// Steps through the environment, always moving to the nearest selectable
// active customer, returning to the depot when none is left.
SolverResult greedy_nearest_feasible(const InstanceSpec& instance);

struct GaOptions {
  int population = 100;
  int generations = 1000;
  double mutation_rate = 0.01;
};

// Permutation GA with order crossover, per-gene swap mutation, tournament
// selection and single elitism. Fitness decodes the permutation greedily,
// skipping customers the feasibility mask rejects. Deterministic instances
// only.
SolverResult ga_solve(const InstanceSpec& instance, const GaOptions& options, std::uint64_t seed);

struct VnsOptions {
  int max_iterations = 200;
  int k_max = 4;
};

// Variable neighbourhood search from the greedy start: shaking removes k
// random customers, descent re-inserts excluded customers, 2-opts the route
// and swaps included against excluded ones. Objective is lexicographic
// (served desc, travel asc). Deterministic instances only.
SolverResult vns_solve(const InstanceSpec& instance, const VnsOptions& options, std::uint64_t seed,
                       std::vector<std::pair<int, double>>* objective_trace = nullptr);

// Re-derives served count, travel and feasibility from the route alone.
bool verify_result(const InstanceSpec& instance, const SolverResult& result);

}  // namespace pggat
