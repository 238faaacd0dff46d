#include "pggat/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pggat/rng.hpp"

namespace pggat {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_deterministic(const InstanceSpec& instance, const char* solver) {
  if (!instance.stochastic_arrivals.empty())
    throw std::invalid_argument(std::string(solver) + " handles deterministic instances only");
}

double route_travel(const Mat& t, int depot, const std::vector<int>& customers) {
  double total = 0.0;
  int cur = depot;
  for (int c : customers) {
    total += t(cur, c);
    cur = c;
  }
  total += t(cur, depot);
  return total;
}

struct OracleSearch {
  const Mat* times = nullptr;
  int depot = 0;
  double budget = 0.0;
  std::vector<int> customers;
  std::vector<std::vector<int>> order;  // per node: candidate customers by ascending time
  std::vector<char> used;
  std::vector<int> stack;

  int best_served = -1;
  double best_travel = 0.0;
  std::vector<int> best_route;

  void consider(int current, double travel) {
    const double total = travel + (*times)(current, depot);
    if (total > budget) return;
    const int served = static_cast<int>(stack.size());
    if (served > best_served || (served == best_served && total < best_travel)) {
      best_served = served;
      best_travel = total;
      best_route = stack;
    }
  }

  void dfs(int current, double travel) {
    consider(current, travel);

    int reachable = 0;
    for (int c : customers)
      if (!used[c] && travel + (*times)(current, c) + (*times)(c, depot) <= budget) ++reachable;
    const int served = static_cast<int>(stack.size());
    if (served + reachable < best_served) return;
    if (served + reachable == best_served && travel >= best_travel) return;

    for (int c : order[current]) {
      if (used[c]) continue;
      const double leg = (*times)(current, c);
      if (travel + leg + (*times)(c, depot) > budget) continue;
      used[c] = 1;
      stack.push_back(c);
      dfs(c, travel + leg);
      stack.pop_back();
      used[c] = 0;
    }
  }
};

}  // namespace

SolverResult oracle_exact(const InstanceSpec& instance) {
  const auto start = Clock::now();
  instance.validate();
  if (instance.customer_count() > 12)
    throw std::invalid_argument("oracle_exact is capped at 12 customers");

  const RoutingNetwork& net = instance.network;
  OracleSearch search;
  search.times = &net.travel_time;
  search.depot = net.depot;
  search.budget = instance.horizon_U;
  search.customers = net.customers();
  search.used.assign(net.node_count, 0);
  search.order.resize(net.node_count);
  for (int v = 0; v < net.node_count; ++v) {
    std::vector<int> cand = search.customers;
    std::sort(cand.begin(), cand.end(), [&](int a, int b) {
      return std::pair(net.travel_time(v, a), a) < std::pair(net.travel_time(v, b), b);
    });
    search.order[v] = std::move(cand);
  }
  search.dfs(net.depot, 0.0);

  SolverResult result;
  result.clairvoyant = !instance.stochastic_arrivals.empty();
  result.route.push_back(net.depot);
  for (int c : search.best_route) result.route.push_back(c);
  result.route.push_back(net.depot);
  result.served_count = search.best_served;
  result.total_travel = search.best_travel;
  result.feasible = true;
  result.solve_time = seconds_since(start);
  return result;
}

SolverResult greedy_nearest_feasible(const InstanceSpec& instance) {
  const auto start = Clock::now();
  const RoutingNetwork& net = instance.network;

  SolverResult result;
  result.route.push_back(net.depot);
  EnvState state = reset(instance);
  while (!state.terminal) {
    const auto legal = legal_action_mask(instance, state);
    int pick = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int c : state.vehicle.active_requests) {
      if (!legal[c]) continue;
      const double t = net.travel_time(state.vehicle.current_node, c);
      if (t < best) {
        best = t;
        pick = c;
      }
    }
    if (pick < 0) pick = net.depot;
    result.total_travel += net.travel_time(state.vehicle.current_node, pick);
    StepOutcome outcome = step(instance, state, pick);
    result.route.push_back(pick);
    if (outcome.reward > 0.0) ++result.served_count;
    state = std::move(outcome.next_state);
  }
  result.feasible = state.terminal_kind != TerminalKind::horizon_violated;
  result.solve_time = seconds_since(start);
  return result;
}

namespace {

struct Decoded {
  int served = 0;
  double travel = 0.0;
  std::vector<int> visited;
};

// Walks the permutation, serving every customer whose visit plus a direct
// depot return still fits, and skipping the rest.
Decoded decode_permutation(const InstanceSpec& instance, const std::vector<int>& perm) {
  const RoutingNetwork& net = instance.network;
  Decoded d;
  int cur = net.depot;
  double used = 0.0;
  for (int c : perm) {
    const double leg = net.travel_time(cur, c);
    if (used + leg + net.travel_time(c, net.depot) <= instance.horizon_U) {
      used += leg;
      cur = c;
      d.visited.push_back(c);
      ++d.served;
    }
  }
  d.travel = used + net.travel_time(cur, net.depot);
  return d;
}

bool fitter(const Decoded& a, const Decoded& b) {
  if (a.served != b.served) return a.served > b.served;
  return a.travel < b.travel;
}

std::vector<int> order_crossover(const std::vector<int>& p1, const std::vector<int>& p2, Rng& rng) {
  const int n = static_cast<int>(p1.size());
  if (n <= 2) return p1;
  int a = rng.uniform_int(0, n - 1);
  int b = rng.uniform_int(0, n - 1);
  if (a > b) std::swap(a, b);
  std::vector<int> child(n, -1);
  std::set<int> segment;
  for (int i = a; i <= b; ++i) {
    child[i] = p1[i];
    segment.insert(p1[i]);
  }
  int at = (b + 1) % n;
  for (int i = 0; i < n; ++i) {
    const int gene = p2[(b + 1 + i) % n];
    if (segment.count(gene)) continue;
    child[at] = gene;
    at = (at + 1) % n;
  }
  return child;
}

}  // namespace

SolverResult ga_solve(const InstanceSpec& instance, const GaOptions& options, std::uint64_t seed) {
  const auto start = Clock::now();
  instance.validate();
  require_deterministic(instance, "ga_solve");
  if (options.population < 2 || options.generations < 1)
    throw std::invalid_argument("ga_solve: population must be >= 2 and generations >= 1");

  Rng rng(mix_seed(seed, 0x6A5Eull));
  const std::vector<int> base = instance.network.customers();
  const int n = static_cast<int>(base.size());

  std::vector<std::vector<int>> population(options.population, base);
  for (auto& p : population) rng.shuffle(p);
  std::vector<Decoded> decoded(options.population);

  std::vector<int> best_perm;
  Decoded best;
  best.served = -1;

  for (int gen = 0; gen < options.generations; ++gen) {
    for (int i = 0; i < options.population; ++i) {
      decoded[i] = decode_permutation(instance, population[i]);
      if (best.served < 0 || fitter(decoded[i], best)) {
        best = decoded[i];
        best_perm = population[i];
      }
    }
    std::vector<std::vector<int>> next;
    next.reserve(options.population);
    next.push_back(best_perm);  // elitism of 1
    const auto tournament = [&]() -> const std::vector<int>& {
      const int a = rng.uniform_int(0, options.population - 1);
      const int b = rng.uniform_int(0, options.population - 1);
      return fitter(decoded[a], decoded[b]) ? population[a] : population[b];
    };
    while (static_cast<int>(next.size()) < options.population) {
      std::vector<int> child = order_crossover(tournament(), tournament(), rng);
      for (int g = 0; g < n; ++g) {
        if (rng.uniform() < options.mutation_rate) {
          const int other = rng.uniform_int(0, n - 1);
          std::swap(child[g], child[other]);
        }
      }
      next.push_back(std::move(child));
    }
    population = std::move(next);
  }
  for (int i = 0; i < options.population; ++i) {
    decoded[i] = decode_permutation(instance, population[i]);
    if (fitter(decoded[i], best)) {
      best = decoded[i];
      best_perm = population[i];
    }
  }

  SolverResult result;
  result.route.push_back(instance.network.depot);
  for (int c : best.visited) result.route.push_back(c);
  result.route.push_back(instance.network.depot);
  result.served_count = best.served;
  result.total_travel = best.travel;
  result.feasible = true;
  result.solve_time = seconds_since(start);
  return result;
}

namespace {

struct VnsSolution {
  std::vector<int> route;  // customers in visit order
  double travel = 0.0;
};

bool vns_better(const VnsSolution& a, const VnsSolution& b) {
  if (a.route.size() != b.route.size()) return a.route.size() > b.route.size();
  return a.travel < b.travel - 1e-12;
}

std::vector<int> excluded_customers(const InstanceSpec& instance, const std::vector<int>& route) {
  std::set<int> in(route.begin(), route.end());
  std::vector<int> out;
  for (int c : instance.network.customers())
    if (!in.count(c)) out.push_back(c);
  return out;
}

// First-improvement descent: insert excluded customers, 2-opt the route,
// then swap an included customer for an excluded one when it shortens travel.
void vns_descent(const InstanceSpec& instance, VnsSolution& sol) {
  const Mat& t = instance.network.travel_time;
  const int depot = instance.network.depot;

  bool improved = true;
  while (improved) {
    improved = false;

    for (int c : excluded_customers(instance, sol.route)) {
      int best_pos = -1;
      double best_travel = std::numeric_limits<double>::infinity();
      for (int pos = 0; pos <= static_cast<int>(sol.route.size()); ++pos) {
        std::vector<int> candidate = sol.route;
        candidate.insert(candidate.begin() + pos, c);
        const double travel = route_travel(t, depot, candidate);
        if (travel <= instance.horizon_U && travel < best_travel) {
          best_travel = travel;
          best_pos = pos;
        }
      }
      if (best_pos >= 0) {
        sol.route.insert(sol.route.begin() + best_pos, c);
        sol.travel = best_travel;
        improved = true;
        break;
      }
    }
    if (improved) continue;

    const int n = static_cast<int>(sol.route.size());
    for (int i = 0; i < n - 1 && !improved; ++i) {
      for (int j = i + 1; j < n && !improved; ++j) {
        std::vector<int> candidate = sol.route;
        std::reverse(candidate.begin() + i, candidate.begin() + j + 1);
        const double travel = route_travel(t, depot, candidate);
        if (travel < sol.travel - 1e-12) {
          sol.route = std::move(candidate);
          sol.travel = travel;
          improved = true;
        }
      }
    }
    if (improved) continue;

    const std::vector<int> excluded = excluded_customers(instance, sol.route);
    for (int pos = 0; pos < n && !improved; ++pos) {
      for (int c : excluded) {
        std::vector<int> candidate = sol.route;
        candidate[pos] = c;
        const double travel = route_travel(t, depot, candidate);
        if (travel <= instance.horizon_U && travel < sol.travel - 1e-12) {
          sol.route = std::move(candidate);
          sol.travel = travel;
          improved = true;
          break;
        }
      }
    }
  }
}

}  // namespace

SolverResult vns_solve(const InstanceSpec& instance, const VnsOptions& options, std::uint64_t seed,
                       std::vector<std::pair<int, double>>* objective_trace) {
  const auto start = Clock::now();
  instance.validate();
  require_deterministic(instance, "vns_solve");
  if (options.max_iterations < 1 || options.k_max < 1)
    throw std::invalid_argument("vns_solve: iterations and k_max must be >= 1");

  Rng rng(mix_seed(seed, 0x7145ull));
  const Mat& t = instance.network.travel_time;
  const int depot = instance.network.depot;

  const SolverResult greedy = greedy_nearest_feasible(instance);
  VnsSolution best;
  best.route.assign(greedy.route.begin() + 1, greedy.route.end() - 1);
  best.travel = route_travel(t, depot, best.route);
  vns_descent(instance, best);
  if (objective_trace)
    objective_trace->push_back({static_cast<int>(best.route.size()), best.travel});

  int iterations = 0;
  while (iterations < options.max_iterations) {
    int k = 1;
    while (k <= options.k_max && iterations < options.max_iterations) {
      // shake: k random removals, then k random feasible insertions
      VnsSolution shaken = best;
      const int removals = std::min<int>(k, static_cast<int>(shaken.route.size()));
      for (int r = 0; r < removals; ++r) {
        const int pos = rng.uniform_int(0, static_cast<int>(shaken.route.size()) - 1);
        shaken.route.erase(shaken.route.begin() + pos);
      }
      for (int r = 0; r < k; ++r) {
        const std::vector<int> excluded = excluded_customers(instance, shaken.route);
        if (excluded.empty()) break;
        const int c = excluded[rng.uniform_int(0, static_cast<int>(excluded.size()) - 1)];
        const int pos = rng.uniform_int(0, static_cast<int>(shaken.route.size()));
        std::vector<int> candidate = shaken.route;
        candidate.insert(candidate.begin() + pos, c);
        if (route_travel(t, depot, candidate) <= instance.horizon_U)
          shaken.route = std::move(candidate);
      }
      shaken.travel = route_travel(t, depot, shaken.route);
      vns_descent(instance, shaken);
      ++iterations;
      if (vns_better(shaken, best)) {
        best = std::move(shaken);
        k = 1;
      } else {
        ++k;
      }
      if (objective_trace)
        objective_trace->push_back({static_cast<int>(best.route.size()), best.travel});
    }
  }

  SolverResult result;
  result.route.push_back(depot);
  for (int c : best.route) result.route.push_back(c);
  result.route.push_back(depot);
  result.served_count = static_cast<int>(best.route.size());
  result.total_travel = best.travel;
  result.feasible = true;
  result.solve_time = seconds_since(start);
  return result;
}

bool verify_result(const InstanceSpec& instance, const SolverResult& result) {
  const RouteReplay replay = replay_route(instance, result.route);
  if (!replay.feasible) return !result.feasible;
  if (std::abs(replay.total_travel - result.total_travel) > 1e-6) return false;
  if (result.clairvoyant) {
    const int claimed = static_cast<int>(result.route.size()) - 2;
    return result.served_count == claimed;
  }
  return replay.served_count == result.served_count && result.feasible;
}

}  // namespace pggat
