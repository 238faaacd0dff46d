#include "pggat/routing_instance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace pggat {

namespace {

// Side length of the generator square, in hours of travel. Calibrated so the
// default horizons leave the budget binding at the 50..100-customer sizes.
constexpr double kSquareHours = 6.5;
constexpr int kRoadDegree = 3;
constexpr int kRoadRetries = 32;
constexpr std::int64_t kMicro = 1000000;

double euclid(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Marks round(fraction * customer_count) customers as stochastic with arrival
// steps uniform in [1, K]; the rest are deterministic.
void split_customers(InstanceSpec& inst, double stochastic_fraction, Rng& rng) {
  const int n = inst.customer_count();
  std::vector<int> customers = inst.network.customers();
  rng.shuffle(customers);
  const int stochastic = static_cast<int>(std::llround(stochastic_fraction * n));
  for (int i = 0; i < n; ++i) {
    if (i < stochastic) {
      inst.stochastic_arrivals[customers[i]] = rng.uniform_int(1, inst.request_cutoff_K);
    } else {
      inst.deterministic_customers.insert(customers[i]);
    }
  }
}

void check_generator_args(int customer_count, double stochastic_fraction, double horizon_U,
                          int request_cutoff_K) {
  if (customer_count < 1) throw std::invalid_argument("customer_count must be >= 1");
  if (stochastic_fraction < 0.0 || stochastic_fraction > 1.0)
    throw std::invalid_argument("stochastic_fraction must be in [0,1]");
  if (!(horizon_U > 0.0)) throw std::invalid_argument("horizon_U must be positive");
  if (request_cutoff_K < 1) throw std::invalid_argument("request_cutoff_K must be >= 1");
}

}  // namespace

double quantize_hours(double hours) {
  return static_cast<double>(std::llround(hours * 1e6)) / 1e6;
}

std::vector<int> RoutingNetwork::customers() const {
  std::vector<int> out;
  out.reserve(node_count > 0 ? node_count - 1 : 0);
  for (int v = 0; v < node_count; ++v)
    if (v != depot) out.push_back(v);
  return out;
}

void RoutingNetwork::validate() const {
  if (node_count < 2) throw std::invalid_argument("network needs a depot and at least one customer");
  if (depot < 0 || depot >= node_count) throw std::invalid_argument("depot index out of range");
  if (travel_time.rows != node_count || travel_time.cols != node_count)
    throw std::invalid_argument("travel_time shape does not match node_count");
  if (!coordinates.empty() && static_cast<int>(coordinates.size()) != node_count)
    throw std::invalid_argument("coordinate count does not match node_count");
  for (int i = 0; i < node_count; ++i) {
    for (int j = 0; j < node_count; ++j) {
      const double t = travel_time(i, j);
      if (!std::isfinite(t)) throw std::invalid_argument("non-finite travel time");
      if (i == j && t != 0.0) throw std::invalid_argument("travel_time diagonal must be zero");
      if (i != j && !(t > 0.0)) throw std::invalid_argument("off-diagonal travel times must be positive");
    }
  }
}

void InstanceSpec::validate() const {
  network.validate();
  if (!(horizon_U > 0.0)) throw std::invalid_argument("horizon_U must be positive");
  if (request_cutoff_K < 1) throw std::invalid_argument("request_cutoff_K must be >= 1");
  std::set<int> all;
  for (int c : deterministic_customers) {
    if (c == network.depot || c < 0 || c >= network.node_count)
      throw std::invalid_argument("deterministic customer index out of range");
    all.insert(c);
  }
  for (auto [c, step] : stochastic_arrivals) {
    if (c == network.depot || c < 0 || c >= network.node_count)
      throw std::invalid_argument("stochastic customer index out of range");
    if (deterministic_customers.count(c))
      throw std::invalid_argument("customer is both deterministic and stochastic");
    if (step < 1 || step > request_cutoff_K)
      throw std::invalid_argument("arrival step outside [1, K]");
    all.insert(c);
  }
  if (static_cast<int>(all.size()) != customer_count())
    throw std::invalid_argument("customer sets do not cover all customer nodes");
}

InstanceSpec generate_euclidean(int customer_count, std::uint64_t seed, double stochastic_fraction,
                                double horizon_U, int request_cutoff_K) {
  check_generator_args(customer_count, stochastic_fraction, horizon_U, request_cutoff_K);
  Rng rng(mix_seed(seed, 0xE0C11Dull));

  InstanceSpec inst;
  inst.family = "euclidean";
  inst.seed = seed;
  inst.horizon_U = quantize_hours(horizon_U);
  inst.request_cutoff_K = request_cutoff_K;

  const int n = customer_count + 1;
  RoutingNetwork& net = inst.network;
  net.node_count = n;
  net.depot = 0;
  net.coordinates.resize(n);
  for (int v = 0; v < n; ++v) {
    net.coordinates[v].x = quantize_hours(rng.uniform() * kSquareHours);
    net.coordinates[v].y = quantize_hours(rng.uniform() * kSquareHours);
  }
  net.travel_time = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double t = quantize_hours(euclid(net.coordinates[i], net.coordinates[j]));
      t = std::max(t, 1e-6);
      net.travel_time(i, j) = t;
      net.travel_time(j, i) = t;
    }
  }

  split_customers(inst, stochastic_fraction, rng);
  inst.validate();
  return inst;
}

RoadGraph sample_road_graph(int node_count, Rng& rng, bool asymmetric) {
  RoadGraph g;
  g.node_count = node_count;
  g.points.resize(node_count);
  for (auto& p : g.points) {
    p.x = quantize_hours(rng.uniform() * kSquareHours);
    p.y = quantize_hours(rng.uniform() * kSquareHours);
  }

  // Union of k-nearest-neighbour links, weighted by distance times a detour
  // factor so the shortest-path metric is not Euclidean.
  std::set<std::pair<int, int>> pairs;
  for (int i = 0; i < node_count; ++i) {
    std::vector<std::pair<double, int>> order;
    for (int j = 0; j < node_count; ++j)
      if (j != i) order.push_back({euclid(g.points[i], g.points[j]), j});
    std::sort(order.begin(), order.end());
    const int degree = std::min<int>(kRoadDegree, static_cast<int>(order.size()));
    for (int d = 0; d < degree; ++d) {
      int j = order[d].second;
      pairs.insert({std::min(i, j), std::max(i, j)});
    }
  }
  for (auto [i, j] : pairs) {
    const double base = euclid(g.points[i], g.points[j]);
    const double detour = rng.uniform(1.05, 1.35);
    const double skew = asymmetric ? rng.uniform(0.0, 0.10) : 0.0;
    const auto weight = [&](double factor) {
      return std::max<std::int64_t>(1, std::llround(base * factor * 1e6));
    };
    g.edges.push_back({i, j, weight(detour * (1.0 + skew))});
    g.edges.push_back({j, i, weight(detour)});
  }
  return g;
}

bool road_graph_connected(const RoadGraph& graph) {
  if (graph.node_count == 0) return false;
  std::vector<std::vector<int>> adj(graph.node_count);
  for (const auto& e : graph.edges) adj[e.from].push_back(e.to);
  std::vector<char> seen(graph.node_count, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int visited = 1;
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++visited;
        frontier.push(w);
      }
    }
  }
  return visited == graph.node_count;
}

Mat road_travel_times(const RoadGraph& graph) {
  const int n = graph.node_count;
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::vector<std::pair<int, std::int64_t>>> adj(n);
  for (const auto& e : graph.edges) adj[e.from].push_back({e.to, e.microhours});

  Mat times(n, n);
  std::vector<std::int64_t> dist(n);
  using Item = std::pair<std::int64_t, int>;
  for (int src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kInf);
    dist[src] = 0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.push({0, src});
    while (!heap.empty()) {
      auto [d, v] = heap.top();
      heap.pop();
      if (d > dist[v]) continue;
      for (auto [w, weight] : adj[v]) {
        if (d + weight < dist[w]) {
          dist[w] = d + weight;
          heap.push({dist[w], w});
        }
      }
    }
    for (int j = 0; j < n; ++j) {
      if (dist[j] >= kInf) throw std::invalid_argument("road graph is disconnected");
      times(src, j) = static_cast<double>(dist[j]) / 1e6;
    }
  }
  return times;
}

InstanceSpec generate_road_style(int customer_count, std::uint64_t seed, double stochastic_fraction,
                                 double horizon_U, int request_cutoff_K, bool asymmetric) {
  check_generator_args(customer_count, stochastic_fraction, horizon_U, request_cutoff_K);
  Rng rng(mix_seed(seed, 0x0A0Dull));

  const int n = customer_count + 1;
  RoadGraph graph;
  bool connected = false;
  for (int attempt = 0; attempt < kRoadRetries && !connected; ++attempt) {
    graph = sample_road_graph(n, rng, asymmetric);
    connected = road_graph_connected(graph);
  }
  if (!connected) throw std::runtime_error("road-style generator: no connected graph after retries");

  InstanceSpec inst;
  inst.family = "road";
  inst.seed = seed;
  inst.horizon_U = quantize_hours(horizon_U);
  inst.request_cutoff_K = request_cutoff_K;
  inst.network.node_count = n;
  inst.network.depot = 0;
  inst.network.coordinates = graph.points;
  inst.network.travel_time = road_travel_times(graph);

  split_customers(inst, stochastic_fraction, rng);
  inst.validate();
  return inst;
}

NetworkState derive_network_state(const InstanceSpec& instance, int k_neighbors, int pad_to) {
  instance.validate();
  const RoutingNetwork& net = instance.network;
  const int n = net.node_count;
  if (k_neighbors < 1 || k_neighbors >= n)
    throw std::invalid_argument("k_neighbors must be in [1, node_count)");
  if (pad_to < n) throw std::invalid_argument("pad_to must be >= node_count");

  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      t_min = std::min(t_min, net.travel_time(i, j));
      t_max = std::max(t_max, net.travel_time(i, j));
    }
  }
  if (!(t_max > t_min))
    throw std::invalid_argument("degenerate network: all travel times equal, min-max scale undefined");
  const double span = t_max - t_min;
  const auto normalized = [&](double t) { return std::clamp((t - t_min) / span, 0.0, 1.0); };

  NetworkState state;
  state.node_features_X = Mat(n, pad_to + 1);
  for (int v = 0; v < n; ++v) {
    for (int j = 0; j < n; ++j)
      state.node_features_X(v, j) = (v == j) ? 0.0 : normalized(net.travel_time(v, j));
    state.node_features_X(v, pad_to) = (v == net.depot) ? 1.0 : 0.0;
  }

  state.adjacency_A.resize(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> order;
    order.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back({net.travel_time(i, j), j});
    std::sort(order.begin(), order.end());
    auto& row = state.adjacency_A[i];
    for (int d = 0; d < k_neighbors; ++d) row.push_back(order[d].second);
    row.push_back(i);
    std::sort(row.begin(), row.end());
  }

  state.edge_features_e = Mat(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      state.edge_features_e(i, j) = (i == j) ? 1.0 : 1.0 - normalized(net.travel_time(i, j));

  return state;
}

namespace {

std::string format_hours(double h) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", h);
  return buf;
}

}  // namespace

void save_instance(const InstanceSpec& instance, const std::string& path) {
  instance.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const RoutingNetwork& net = instance.network;

  out << "pggat-instance v1\n";
  out << "family " << instance.family << "\n";
  out << "seed " << instance.seed << "\n";
  out << "horizon_u " << format_hours(instance.horizon_U) << "\n";
  out << "cutoff_k " << instance.request_cutoff_K << "\n";
  out << "nodes " << net.node_count << "\n";
  for (int v = 0; v < net.node_count; ++v) {
    out << "node " << v << " ";
    if (net.coordinates.empty())
      out << "- -";
    else
      out << format_hours(net.coordinates[v].x) << " " << format_hours(net.coordinates[v].y);
    out << " " << (v == net.depot ? 1 : 0) << "\n";
  }
  out << "travel_time\n";
  for (int i = 0; i < net.node_count; ++i) {
    for (int j = 0; j < net.node_count; ++j) {
      if (j) out << " ";
      out << format_hours(net.travel_time(i, j));
    }
    out << "\n";
  }
  out << "stochastic_arrivals " << instance.stochastic_arrivals.size() << "\n";
  for (auto [node, step] : instance.stochastic_arrivals) out << node << " " << step << "\n";
  out << "end\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

std::string next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("truncated instance file");
  return line;
}

template <typename T>
T parse_tagged(std::istream& in, const std::string& tag) {
  std::istringstream ls(next_line(in));
  std::string got;
  T value{};
  if (!(ls >> got >> value) || got != tag) throw FormatError("expected '" + tag + "' line");
  return value;
}

}  // namespace

InstanceSpec load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);

  const std::string header = next_line(in);
  if (header.rfind("pggat-instance", 0) != 0) throw FormatError("not a pggat instance file");
  if (header != "pggat-instance v1") throw VersionError("unsupported instance file version: " + header);

  InstanceSpec inst;
  inst.family = parse_tagged<std::string>(in, "family");
  inst.seed = parse_tagged<std::uint64_t>(in, "seed");
  inst.horizon_U = parse_tagged<double>(in, "horizon_u");
  inst.request_cutoff_K = parse_tagged<int>(in, "cutoff_k");
  const int n = parse_tagged<int>(in, "nodes");
  if (n < 2 || n > 100000) throw FormatError("implausible node count");

  RoutingNetwork& net = inst.network;
  net.node_count = n;
  net.depot = -1;
  bool have_coords = true;
  net.coordinates.assign(n, {});
  for (int v = 0; v < n; ++v) {
    std::istringstream ls(next_line(in));
    std::string tag, xs, ys;
    int index = -1, is_depot = 0;
    if (!(ls >> tag >> index >> xs >> ys >> is_depot) || tag != "node" || index != v)
      throw FormatError("malformed node line");
    if (xs == "-" || ys == "-") {
      have_coords = false;
    } else {
      net.coordinates[v].x = std::stod(xs);
      net.coordinates[v].y = std::stod(ys);
    }
    if (is_depot) {
      if (net.depot >= 0) throw FormatError("multiple depot nodes");
      net.depot = v;
    }
  }
  if (!have_coords) net.coordinates.clear();
  if (net.depot < 0) throw FormatError("no depot node");

  if (next_line(in) != "travel_time") throw FormatError("expected travel_time block");
  net.travel_time = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    std::istringstream ls(next_line(in));
    for (int j = 0; j < n; ++j) {
      if (!(ls >> net.travel_time(i, j))) throw FormatError("truncated travel_time row");
    }
  }

  const int arrivals = parse_tagged<int>(in, "stochastic_arrivals");
  if (arrivals < 0 || arrivals > n) throw FormatError("implausible arrival count");
  for (int i = 0; i < arrivals; ++i) {
    std::istringstream ls(next_line(in));
    int node = -1, step = -1;
    if (!(ls >> node >> step)) throw FormatError("malformed arrival line");
    inst.stochastic_arrivals[node] = step;
  }
  if (next_line(in) != "end") throw FormatError("missing end marker");

  for (int v = 0; v < n; ++v)
    if (v != net.depot && !inst.stochastic_arrivals.count(v)) inst.deterministic_customers.insert(v);

  inst.validate();
  return inst;
}

}  // namespace pggat
