#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pggat/matrix.hpp"
#include "pggat/rng.hpp"

namespace pggat {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unknown or unsupported file schema version.
struct VersionError : FormatError {
  using FormatError::FormatError;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Complete directed routing network. travel_time is in hours, zero on the
// diagonal and strictly positive elsewhere; asymmetry is allowed.
struct RoutingNetwork {
  int node_count = 0;
  int depot = 0;
  Mat travel_time;                 // node_count x node_count
  std::vector<Point> coordinates;  // empty when positions are unknown

  std::vector<int> customers() const;
  void validate() const;  // throws std::invalid_argument on broken invariants

  bool operator==(const RoutingNetwork&) const = default;
};

// One VRP-FTH problem instance: a routing network, the time horizon, and the
// split of customers into requests known at departure and requests that
// arrive at a fixed decision step in [1, request_cutoff_K].
struct InstanceSpec {
  RoutingNetwork network;
  double horizon_U = 0.0;  // hours
  std::set<int> deterministic_customers;
  std::map<int, int> stochastic_arrivals;  // customer node -> arrival decision step
  int request_cutoff_K = 10;
  std::string family = "manual";
  std::uint64_t seed = 0;

  int customer_count() const { return network.node_count - 1; }
  void validate() const;

  bool operator==(const InstanceSpec&) const = default;
};

// Feature triple (X, A, e) derived from an instance.
//
// X rows hold the min-max-normalized travel times from the node to every
// node (diagonal clamped to 0), zero-padded to pad_to, followed by a depot
// indicator bit. A is kept as sorted out-neighbour lists; every list holds
// the k nearest nodes by travel time plus the node itself. e_ij = 1 - t'_ij
// with t' min-max normalized over the off-diagonal entries; the diagonal is
// set to 1 (zero self travel time).
struct NetworkState {
  Mat node_features_X;                        // node_count x (pad_to + 1)
  std::vector<std::vector<int>> adjacency_A;  // out-neighbour lists, self-loop included
  Mat edge_features_e;                        // node_count x node_count, entries in [0,1]
};

// Travel times are kept on a 1e-6-hour grid so the 6-decimal file format
// round-trips exactly.
double quantize_hours(double hours);

InstanceSpec generate_euclidean(int customer_count, std::uint64_t seed, double stochastic_fraction,
                                double horizon_U, int request_cutoff_K = 10);

InstanceSpec generate_road_style(int customer_count, std::uint64_t seed, double stochastic_fraction,
                                 double horizon_U, int request_cutoff_K = 10, bool asymmetric = false);

NetworkState derive_network_state(const InstanceSpec& instance, int k_neighbors, int pad_to);

void save_instance(const InstanceSpec& instance, const std::string& path);
InstanceSpec load_instance(const std::string& path);

// Sparse planar graph behind the road-style generator, exposed so the
// shortest-path closure can be cross-checked against an independent search.
struct RoadGraph {
  struct Edge {
    int from = 0;
    int to = 0;
    std::int64_t microhours = 0;
  };
  int node_count = 0;
  std::vector<Point> points;
  std::vector<Edge> edges;  // both directions listed explicitly
};

RoadGraph sample_road_graph(int node_count, Rng& rng, bool asymmetric = false);
bool road_graph_connected(const RoadGraph& graph);
Mat road_travel_times(const RoadGraph& graph);  // all-pairs shortest paths, hours

}  // namespace pggat
