#pragma once

#include <set>
#include <vector>

#include "pggat/encoder.hpp"
#include "pggat/vrp_env.hpp"

namespace pggat {

struct HeadParameters {
  Mat vehicle_query;      // vehicle_dim x embed_dim
  Mat tau_embed_weight;   // 1 x tau_dim
  Mat tau_embed_bias;     // 1 x tau_dim
  Mat context_projection; // context_input_dim x context_dim
  Mat compat_query;       // context_dim x context_dim
  Mat compat_key;         // embed_dim x context_dim
  double clip_C = 10.0;
  double mask_Z = -1e9;
  bool use_global_embedding = true;
  bool use_horizon_in_embedding = true;
};

struct ActionDistribution {
  std::vector<double> probabilities;
  std::vector<double> logits;       // clipped compatibilities, |u| <= C
  std::vector<std::uint8_t> legal;  // mask used, 1 = selectable
};

// Numeric rendering of the vehicle state: the current node's embedding,
// the normalized remaining horizon (when included), and the normalized
// active-request count.
Mat encode_vehicle_state(const VehicleState& vehicle, const NodeEmbeddings& embeddings,
                         double horizon_U, int customer_count, bool include_horizon = true);

// Cross-attention pooling of the node embeddings against the vehicle query.
Mat global_graph_embedding(const Mat& vehicle_encoding, const Mat& h, const Mat& vehicle_query);

// Unweighted sum of the active customers' embeddings; zero when none.
Mat customer_embedding(const std::set<int>& active_requests, const Mat& h);

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<std::uint8_t>& legal, double Z);

ActionDistribution action_distribution(const NodeEmbeddings& embeddings, const VehicleState& vehicle,
                                       const std::vector<std::uint8_t>& legal,
                                       const HeadParameters& params, double horizon_U,
                                       int customer_count);

}  // namespace pggat
