#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pggat/policy_head.hpp"

namespace pggat {

struct PolicyConfig {
  int pad_to = 300;
  int k_neighbors = 10;
  int embed_dim = 64;
  int heads = 4;
  int tau_embed_dim = 16;
  int context_dim = 256;
  double clip_C = 10.0;
  double mask_Z = -1e9;
  bool use_edge_features = true;
  bool use_global_embedding = true;
  bool use_horizon_in_embedding = true;

  int feature_dim() const { return pad_to + 1; }
  int head_dim() const { return embed_dim / heads; }
  int vehicle_dim() const { return embed_dim + (use_horizon_in_embedding ? 1 : 0) + 1; }
  int context_input_dim() const {
    return (use_global_embedding ? embed_dim : 0) + 2 * embed_dim + tau_embed_dim;
  }
  void validate() const;

  bool operator==(const PolicyConfig&) const = default;
};

std::string to_json_string(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const std::string& text);

struct PolicyParameters {
  EncoderParameters encoder;
  HeadParameters head;
};

struct NamedMat {
  std::string name;
  Mat* mat;
};

// Fixed enumeration order; defines both the checkpoint layout and the flat
// parameter addressing used by gradient checks.
std::vector<NamedMat> parameter_tensors(PolicyParameters& params);
std::vector<std::pair<std::string, std::pair<int, int>>> expected_shapes(const PolicyConfig& config);

PolicyParameters init_parameters(const PolicyConfig& config, std::uint64_t seed);
PolicyParameters zeros_like(const PolicyParameters& params);
void validate_shapes(PolicyParameters& params, const PolicyConfig& config);

std::size_t parameter_count(PolicyParameters& params);
double get_flat(PolicyParameters& params, std::size_t index);
void add_flat(PolicyParameters& params, std::size_t index, double delta);

struct TrainingStateMeta {
  long next_batch = 0;
  double baseline = 0.0;
  bool baseline_initialized = false;
};

void save_checkpoint(const std::string& path, const PolicyConfig& config, PolicyParameters& params,
                     const TrainingStateMeta* training = nullptr);

struct Checkpoint {
  PolicyConfig config;
  PolicyParameters params;
  std::optional<TrainingStateMeta> training;
};
Checkpoint load_checkpoint(const std::string& path);

// Derives (X, A, e) for this policy: k clamped to node_count - 1, and the
// edge features replaced by all-ones when the edge-feature path is ablated.
NetworkState derive_for_policy(const PolicyConfig& config, const InstanceSpec& instance);

ActionDistribution policy_forward(const PolicyConfig& config, const PolicyParameters& params,
                                  const NetworkState& state, const VehicleState& vehicle,
                                  const std::vector<std::uint8_t>& legal, double horizon_U,
                                  int customer_count);

// Rollout adapter; recomputes the full forward pass at every decision step.
PolicyFn make_policy_fn(const PolicyConfig& config, std::shared_ptr<const PolicyParameters> params);

// Differentiable episode graph. The encoder and the compatibility keys are
// recorded once; each decision step appends its head computation on top.
struct EpisodeGraph {
  Tape tape;
  Tape::Id h = -1;
  Tape::Id keys = -1;
  // bound head parameters
  Tape::Id vehicle_query = -1;
  Tape::Id tau_weight = -1;
  Tape::Id tau_bias = -1;
  Tape::Id context_projection = -1;
  Tape::Id compat_query = -1;
  double clip_C = 10.0;
  double mask_Z = -1e9;
};

EpisodeGraph begin_episode_graph(const PolicyConfig& config, const PolicyParameters& params,
                                 PolicyParameters& grads, const NetworkState& state);

Tape::Id append_action_probs(EpisodeGraph& graph, const PolicyConfig& config,
                             const VehicleState& vehicle, const std::vector<std::uint8_t>& legal,
                             double horizon_U, int customer_count);

}  // namespace pggat
