#pragma once

#include <vector>

#include "pggat/routing_instance.hpp"
#include "pggat/tape.hpp"

namespace pggat {

// One graph-attention layer with edge-scaled scores. head_W[h] maps in_dim
// to head_dim, head_a[h] is 1 x (2*head_dim); the concatenated per-head
// outputs are merged back to out_dim.
struct GatLayerParameters {
  std::vector<Mat> head_W;
  std::vector<Mat> head_a;
  Mat merge;  // (heads*head_dim) x out_dim
};

struct EncoderParameters {
  Mat input_projection;  // feature_dim x embed_dim
  GatLayerParameters layer1;
  GatLayerParameters layer2;
};

// Final node embeddings plus the per-layer intermediates; h = h1 + h2.
struct NodeEmbeddings {
  Mat h;
  Mat h1;
  Mat h2;
};

// Raw attention score for edge (i, j) of one head: ReLU(a . [W x_i || W x_j]).
double attention_score(const Mat& W, const Mat& a, const Mat& features, int i, int j);

// Softmax over a neighborhood of the products raw_score * edge_feature.
std::vector<double> edge_induced_attention(const std::vector<double>& raw_scores,
                                           const std::vector<double>& edge_features);

Mat gat_edge_layer(const Mat& h_in, const std::vector<std::vector<int>>& neighbors,
                   const Mat& edge_features, const GatLayerParameters& params);

NodeEmbeddings encode(const NetworkState& state, const EncoderParameters& params);

// Tape mirror of encode(); returns the ids of (h, h1, h2).
struct EncoderTapeIds {
  Tape::Id h;
  Tape::Id h1;
  Tape::Id h2;
};
struct EncoderBinding {
  Tape::Id input_projection;
  std::vector<Tape::Id> layer1_W, layer1_a;
  Tape::Id layer1_merge;
  std::vector<Tape::Id> layer2_W, layer2_a;
  Tape::Id layer2_merge;
};
EncoderBinding bind_encoder(Tape& tape, const EncoderParameters& params, EncoderParameters& grads);
EncoderTapeIds encode_on_tape(Tape& tape, const NetworkState& state, const EncoderBinding& binding);

}  // namespace pggat
