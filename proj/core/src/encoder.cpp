#include "pggat/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace pggat {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double attention_score(const Mat& W, const Mat& a, const Mat& features, int i, int j) {
  const int head_dim = W.cols;
  if (a.rows != 1 || a.cols != 2 * head_dim)
    throw std::invalid_argument("attention_score: weight vector must be 1 x 2*head_dim");
  double s = 0.0;
  for (int d = 0; d < head_dim; ++d) {
    double pi = 0.0, pj = 0.0;
    for (int k = 0; k < W.rows; ++k) {
      pi += features(i, k) * W(k, d);
      pj += features(j, k) * W(k, d);
    }
    s += a(0, d) * pi + a(0, head_dim + d) * pj;
  }
  return std::max(s, 0.0);
}

std::vector<double> edge_induced_attention(const std::vector<double>& raw_scores,
                                           const std::vector<double>& edge_features) {
  if (raw_scores.empty() || raw_scores.size() != edge_features.size())
    throw std::invalid_argument("edge_induced_attention: neighborhood vectors mismatch");
  std::vector<double> z(raw_scores.size());
  for (std::size_t t = 0; t < z.size(); ++t) z[t] = raw_scores[t] * edge_features[t];
  double m = z[0];
  for (double x : z) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : z) x /= sum;
  return z;
}

Mat gat_edge_layer(const Mat& h_in, const std::vector<std::vector<int>>& neighbors,
                   const Mat& edge_features, const GatLayerParameters& params) {
  const int n = h_in.rows;
  const int heads = static_cast<int>(params.head_W.size());
  if (heads == 0 || params.head_a.size() != params.head_W.size())
    throw std::invalid_argument("gat_edge_layer: head parameter lists mismatch");
  if (static_cast<int>(neighbors.size()) != n || edge_features.rows != n || edge_features.cols != n)
    throw std::invalid_argument("gat_edge_layer: shape mismatch");
  const int head_dim = params.head_W[0].cols;
  if (params.merge.rows != heads * head_dim)
    throw std::invalid_argument("gat_edge_layer: merge shape mismatch");

  Mat concat(n, heads * head_dim);
  for (int h = 0; h < heads; ++h) {
    const Mat& W = params.head_W[h];
    const Mat& a = params.head_a[h];
    if (W.rows != h_in.cols || W.cols != head_dim || a.cols != 2 * head_dim)
      throw std::invalid_argument("gat_edge_layer: head shape mismatch");
    Mat P = matmul(h_in, W);

    std::vector<double> left(n), right(n);
    for (int i = 0; i < n; ++i) {
      double l = 0.0, r = 0.0;
      for (int d = 0; d < head_dim; ++d) {
        l += a(0, d) * P(i, d);
        r += a(0, head_dim + d) * P(i, d);
      }
      left[i] = l;
      right[i] = r;
    }

    for (int i = 0; i < n; ++i) {
      const auto& nb = neighbors[i];
      if (nb.empty()) throw std::invalid_argument("gat_edge_layer: empty neighborhood");
      std::vector<double> raw(nb.size()), ef(nb.size());
      for (std::size_t t = 0; t < nb.size(); ++t) {
        raw[t] = std::max(left[i] + right[nb[t]], 0.0);
        ef[t] = edge_features(i, nb[t]);
      }
      const std::vector<double> alpha = edge_induced_attention(raw, ef);
      for (int d = 0; d < head_dim; ++d) {
        double s = 0.0;
        for (std::size_t t = 0; t < nb.size(); ++t) s += alpha[t] * P(nb[t], d);
        concat(i, h * head_dim + d) = sigmoid_scalar(s);
      }
    }
  }
  return matmul(concat, params.merge);
}

NodeEmbeddings encode(const NetworkState& state, const EncoderParameters& params) {
  if (params.input_projection.rows != state.node_features_X.cols)
    throw std::invalid_argument("encode: input projection does not match feature dimension");
  const Mat projected = matmul(state.node_features_X, params.input_projection);
  NodeEmbeddings out;
  out.h1 = gat_edge_layer(projected, state.adjacency_A, state.edge_features_e, params.layer1);
  out.h2 = gat_edge_layer(out.h1, state.adjacency_A, state.edge_features_e, params.layer2);
  out.h = out.h1;
  for (std::size_t i = 0; i < out.h.size(); ++i) out.h.v[i] += out.h2.v[i];
  return out;
}

EncoderBinding bind_encoder(Tape& tape, const EncoderParameters& params, EncoderParameters& grads) {
  EncoderBinding b;
  b.input_projection = tape.param(&params.input_projection, &grads.input_projection);
  for (std::size_t h = 0; h < params.layer1.head_W.size(); ++h) {
    b.layer1_W.push_back(tape.param(&params.layer1.head_W[h], &grads.layer1.head_W[h]));
    b.layer1_a.push_back(tape.param(&params.layer1.head_a[h], &grads.layer1.head_a[h]));
  }
  b.layer1_merge = tape.param(&params.layer1.merge, &grads.layer1.merge);
  for (std::size_t h = 0; h < params.layer2.head_W.size(); ++h) {
    b.layer2_W.push_back(tape.param(&params.layer2.head_W[h], &grads.layer2.head_W[h]));
    b.layer2_a.push_back(tape.param(&params.layer2.head_a[h], &grads.layer2.head_a[h]));
  }
  b.layer2_merge = tape.param(&params.layer2.merge, &grads.layer2.merge);
  return b;
}

EncoderTapeIds encode_on_tape(Tape& tape, const NetworkState& state, const EncoderBinding& binding) {
  const Tape::Id x = tape.input(state.node_features_X);
  const Tape::Id projected = tape.matmul(x, binding.input_projection);
  const Tape::Id agg1 =
      tape.gat_edge_layer(projected, state.adjacency_A, state.edge_features_e, binding.layer1_W, binding.layer1_a);
  const Tape::Id h1 = tape.matmul(agg1, binding.layer1_merge);
  const Tape::Id agg2 =
      tape.gat_edge_layer(h1, state.adjacency_A, state.edge_features_e, binding.layer2_W, binding.layer2_a);
  const Tape::Id h2 = tape.matmul(agg2, binding.layer2_merge);
  return {tape.add(h1, h2), h1, h2};
}

}  // namespace pggat
