#include "pggat/policy_head.hpp"

#include <cmath>
#include <stdexcept>

namespace pggat {

Mat encode_vehicle_state(const VehicleState& vehicle, const NodeEmbeddings& embeddings,
                         double horizon_U, int customer_count, bool include_horizon) {
  const int embed_dim = embeddings.h.cols;
  const int dim = embed_dim + (include_horizon ? 1 : 0) + 1;
  Mat v(1, dim);
  for (int d = 0; d < embed_dim; ++d) v(0, d) = embeddings.h(vehicle.current_node, d);
  int at = embed_dim;
  if (include_horizon) v(0, at++) = vehicle.remaining_horizon / horizon_U;
  v(0, at) = static_cast<double>(vehicle.active_requests.size()) / customer_count;
  return v;
}

Mat global_graph_embedding(const Mat& vehicle_encoding, const Mat& h, const Mat& vehicle_query) {
  const Mat q = matmul(vehicle_encoding, vehicle_query);  // 1 x embed_dim
  Mat scores = matmul_nt(q, h);                           // 1 x n
  double m = scores(0, 0);
  for (int j = 0; j < scores.cols; ++j) m = std::max(m, scores(0, j));
  double sum = 0.0;
  for (int j = 0; j < scores.cols; ++j) {
    scores(0, j) = std::exp(scores(0, j) - m);
    sum += scores(0, j);
  }
  Mat out(1, h.cols);
  for (int j = 0; j < scores.cols; ++j) {
    const double a = scores(0, j) / sum;
    for (int d = 0; d < h.cols; ++d) out(0, d) += a * h(j, d);
  }
  return out;
}

Mat customer_embedding(const std::set<int>& active_requests, const Mat& h) {
  Mat out(1, h.cols);
  for (int j : active_requests)
    for (int d = 0; d < h.cols; ++d) out(0, d) += h(j, d);
  return out;
}

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<std::uint8_t>& legal, double Z) {
  if (logits.size() != legal.size()) throw std::invalid_argument("masked_softmax: length mismatch");
  bool any = false;
  for (auto l : legal) any = any || l;
  if (!any) throw std::logic_error("masked_softmax: every action is masked");

  std::vector<double> p(logits);
  for (std::size_t j = 0; j < p.size(); ++j)
    if (!legal[j]) p[j] += Z;
  double m = p[0];
  for (double x : p) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : p) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

ActionDistribution action_distribution(const NodeEmbeddings& embeddings, const VehicleState& vehicle,
                                       const std::vector<std::uint8_t>& legal,
                                       const HeadParameters& params, double horizon_U,
                                       int customer_count) {
  const Mat& h = embeddings.h;
  const int n = h.rows;
  if (static_cast<int>(legal.size()) != n)
    throw std::invalid_argument("action_distribution: mask length mismatch");

  const Mat vehicle_enc = encode_vehicle_state(vehicle, embeddings, horizon_U, customer_count,
                                               params.use_horizon_in_embedding);

  std::vector<const Mat*> pieces;
  Mat global;
  if (params.use_global_embedding) {
    global = global_graph_embedding(vehicle_enc, h, params.vehicle_query);
    pieces.push_back(&global);
  }
  Mat current(1, h.cols);
  for (int d = 0; d < h.cols; ++d) current(0, d) = h(vehicle.current_node, d);
  pieces.push_back(&current);
  const Mat customers = customer_embedding(vehicle.active_requests, h);
  pieces.push_back(&customers);

  Mat tau_in(1, 1);
  tau_in(0, 0) = vehicle.remaining_horizon / horizon_U;
  Mat tau_emb = matmul(tau_in, params.tau_embed_weight);
  for (int d = 0; d < tau_emb.cols; ++d) tau_emb(0, d) += params.tau_embed_bias(0, d);
  pieces.push_back(&tau_emb);

  int ctx_in = 0;
  for (const Mat* p : pieces) ctx_in += p->cols;
  Mat context(1, ctx_in);
  int at = 0;
  for (const Mat* p : pieces) {
    for (int d = 0; d < p->cols; ++d) context(0, at + d) = (*p)(0, d);
    at += p->cols;
  }
  if (params.context_projection.rows != ctx_in)
    throw std::invalid_argument("action_distribution: context projection shape mismatch");

  const Mat projected = matmul(context, params.context_projection);  // 1 x d_k
  const Mat q = matmul(projected, params.compat_query);              // 1 x d_k
  const Mat keys = matmul(h, params.compat_key);                     // n x d_k
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols));

  ActionDistribution dist;
  dist.legal = legal;
  dist.logits.resize(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int d = 0; d < q.cols; ++d) s += q(0, d) * keys(i, d);
    dist.logits[i] = params.clip_C * std::tanh(s * inv_sqrt_dk);
  }
  dist.probabilities = masked_softmax(dist.logits, legal, params.mask_Z);
  return dist;
}

}  // namespace pggat
