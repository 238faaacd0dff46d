#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pggat/matrix.hpp"

namespace pggat {

// Reverse-mode autodiff over dense matrices. Values are computed eagerly at
// op-record time; backward() replays the graph in reverse creation order.
// Parameter leaves accumulate their gradient into caller-owned buffers, so
// one tape can be built per episode while gradients collect across episodes.
class Tape {
 public:
  using Id = int;

  Id input(Mat value);
  Id param(const Mat* value, Mat* grad);

  Id matmul(Id a, Id b);     // a(m,k) * b(k,n)
  Id matmul_nt(Id a, Id b);  // a(m,k) * b(n,k)^T
  Id add(Id a, Id b);
  Id scale(Id a, double factor);
  Id sigmoid(Id a);
  Id relu(Id a);
  Id tanh_scaled(Id a, double pre, double post);  // post * tanh(pre * x)
  Id concat_cols(const std::vector<Id>& pieces);  // 1xN row pieces
  Id row(Id a, int index);                        // 1 x cols copy
  Id sum_rows(Id a, const std::vector<int>& indices);
  Id softmax_row(Id a);
  Id masked_softmax_row(Id logits, std::vector<std::uint8_t> legal, double Z);
  Id log_entry(Id row_vec, int index);  // 1x1 log(x[i])
  Id weighted_sum(const std::vector<Id>& scalars, const std::vector<double>& weights);

  // Multi-head graph attention with edge-scaled scores. head_W[h] is
  // in_dim x head_dim, head_a[h] is 1 x (2*head_dim). Returns the
  // concatenation of the per-head sigmoid aggregates, n x (heads*head_dim).
  Id gat_edge_layer(Id h_in, const std::vector<std::vector<int>>& neighbors,
                    const Mat& edge_features, const std::vector<Id>& head_W,
                    const std::vector<Id>& head_a);

  const Mat& value(Id id) const { return nodes_[id].value; }
  const Mat& gradient(Id id) const { return nodes_[id].grad; }
  void backward(Id root);  // root must be 1x1
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Mat* bound_grad = nullptr;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Id push(Mat value, std::function<void(Tape&)> back);
  Mat& grad_ref(Id id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace pggat
