#include "pggat/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace pggat {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_inplace(std::vector<double>& z) {
  double m = z[0];
  for (double x : z) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

}  // namespace

Tape::Id Tape::push(Mat value, std::function<void(Tape&)> back) {
  Node node;
  node.grad = Mat::zeros(value.rows, value.cols);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(Mat value) { return push(std::move(value), nullptr); }

Tape::Id Tape::param(const Mat* value, Mat* grad) {
  if (!value || !grad || !value->same_shape(*grad))
    throw std::invalid_argument("param: value/grad shape mismatch");
  Id id = push(*value, nullptr);
  nodes_[id].bound_grad = grad;
  nodes_[id].back = [id](Tape& t) {
    Mat* out = t.nodes_[id].bound_grad;
    const Mat& g = t.nodes_[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) out->v[i] += g.v[i];
  };
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  Mat c = pggat::matmul(value(a), value(b));
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& av = t.value(a);
    const Mat& bv = t.value(b);
    Mat& ga = t.grad_ref(a);
    Mat& gb = t.grad_ref(b);
    // dA += g * B^T
    for (int i = 0; i < av.rows; ++i)
      for (int k = 0; k < av.cols; ++k) {
        double s = 0.0;
        for (int j = 0; j < bv.cols; ++j) s += g(i, j) * bv(k, j);
        ga(i, k) += s;
      }
    // dB += A^T * g
    for (int k = 0; k < bv.rows; ++k)
      for (int j = 0; j < bv.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < av.rows; ++i) s += av(i, k) * g(i, j);
        gb(k, j) += s;
      }
  };
  return id;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  Mat c = pggat::matmul_nt(value(a), value(b));
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Mat& g = t.nodes_[id].grad;  // m x n
    const Mat& av = t.value(a);        // m x k
    const Mat& bv = t.value(b);        // n x k
    Mat& ga = t.grad_ref(a);
    Mat& gb = t.grad_ref(b);
    for (int i = 0; i < av.rows; ++i)
      for (int k = 0; k < av.cols; ++k) {
        double s = 0.0;
        for (int j = 0; j < bv.rows; ++j) s += g(i, j) * bv(j, k);
        ga(i, k) += s;
      }
    for (int j = 0; j < bv.rows; ++j)
      for (int k = 0; k < bv.cols; ++k) {
        double s = 0.0;
        for (int i = 0; i < av.rows; ++i) s += g(i, j) * av(i, k);
        gb(j, k) += s;
      }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Mat c = av;
  for (std::size_t i = 0; i < c.size(); ++i) c.v[i] += bv.v[i];
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, b](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    Mat& ga = t.grad_ref(a);
    Mat& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.v[i] += g.v[i];
      gb.v[i] += g.v[i];
    }
  };
  return id;
}

Tape::Id Tape::scale(Id a, double factor) {
  Mat c = value(a);
  for (double& x : c.v) x *= factor;
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, factor](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    Mat& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += factor * g.v[i];
  };
  return id;
}

Tape::Id Tape::sigmoid(Id a) {
  Mat c = value(a);
  for (double& x : c.v) x = sigmoid_scalar(x);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& y = t.value(id);
    Mat& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
  };
  return id;
}

Tape::Id Tape::relu(Id a) {
  Mat c = value(a);
  for (double& x : c.v) x = std::max(x, 0.0);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& x = t.value(a);
    Mat& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.v[i] > 0.0) ga.v[i] += g.v[i];
  };
  return id;
}

Tape::Id Tape::tanh_scaled(Id a, double pre, double post) {
  const Mat& x = value(a);
  Mat c(x.rows, x.cols);
  for (std::size_t i = 0; i < c.size(); ++i) c.v[i] = post * std::tanh(pre * x.v[i]);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, pre, post](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& y = t.value(id);
    Mat& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double th = y.v[i] / post;
      ga.v[i] += g.v[i] * post * pre * (1.0 - th * th);
    }
  };
  return id;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& pieces) {
  int total = 0;
  for (Id p : pieces) {
    if (value(p).rows != 1) throw std::invalid_argument("concat_cols: pieces must be row vectors");
    total += value(p).cols;
  }
  Mat c(1, total);
  int offset = 0;
  for (Id p : pieces) {
    const Mat& pv = value(p);
    for (int j = 0; j < pv.cols; ++j) c(0, offset + j) = pv(0, j);
    offset += pv.cols;
  }
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, pieces](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    int offset = 0;
    for (Id p : pieces) {
      Mat& gp = t.grad_ref(p);
      for (int j = 0; j < gp.cols; ++j) gp(0, j) += g(0, offset + j);
      offset += gp.cols;
    }
  };
  return id;
}

Tape::Id Tape::row(Id a, int index) {
  const Mat& av = value(a);
  Mat c(1, av.cols);
  for (int j = 0; j < av.cols; ++j) c(0, j) = av(index, j);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, index](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    Mat& ga = t.grad_ref(a);
    for (int j = 0; j < g.cols; ++j) ga(index, j) += g(0, j);
  };
  return id;
}

Tape::Id Tape::sum_rows(Id a, const std::vector<int>& indices) {
  const Mat& av = value(a);
  Mat c(1, av.cols);
  for (int r : indices)
    for (int j = 0; j < av.cols; ++j) c(0, j) += av(r, j);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a, indices](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    Mat& ga = t.grad_ref(a);
    for (int r : indices)
      for (int j = 0; j < g.cols; ++j) ga(r, j) += g(0, j);
  };
  return id;
}

Tape::Id Tape::softmax_row(Id a) {
  const Mat& av = value(a);
  if (av.rows != 1) throw std::invalid_argument("softmax_row: expects a row vector");
  std::vector<double> p(av.v.begin(), av.v.end());
  softmax_inplace(p);
  Mat c(1, av.cols);
  c.v.assign(p.begin(), p.end());
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, a](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& p = t.value(id);
    Mat& ga = t.grad_ref(a);
    double dot = 0.0;
    for (int j = 0; j < p.cols; ++j) dot += p(0, j) * g(0, j);
    for (int j = 0; j < p.cols; ++j) ga(0, j) += p(0, j) * (g(0, j) - dot);
  };
  return id;
}

Tape::Id Tape::masked_softmax_row(Id logits, std::vector<std::uint8_t> legal, double Z) {
  const Mat& lv = value(logits);
  if (lv.rows != 1 || static_cast<int>(legal.size()) != lv.cols)
    throw std::invalid_argument("masked_softmax_row: mask length mismatch");
  bool any = false;
  for (auto l : legal) any = any || l;
  if (!any) throw std::logic_error("masked_softmax_row: every action is masked");

  std::vector<double> p(lv.v.begin(), lv.v.end());
  for (int j = 0; j < lv.cols; ++j)
    if (!legal[j]) p[j] += Z;
  softmax_inplace(p);
  Mat c(1, lv.cols);
  c.v.assign(p.begin(), p.end());
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, logits](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    const Mat& p = t.value(id);
    Mat& ga = t.grad_ref(logits);
    double dot = 0.0;
    for (int j = 0; j < p.cols; ++j) dot += p(0, j) * g(0, j);
    for (int j = 0; j < p.cols; ++j) ga(0, j) += p(0, j) * (g(0, j) - dot);
  };
  return id;
}

Tape::Id Tape::log_entry(Id row_vec, int index) {
  const Mat& rv = value(row_vec);
  Mat c(1, 1);
  c(0, 0) = std::log(rv(0, index));
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, row_vec, index](Tape& t) {
    const Mat& g = t.nodes_[id].grad;
    t.grad_ref(row_vec)(0, index) += g(0, 0) / t.value(row_vec)(0, index);
  };
  return id;
}

Tape::Id Tape::weighted_sum(const std::vector<Id>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) throw std::invalid_argument("weighted_sum: length mismatch");
  Mat c(1, 1);
  for (std::size_t i = 0; i < scalars.size(); ++i) c(0, 0) += weights[i] * value(scalars[i])(0, 0);
  Id id = push(std::move(c), nullptr);
  nodes_[id].back = [id, scalars, weights](Tape& t) {
    const double g = t.nodes_[id].grad(0, 0);
    for (std::size_t i = 0; i < scalars.size(); ++i) t.grad_ref(scalars[i])(0, 0) += weights[i] * g;
  };
  return id;
}

namespace {

// Per-head buffers kept for the GAT backward pass.
struct GatInternals {
  std::vector<Mat> P;                                   // per head: n x head_dim
  std::vector<std::vector<std::vector<double>>> alpha;  // head -> node -> neighbor weight
  std::vector<std::vector<std::vector<double>>> shat;   // head -> node -> ReLU score
};

}  // namespace

Tape::Id Tape::gat_edge_layer(Id h_in, const std::vector<std::vector<int>>& neighbors,
                              const Mat& edge_features, const std::vector<Id>& head_W,
                              const std::vector<Id>& head_a) {
  const Mat& H = value(h_in);
  const int n = H.rows;
  const int heads = static_cast<int>(head_W.size());
  if (heads == 0 || head_a.size() != head_W.size())
    throw std::invalid_argument("gat_edge_layer: head parameter lists mismatch");
  if (static_cast<int>(neighbors.size()) != n)
    throw std::invalid_argument("gat_edge_layer: neighbor list size mismatch");
  const int head_dim = value(head_W[0]).cols;

  auto internals = std::make_shared<GatInternals>();
  internals->P.resize(heads);
  internals->alpha.assign(heads, std::vector<std::vector<double>>(n));
  internals->shat.assign(heads, std::vector<std::vector<double>>(n));

  Mat out(n, heads * head_dim);
  for (int h = 0; h < heads; ++h) {
    const Mat& W = value(head_W[h]);
    const Mat& a = value(head_a[h]);
    if (W.rows != H.cols || a.cols != 2 * head_dim)
      throw std::invalid_argument("gat_edge_layer: parameter shape mismatch");
    Mat P = pggat::matmul(H, W);  // n x head_dim

    // aL . P_i precomputed per node; a = [aL || aR]
    std::vector<double> left(n, 0.0), right(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double l = 0.0, r = 0.0;
      const double* pi = P.row_ptr(i);
      for (int d = 0; d < head_dim; ++d) {
        l += a(0, d) * pi[d];
        r += a(0, head_dim + d) * pi[d];
      }
      left[i] = l;
      right[i] = r;
    }

    for (int i = 0; i < n; ++i) {
      const auto& nb = neighbors[i];
      if (nb.empty()) throw std::invalid_argument("gat_edge_layer: empty neighborhood");
      std::vector<double> s(nb.size()), z(nb.size());
      for (std::size_t t = 0; t < nb.size(); ++t) {
        s[t] = std::max(left[i] + right[nb[t]], 0.0);
        z[t] = s[t] * edge_features(i, nb[t]);
      }
      std::vector<double> alpha = z;
      softmax_inplace(alpha);
      double* oi = out.row_ptr(i);
      for (std::size_t t = 0; t < nb.size(); ++t) {
        const double* pj = P.row_ptr(nb[t]);
        for (int d = 0; d < head_dim; ++d) oi[h * head_dim + d] += alpha[t] * pj[d];
      }
      for (int d = 0; d < head_dim; ++d)
        oi[h * head_dim + d] = sigmoid_scalar(oi[h * head_dim + d]);
      internals->alpha[h][i] = std::move(alpha);
      internals->shat[h][i] = std::move(s);
    }
    internals->P[h] = std::move(P);
  }

  Id id = push(std::move(out), nullptr);
  Mat e_copy = edge_features;
  nodes_[id].back = [id, h_in, neighbors, e_copy, head_W, head_a, internals, n, heads,
                     head_dim](Tape& t) {
    const Mat& G = t.nodes_[id].grad;  // n x heads*head_dim
    const Mat& Y = t.value(id);
    const Mat& H = t.value(h_in);
    Mat& gH = t.grad_ref(h_in);

    for (int h = 0; h < heads; ++h) {
      const Mat& W = t.value(head_W[h]);
      const Mat& a = t.value(head_a[h]);
      const Mat& P = internals->P[h];
      Mat dP(n, head_dim);
      Mat& gW = t.grad_ref(head_W[h]);
      Mat& ga = t.grad_ref(head_a[h]);

      for (int i = 0; i < n; ++i) {
        const auto& nb = neighbors[i];
        const auto& alpha = internals->alpha[h][i];
        const auto& shat = internals->shat[h][i];

        // dq = dy * y(1-y), restricted to this head's columns
        std::vector<double> dq(head_dim);
        for (int d = 0; d < head_dim; ++d) {
          const double y = Y(i, h * head_dim + d);
          dq[d] = G(i, h * head_dim + d) * y * (1.0 - y);
        }

        std::vector<double> dalpha(nb.size());
        for (std::size_t tt = 0; tt < nb.size(); ++tt) {
          const double* pj = P.row_ptr(nb[tt]);
          double s = 0.0;
          for (int d = 0; d < head_dim; ++d) s += dq[d] * pj[d];
          dalpha[tt] = s;
          double* dpj = dP.row_ptr(nb[tt]);
          for (int d = 0; d < head_dim; ++d) dpj[d] += alpha[tt] * dq[d];
        }

        double dot = 0.0;
        for (std::size_t tt = 0; tt < nb.size(); ++tt) dot += alpha[tt] * dalpha[tt];
        for (std::size_t tt = 0; tt < nb.size(); ++tt) {
          const double dz = alpha[tt] * (dalpha[tt] - dot);
          const double ds = dz * e_copy(i, nb[tt]);
          if (shat[tt] <= 0.0) continue;  // ReLU gate
          const double dg = ds;
          const double* pi = P.row_ptr(i);
          const double* pj = P.row_ptr(nb[tt]);
          double* dpi = dP.row_ptr(i);
          double* dpj = dP.row_ptr(nb[tt]);
          for (int d = 0; d < head_dim; ++d) {
            ga(0, d) += dg * pi[d];
            ga(0, head_dim + d) += dg * pj[d];
            dpi[d] += dg * a(0, d);
            dpj[d] += dg * a(0, head_dim + d);
          }
        }
      }

      // dH += dP W^T ; dW += H^T dP
      for (int i = 0; i < n; ++i) {
        const double* dpi = dP.row_ptr(i);
        const double* hi = H.row_ptr(i);
        double* ghi = gH.row_ptr(i);
        for (int k = 0; k < H.cols; ++k) {
          const double* wk = W.row_ptr(k);
          double s = 0.0;
          for (int d = 0; d < head_dim; ++d) s += dpi[d] * wk[d];
          ghi[k] += s;
          double* gwk = gW.row_ptr(k);
          const double hik = hi[k];
          for (int d = 0; d < head_dim; ++d) gwk[d] += hik * dpi[d];
        }
      }
    }
  };
  return id;
}

void Tape::backward(Id root) {
  if (value(root).rows != 1 || value(root).cols != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  nodes_[root].grad(0, 0) = 1.0;
  for (Id id = root; id >= 0; --id) {
    if (nodes_[id].back) nodes_[id].back(*this);
  }
}

}  // namespace pggat
