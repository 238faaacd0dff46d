#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pggat {

// Dense row-major matrix of doubles. Row vectors are 1xN.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  double* row_ptr(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat filled(int r, int c, double x) {
    Mat m(r, c);
    m.fill(x);
    return m;
  }

  bool operator==(const Mat&) const = default;
};

// c = a(m,k) * b(k,n)
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Mat c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// c = a(m,k) * b(n,k)^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Mat c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row_ptr(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.row_ptr(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

}  // namespace pggat
