#include "pggat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pggat {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / (xs.size() - 1));
}

namespace {

// Regularized incomplete beta I_x(a, b) by the continued fraction (Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_sf(double t, double dof) {
  if (dof <= 0.0) throw std::invalid_argument("student_t_sf: dof must be positive");
  const double x = dof / (dof + t * t);
  const double half_tail = 0.5 * ibeta(0.5 * dof, 0.5, x);
  return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

double paired_t_pvalue_greater(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("paired test needs two equal samples of size >= 2");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double m = mean(d);
  const double s = sample_stddev(d);
  if (s == 0.0) return m > 0.0 ? 0.0 : 1.0;
  const double t = m / (s / std::sqrt(static_cast<double>(d.size())));
  return student_t_sf(t, static_cast<double>(d.size() - 1));
}

namespace {

// Midranks.
std::vector<double> ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

TrendTest spearman_trend(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 3) throw std::invalid_argument("spearman_trend needs at least 3 points");
  const std::vector<double> rv = ranks(values);
  std::vector<double> ri(n);
  std::iota(ri.begin(), ri.end(), 1.0);

  const double mr = mean(rv), mi = mean(ri);
  double cov = 0.0, vr = 0.0, vi = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cov += (rv[k] - mr) * (ri[k] - mi);
    vr += (rv[k] - mr) * (rv[k] - mr);
    vi += (ri[k] - mi) * (ri[k] - mi);
  }
  TrendTest out;
  if (vr == 0.0 || vi == 0.0) return out;  // constant sequence: no trend
  out.rho = cov / std::sqrt(vr * vi);
  const double dof = static_cast<double>(n - 2);
  const double denom = 1.0 - out.rho * out.rho;
  if (denom <= 0.0) {
    out.p_value = out.rho > 0.0 ? 0.0 : 1.0;
    return out;
  }
  const double t = out.rho * std::sqrt(dof / denom);
  out.p_value = student_t_sf(t, dof);
  return out;
}

}  // namespace pggat
