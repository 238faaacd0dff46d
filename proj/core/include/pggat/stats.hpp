#pragma once

#include <vector>

namespace pggat {

double mean(const std::vector<double>& xs);
double sample_stddev(const std::vector<double>& xs);

// One-sided p-value of the paired t-test for H1: mean(x - y) > 0.
double paired_t_pvalue_greater(const std::vector<double>& x, const std::vector<double>& y);

// Spearman rank correlation of values against their index order (trend), and
// the one-sided p-value for H1: trend > 0 via the t approximation.
struct TrendTest {
  double rho = 0.0;
  double p_value = 1.0;
};
TrendTest spearman_trend(const std::vector<double>& values);

// Survival function P(T > t) of the Student t distribution.
double student_t_sf(double t, double dof);

}  // namespace pggat
