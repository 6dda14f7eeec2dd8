#pragma once

#include <vector>

namespace clusterate {

double normal_cdf(double z);
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);

// Upper-tail aware inverse of the Student-t CDF; df may be non-integral.
double student_t_quantile(double p, double df);

// Kolmogorov-Smirnov distance between the empirical distribution of `values`
// and the standard normal.
double ks_distance_to_normal(std::vector<double> values);

// Compensated (Kahan) accumulator for long exact-enumeration sums.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

}  // namespace clusterate
