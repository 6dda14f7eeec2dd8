#pragma once

#include <functional>
#include <vector>

#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"

namespace clusterate {

// Exact mean of `statistic` over the full assignment distribution, by
// enumeration with compensated summation. `statistic` sees outcomes as they
// would be revealed under the visited assignment.
double exact_expectation(
    const Population& pop, const std::vector<int>& treated_counts,
    const std::function<double(const Population&, const Assignment&)>& statistic,
    double cap = kDefaultEnumerationCap);

struct HartleyBias {
  double cov_treated = 0.0;  // Cov(ratio mean(1), w1_b / m1_b)
  double cov_control = 0.0;  // Cov(ratio mean(0), w0_b / m0_b)
  double total = 0.0;        // -(m_b/w_b) cov_treated + (m_b/w_b) cov_control
};

// Exact finite-sample bias of the unadjusted block ratio-difference
// estimator, decomposed into the two ratio-denominator covariances. The
// covariances are exact randomization moments computed by enumerating the
// block's own assignments.
HartleyBias hartley_bias(const Population& pop, int block, double p_b,
                         double cap = kDefaultEnumerationCap);

}  // namespace clusterate
