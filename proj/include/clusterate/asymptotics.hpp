#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "clusterate/population.hpp"

namespace clusterate {

// Finite-m values of the regularity-condition ratios that drive the normal
// approximations. All second moments here use 1/m (population) divisors so
// that k-fold replication divides each ratio by exactly k; the variance
// module keeps its own (m-1) convention.
struct ArmCondition {
  double g = 0.0;            // max_j D_j(t)^2
  double s2d = 0.0;          // (1/m) sum D_j(t)^2
  double arm_score_share = 0.0;  // g / (min(m1, m0) s2d)
  double weight_ratio = 0.0;  // (1 - f^t) S2(w) / (m^t wbar^2)
};

struct BlockConditionReport {
  std::string block_id;
  ArmCondition arm1, arm0;
  double var_dhat = 0.0;       // S2(1)/m1 + S2(0)/m0 - S2(D)/m, 1/m divisors
  double contrast_score_share = 0.0;   // max_t g(t) / ((m^t)^2 var_dhat)
  double pooled_score_share = 0.0;  // max_{z,t} a_z(t) / (p(1-p) m v_z(t))
  bool degenerate = false;     // some ratio had a zero denominator
};

std::vector<BlockConditionReport> condition_report(
    const Population& pop, const std::vector<double>& proportions,
    const Eigen::VectorXd& gamma);

// Simulates `reps` assignments, standardizes the block's adjusted
// ratio-difference estimate by its theoretical schedule variance and returns
// the Kolmogorov-Smirnov distance to the standard normal.
double normality_diagnostic(const Population& pop,
                            const std::vector<double>& proportions,
                            const Eigen::VectorXd& gamma, int reps,
                            std::uint64_t seed, int block = 0);

std::string condition_report_csv(const std::vector<BlockConditionReport>& rows);

}  // namespace clusterate
