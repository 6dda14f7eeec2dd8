#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"

namespace clusterate {

// Weighted ratio mean over one arm of a block:
//   sum_{T=t} w_jb ybar_jb / sum_{T=t} w_jb.
double ratio_mean(const Population& pop, int block_index, const Assignment& asg,
                  bool treated);

struct BlockEstimate {
  std::string block_id;
  double beta1 = 0.0;           // covariate-adjusted treatment effect
  double ybar_treated = 0.0;    // ratio mean, treated arm
  double ybar_control = 0.0;    // ratio mean, control arm
  Eigen::VectorXd covariate_shift;  // xbar_treated - xbar_control
};

// Per-block covariate-adjusted difference in ratio means:
//   beta1_b = ybar_b(1) - ybar_b(0) - (xbar1_b - xbar0_b)' gamma.
// With gamma == nullptr and v > 0, gamma is the pooled interacted-regression
// slope estimated from the same data; with v == 0 no adjustment is made.
std::vector<BlockEstimate> block_ate(const Population& pop,
                                     const Assignment& asg,
                                     const Eigen::VectorXd* gamma = nullptr);

struct PooledEstimate {
  double beta1 = 0.0;
  Eigen::VectorXd gamma;              // restricted-regression slope used
  std::vector<double> precision_weights;  // w1_b w0_b / w_b, unnormalized
};

// Precision-weighted pooled effect matching the restricted regression:
// contrasts weighted by w1_b w0_b / w_b, adjusted by the pooled gamma.
PooledEstimate pooled_ate(const Population& pop, const Assignment& asg,
                          const Eigen::VectorXd* gamma = nullptr);

struct ScheduleEstimands {
  std::vector<double> beta1_block;  // Ybar_b(1) - Ybar_b(0)
  double beta1_pooled = 0.0;        // weights q_b p_b (1-p_b) wbar_b
};

// Population-level targets; requires FullSchedule mode.
ScheduleEstimands schedule_estimands(const Population& pop,
                                     const std::vector<double>& proportions);

// Pooled slope gamma from schedule data (assignment-free), the probability
// limit the adjusted estimators center on:
//   gamma = (sum_b q_b S2x_b)^{-1} (sum_b q_b [p_b SxY_b(1)+(1-p_b) SxY_b(0)])
// with q_b = m_b / m and unit-level cross moments centered at block means.
Eigen::VectorXd schedule_gamma(const Population& pop,
                               const std::vector<double>& proportions);

}  // namespace clusterate
