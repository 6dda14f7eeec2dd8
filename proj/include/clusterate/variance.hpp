#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"
#include "clusterate/wls.hpp"

namespace clusterate {

enum class VarianceMethod {
  DesignBased,
  CRSE,
  ScheduleTheoretical,
  PooledLargeSample,
};

const char* variance_method_name(VarianceMethod m);

enum class DfRule { Satterthwaite, MinArm };

struct VarianceReport {
  VarianceMethod method = VarianceMethod::DesignBased;
  double value = 0.0;
  double df = 0.0;
  double g = 1.0;  // small-sample correction factor applied
  std::map<std::string, double> components;

  std::string to_csv_row() const;
};

// Theoretical variance of the adjusted ratio-difference estimator for one
// block, from the full outcome schedule:
//   Var = S2_D(1)/m1 + S2_D(0)/m0 - S2(D)/m
// with D_j(t) = w_j (Ybar_j(t) - Ybarbar(t) - (xbar_j - xbarbar)'gamma)/wbar
// and (m-1) divisors.
struct ScheduleVariance {
  double value = 0.0;
  double s2d1 = 0.0, s2d0 = 0.0, s2cross = 0.0;
  int m1 = 0, m0 = 0;
};
ScheduleVariance schedule_variance_block(const Population& pop, int block,
                                         double p_b,
                                         const Eigen::VectorXd& gamma);

struct DesignVarianceOptions {
  DfRule df_rule = DfRule::Satterthwaite;
  // Share of the covariate df charged to this block; default w_b / sum_a w_a.
  double qstar_override = -1.0;
};

// Estimable design-based variance of the block treatment-effect coefficient:
// per-arm df-adjusted score sums over the squared full-sample scale factor,
//   sum_t [m^t/(m^t - v* ptilde^t q* - 1)] num_t / den^2,
// num_t the squared per-cluster eta'W e sums over arm t, den = eta'W eta over
// every cluster, eta the treatment-interaction column residualized on the
// other interactions (the covariate columns are deliberately left in the
// residual). The -S2(D)/m cross term is not identifiable and is omitted.
VarianceReport design_variance_block(const Population& pop,
                                     const Assignment& asg, const WlsFit& fit,
                                     int block,
                                     const DesignVarianceOptions& opt = {});

// Cluster-robust sandwich for every coefficient:
//   g (Z'WZ)^{-1} (sum_j Z_j' W_j e_j e_j' W_j Z_j) (Z'WZ)^{-1}.
struct CrseVariance {
  Eigen::MatrixXd vcov;
  double g = 1.0;
  int num_clusters = 0;
  std::vector<std::string> labels;

  VarianceReport report_for(int coefficient) const;
};
// correction < 0 selects the default g = m/(m-1).
CrseVariance crse_variance(const WlsFit& fit, double correction = -1.0);

// Pooled-estimator variance from the full schedule: the per-cluster
// three-term squared sum with 1/(m_b (m_b - 1)) block scaling.
double pooled_large_sample_variance(const Population& pop,
                               const std::vector<double>& proportions,
                               const Eigen::VectorXd& gamma);

struct Interval {
  double lo = 0.0, hi = 0.0;
};
// estimate +/- t_{df,(1+level)/2} sqrt(value).
Interval confidence_interval(double estimate, const VarianceReport& vr,
                             double level);

}  // namespace clusterate
