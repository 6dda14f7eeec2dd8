#pragma once

#include <Eigen/Dense>
#include <vector>

#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"

namespace clusterate {

// Between/within split of the covariate variation, with block-centered
// covariates and unit weights. gamma_x is the between share (the v x v ICC
// matrix); rho_bar its average diagonal contribution trace/v.
struct IccDecomposition {
  Eigen::MatrixXd gamma_x;
  Eigen::MatrixXd s2_between;
  Eigen::MatrixXd s2_within;
  double trace = 0.0;
  double rho_bar = 0.0;
};

IccDecomposition icc_matrix(const Population& pop);

struct GammaDecomposition {
  Eigen::VectorXd gamma_b;  // cluster-aggregated (between) slope
  Eigen::VectorXd gamma_w;  // cluster-centered (within) slope
  Eigen::VectorXd gamma;    // pooled unit-level slope
  double recombination_residual = 0.0;  // max-abs(gamma - Gx gb - (I-Gx) gw)
};

GammaDecomposition between_within_gammas(const Population& pop,
                                         const std::vector<double>& proportions);

struct R2Pair {
  double r2_tx = 0.0;   // centered treatment on unit-level covariates
  double r2_txb = 0.0;  // centered treatment on cluster-mean covariates
  Eigen::VectorXd pi_hat;    // unit-level regression coefficients
  Eigen::VectorXd lambda_b;  // aggregate regression coefficients
};

// Weighted no-intercept R^2 of T~ on block-centered covariates, at the unit
// and at the cluster-aggregate level. r2_txb >= r2_tx always (the aggregate
// gram is the between part of the unit gram).
R2Pair r2_pair(const Population& pop, const Assignment& asg);

struct R2Approximations {
  double approx_txb = 0.0;  // v / m
  double approx_tx = 0.0;   // trace/m + (v - trace)/n
  double n_star = 0.0;      // n / (1 + rho_bar (nbar - 1))
};

R2Approximations r2_approximations(int v, int m, int n,
                                   const IccDecomposition& icc);

}  // namespace clusterate
