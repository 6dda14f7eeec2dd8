#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"

namespace clusterate {

// The regression specifications. Column order is fixed:
//   [block x treatment interactions] [block indicators] [centered covariates]
// with one pooled treatment column under PooledRestricted and per-block
// covariate copies under BlockCovariateInteracted.
enum class ModelVariant {
  NoCovariates,
  FullInteracted,
  BlockCovariateInteracted,
  PooledRestricted,
};

struct DesignMatrix {
  Eigen::MatrixXd Z;
  Eigen::VectorXd weights;
  Eigen::VectorXd y;
  std::vector<std::string> labels;
  // (block, cluster) index per row; rows are in population order.
  std::vector<std::pair<int, int>> row_cluster;
  ModelVariant variant = ModelVariant::NoCovariates;
  int h = 0;
  int v = 0;  // covariate dimension of the population

  int n() const { return static_cast<int>(Z.rows()); }
  int p() const { return static_cast<int>(Z.cols()); }
  int num_treat_cols() const {
    return variant == ModelVariant::PooledRestricted ? 1 : h;
  }
  int num_covariate_cols() const {
    if (v == 0 || variant == ModelVariant::NoCovariates) return 0;
    return variant == ModelVariant::BlockCovariateInteracted ? h * v : v;
  }
  int treat_col(int block) const {
    return variant == ModelVariant::PooledRestricted ? 0 : block;
  }
  int block_col(int block) const { return num_treat_cols() + block; }
  int covariate_col(int k) const { return num_treat_cols() + h + k; }

  std::string to_csv() const;
};

struct WlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;      // unweighted e = y - Z beta
  Eigen::MatrixXd gram_inverse;   // (Z' W Z)^{-1}
  std::vector<std::string> labels;
  std::shared_ptr<const DesignMatrix> design;

  double coefficient(int i) const { return coefficients(i); }
  // Treatment-effect coefficient for a block (or the pooled coefficient).
  double beta1(int block) const {
    return coefficients(design->treat_col(block));
  }
  // Shared covariate coefficients (FullInteracted / PooledRestricted).
  Eigen::VectorXd gamma_hat() const;
};

DesignMatrix build_design(const Population& pop, const Assignment& asg,
                          ModelVariant variant);

// Solves min sum w (y - z'd)^2 via a column-pivoted QR of the sqrt(w)-scaled
// system. Throws ModelError naming the offending column on rank deficiency
// (relative pivot below 1e-10).
WlsFit fit_wls(const DesignMatrix& dm);
WlsFit fit_wls(std::shared_ptr<const DesignMatrix> dm);

}  // namespace clusterate
