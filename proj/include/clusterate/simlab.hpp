#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clusterate/population.hpp"

namespace clusterate {

// Outcome model for generated populations (the covariate model is fixed; the
// outcome side is configurable):
//   Y(0)_ij = beta_x * sum_k x_ijk + c_j + eps_ij
//   Y(1)_ij = Y(0)_ij + tau + delta_j
// c_j has variance outcome_icc/(1-outcome_icc) * noise_sd^2; with
// skew_cluster_effects the values are standardized lognormal(skew_sigma)
// quantiles instead of normal draws, so small-m sampling distributions are
// reliably non-normal.
struct OutcomeDgp {
  double tau = 0.3;
  double effect_sd = 0.2;
  double outcome_icc = 0.3;
  double beta_x = 0.5;
  double noise_sd = 1.0;
  bool skew_cluster_effects = true;
  double skew_sigma = 1.3;
  // Couples the cluster outcome level to the cluster size: the ratio
  // estimator's denominator then carries signal, which is what makes its
  // finite-m distribution visibly non-normal.
  double size_effect = 1.0;
};

struct SimConfig {
  int v = 2;
  double rho_x = 0.0;
  double r = 0.5;  // adjacent-covariate correlation; chain factor r/sqrt(1-r^2)
  int m = 20;
  double p = 0.6;
  int n_lo = 25, n_hi = 75;
  int draws = 500;
  int repeats = 10;
  std::uint64_t seed = 0;
  int workers = 1;
  bool adjust_covariates = true;  // "interacted" estimator; false = "none"
  bool crse = false;              // also track CRSE SEs / coverage
  double level = 0.95;
  double g = -1.0;  // CRSE correction; negative selects m/(m-1)
  OutcomeDgp dgp;

  void validate() const;
};

// key=value lines; '#' comments; unknown keys are errors.
SimConfig parse_sim_config(std::istream& in);
void apply_sim_override(SimConfig& cfg, const std::string& key,
                        const std::string& value);
std::string sim_config_echo(const SimConfig& cfg);

struct CovariateDraw {
  std::vector<int> sizes;  // cluster sizes
  Eigen::MatrixXd x;       // total-units x v, cluster-major row order
};

CovariateDraw gen_covariates(const SimConfig& cfg, std::uint64_t seed);

// Single-block FullSchedule population with unit weights 1.
Population gen_population(const SimConfig& cfg, std::uint64_t seed);

struct SimSummary {
  SimConfig config;
  double mean_r2_tx = 0.0, mean_r2_txb = 0.0;
  double approx_tx = 0.0, approx_txb = 0.0;
  double trace_gamma_x = 0.0;
  double mean_bias = 0.0;
  double empirical_sd = 0.0;
  double mean_se_design = 0.0;
  double coverage_design = 0.0;
  double mean_se_crse = 0.0;
  double coverage_crse = 0.0;
  double ks_distance = 0.0;
  long total_draws = 0;
  std::string rng_id;
};

SimSummary run_study(const SimConfig& cfg);

// One run_study per (v, rho_x, m) grid cell.
std::vector<SimSummary> table_a1_study(const SimConfig& base,
                                       const std::vector<int>& vs,
                                       const std::vector<double>& rhos,
                                       const std::vector<int>& ms);

std::string summary_csv_header();
std::string summary_csv_row(const SimSummary& s);
std::string summary_table(const std::vector<SimSummary>& rows);

}  // namespace clusterate
