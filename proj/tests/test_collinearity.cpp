#include <doctest.h>

#include <cmath>

#include "clusterate/collinearity.hpp"
#include "clusterate/randomize.hpp"
#include "test_helpers.hpp"

using namespace clusterate;

namespace {

// Clusters share one covariate value per cluster (pure between variation).
Population cluster_constant_population(Rng& rng, int m, int n) {
  std::vector<testing::ClusterSpec> cl;
  for (int j = 0; j < m; ++j) {
    testing::ClusterSpec cs;
    const double xc = rng.normal();
    for (int i = 0; i < n; ++i) {
      cs.w.push_back(1.0);
      cs.x.push_back({xc});
      cs.y0.push_back(rng.normal());
      cs.y1.push_back(cs.y0.back() + 1.0);
    }
    cl.push_back(cs);
  }
  return testing::make_schedule_population({cl});
}

// Covariates sum to zero within every cluster (pure within variation).
Population within_only_population(Rng& rng, int m, int n) {
  std::vector<testing::ClusterSpec> cl;
  for (int j = 0; j < m; ++j) {
    testing::ClusterSpec cs;
    std::vector<double> x(n);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += (x[i] = rng.normal()) / n;
    for (int i = 0; i < n; ++i) {
      cs.w.push_back(1.0);
      cs.x.push_back({x[i] - mean});
      cs.y0.push_back(rng.normal());
      cs.y1.push_back(cs.y0.back() + 1.0);
    }
    cl.push_back(cs);
  }
  return testing::make_schedule_population({cl});
}

}  // namespace

TEST_CASE("cluster-constant covariates give a pure between split") {
  Rng rng(61);
  Population pop = cluster_constant_population(rng, 8, 3);
  IccDecomposition icc = icc_matrix(pop);
  CHECK(icc.gamma_x(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(icc.rho_bar == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(icc.s2_within(0, 0) == doctest::Approx(0.0).scale(1.0));

  // Both R^2 levels coincide when the covariate carries no within signal.
  Assignment asg = draw_assignment(pop, {0.5}, 5);
  R2Pair r2 = r2_pair(pop, asg);
  CHECK(std::abs(r2.r2_txb - r2.r2_tx) < 1e-10);
}

TEST_CASE("within-only covariates give a zero between share") {
  Rng rng(62);
  Population pop = within_only_population(rng, 8, 4);
  IccDecomposition icc = icc_matrix(pop);
  CHECK(std::abs(icc.gamma_x(0, 0)) < 1e-10);
  CHECK(std::abs(icc.rho_bar) < 1e-10);
  // Aggregated covariates vanish, so the aggregate gram is singular and the
  // aggregate regression is refused rather than silently returned.
  Assignment asg = draw_assignment(pop, {0.5}, 6);
  CHECK_THROWS_AS(r2_pair(pop, asg), ModelError);
}

TEST_CASE("a constructed half-between covariate yields gamma_x = 1/2") {
  // Two units per cluster with values xc + d and xc - d where the cluster
  // and unit deviations have equal second moments.
  std::vector<testing::ClusterSpec> cl;
  const std::vector<double> xc = {1.0, -1.0, 1.0, -1.0, 1.0, -1.0};
  for (int j = 0; j < 6; ++j) {
    testing::ClusterSpec cs;
    for (int i = 0; i < 2; ++i) {
      cs.w.push_back(1.0);
      cs.x.push_back({xc[j] + (i == 0 ? 1.0 : -1.0)});
      cs.y0.push_back(j + i);
      cs.y1.push_back(j + i + 1.0);
    }
    cl.push_back(cs);
  }
  Population pop = testing::make_schedule_population({cl});
  IccDecomposition icc = icc_matrix(pop);
  CHECK(icc.gamma_x(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(icc.trace == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("R2 of the aggregate regression dominates the unit regression") {
  Rng rng(63);
  for (int trial = 0; trial < 50; ++trial) {
    Population pop = testing::random_population(rng, 1, 6, 10, 2);
    Assignment asg = draw_assignment(pop, {0.5}, 900 + trial);
    R2Pair r2 = r2_pair(pop, asg);
    CHECK(r2.r2_txb >= r2.r2_tx - 1e-12);
    CHECK(r2.r2_tx >= -1e-12);
    CHECK(r2.r2_txb <= 1.0 + 1e-12);
  }
}

TEST_CASE("aggregate coefficients recover from unit coefficients through "
          "the between-share matrix") {
  Rng rng(64);
  for (int trial = 0; trial < 10; ++trial) {
    Population pop = testing::random_population(rng, 1, 8, 12, 2);
    Assignment asg = draw_assignment(pop, {0.5}, 300 + trial);
    R2Pair r2 = r2_pair(pop, asg);
    IccDecomposition icc = icc_matrix(pop);
    const Eigen::VectorXd recon = icc.gamma_x * r2.lambda_b;
    CHECK((recon - r2.pi_hat).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("pooled slope splits into between and within components") {
  Rng rng(65);
  for (int trial = 0; trial < 10; ++trial) {
    Population pop = testing::random_population(rng, 2, 6, 9, 2);
    GammaDecomposition gd = between_within_gammas(pop, {0.5, 0.5});
    CHECK(gd.recombination_residual < 1e-8);
    IccDecomposition icc = icc_matrix(pop);
    const Eigen::VectorXd recon =
        icc.gamma_x * gd.gamma_b +
        (Eigen::MatrixXd::Identity(2, 2) - icc.gamma_x) * gd.gamma_w;
    CHECK((recon - gd.gamma).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("approximation formulas follow the stated algebra") {
  IccDecomposition icc;
  icc.trace = 0.8;
  icc.rho_bar = 0.4;
  R2Approximations a = r2_approximations(2, 20, 500, icc);
  CHECK(a.approx_txb == doctest::Approx(2.0 / 20.0));
  CHECK(a.approx_tx == doctest::Approx(0.8 / 20.0 + (2.0 - 0.8) / 500.0));
  // n_star = n / (1 + rho_bar (nbar - 1)), nbar = n / m.
  CHECK(a.n_star == doctest::Approx(500.0 / (1.0 + 0.4 * (25.0 - 1.0))));
}
