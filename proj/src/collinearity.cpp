#include "clusterate/collinearity.hpp"

namespace clusterate {

namespace {

struct Grams {
  Eigen::MatrixXd between, within;
};

// Block-centered between/within covariate grams, scaled by 1/m.
Grams covariate_grams(const Population& pop) {
  const int v = pop.v;
  Grams g{Eigen::MatrixXd::Zero(v, v), Eigen::MatrixXd::Zero(v, v)};
  for (const BlockData& blk : pop.blocks) {
    for (const ClusterData& cl : blk.clusters) {
      const Eigen::VectorXd xb = cl.xbar - blk.xbarbar;
      g.between.noalias() += cl.w * xb * xb.transpose();
      for (int i = 0; i < cl.n(); ++i) {
        const Eigen::VectorXd xw = cl.x.row(i).transpose() - cl.xbar;
        g.within.noalias() += cl.weights(i) * xw * xw.transpose();
      }
    }
  }
  const double m = pop.total_clusters();
  g.between /= m;
  g.within /= m;
  return g;
}

Eigen::LDLT<Eigen::MatrixXd> checked_ldlt(const Eigen::MatrixXd& a,
                                          const char* what) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= 1e-12 * (1.0 + a.diagonal().maxCoeff())) {
    throw ModelError(std::string("singular ") + what + " matrix");
  }
  return ldlt;
}

}  // namespace

IccDecomposition icc_matrix(const Population& pop) {
  if (pop.v < 1) throw ModelError("no covariates");
  IccDecomposition icc;
  const Grams g = covariate_grams(pop);
  icc.s2_between = g.between;
  icc.s2_within = g.within;
  auto ldlt = checked_ldlt(g.between + g.within, "total covariate gram");
  icc.gamma_x = ldlt.solve(g.between);
  icc.trace = icc.gamma_x.trace();
  icc.rho_bar = icc.trace / pop.v;
  return icc;
}

GammaDecomposition between_within_gammas(
    const Population& pop, const std::vector<double>& proportions) {
  pop.require_schedule("between_within_gammas");
  if (pop.v < 1) throw ModelError("no covariates");
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  const int v = pop.v;
  const Grams g = covariate_grams(pop);
  Eigen::VectorXd nb = Eigen::VectorXd::Zero(v);
  Eigen::VectorXd nw = Eigen::VectorXd::Zero(v);
  for (int b = 0; b < pop.h(); ++b) {
    const BlockData& blk = pop.blocks[b];
    const double p = proportions[b];
    for (const ClusterData& cl : blk.clusters) {
      nb.noalias() += cl.w * (cl.xbar - blk.xbarbar) *
                      (p * cl.ybar1 + (1.0 - p) * cl.ybar0);
      for (int i = 0; i < cl.n(); ++i) {
        nw.noalias() += cl.weights(i) *
                        (cl.x.row(i).transpose() - cl.xbar) *
                        (p * cl.y1(i) + (1.0 - p) * cl.y0(i));
      }
    }
  }
  const double m = pop.total_clusters();
  nb /= m;
  nw /= m;

  GammaDecomposition gd;
  gd.gamma_b = checked_ldlt(g.between, "between gram").solve(nb);
  gd.gamma_w = checked_ldlt(g.within, "within gram").solve(nw);
  auto total = checked_ldlt(g.between + g.within, "total covariate gram");
  gd.gamma = total.solve(nb + nw);
  const Eigen::MatrixXd gx = total.solve(g.between);
  const Eigen::VectorXd recombined =
      gx * gd.gamma_b + (Eigen::MatrixXd::Identity(v, v) - gx) * gd.gamma_w;
  gd.recombination_residual = (gd.gamma - recombined).cwiseAbs().maxCoeff();
  return gd;
}

R2Pair r2_pair(const Population& pop, const Assignment& asg) {
  if (pop.v < 1) throw ModelError("no covariates");
  asg.validate_against(pop);
  const Grams g = covariate_grams(pop);
  const double m = pop.total_clusters();

  Eigen::VectorXd q = Eigen::VectorXd::Zero(pop.v);
  double tss = 0.0;
  for (int b = 0; b < pop.h(); ++b) {
    const BlockData& blk = pop.blocks[b];
    const BlockSummary bs = block_summary(pop, b, &asg);
    for (int j = 0; j < blk.m(); ++j) {
      const ClusterData& cl = blk.clusters[j];
      const double t = (asg.is_treated(b, j) ? 1.0 : 0.0) - bs.pstar;
      q.noalias() += cl.w * t * (cl.xbar - blk.xbarbar);
      tss += cl.w * t * t;
    }
  }
  q /= m;
  tss /= m;
  if (tss <= 0.0) throw ModelError("no treatment variation");

  R2Pair r2;
  r2.pi_hat = checked_ldlt(g.between + g.within, "total covariate gram")
                  .solve(q);
  r2.lambda_b = checked_ldlt(g.between, "between gram").solve(q);
  r2.r2_tx = q.dot(r2.pi_hat) / tss;
  r2.r2_txb = q.dot(r2.lambda_b) / tss;
  return r2;
}

R2Approximations r2_approximations(int v, int m, int n,
                                   const IccDecomposition& icc) {
  if (m < 1 || n < m) throw ModelError("need n >= m >= 1");
  R2Approximations a;
  a.approx_txb = static_cast<double>(v) / m;
  a.approx_tx = icc.trace / m + (v - icc.trace) / n;
  const double nbar = static_cast<double>(n) / m;
  a.n_star = n / (1.0 + icc.rho_bar * (nbar - 1.0));
  return a;
}

}  // namespace clusterate
