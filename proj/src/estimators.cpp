#include "clusterate/estimators.hpp"

#include "clusterate/wls.hpp"

namespace clusterate {

double ratio_mean(const Population& pop, int block_index, const Assignment& asg,
                  bool treated) {
  const BlockData& blk = pop.blocks[block_index];
  double num = 0.0, den = 0.0;
  for (int j = 0; j < blk.m(); ++j) {
    if (asg.is_treated(block_index, j) != treated) continue;
    const ClusterData& cl = blk.clusters[j];
    num += cl.w * cl.observed_mean(pop.mode, treated);
    den += cl.w;
  }
  if (den <= 0.0) {
    throw ModelError("block '" + blk.id + "' has an empty " +
                     (treated ? "treated" : "control") + " arm");
  }
  return num / den;
}

std::vector<BlockEstimate> block_ate(const Population& pop,
                                     const Assignment& asg,
                                     const Eigen::VectorXd* gamma) {
  asg.validate_against(pop);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(pop.v);
  if (gamma != nullptr) {
    if (gamma->size() != pop.v) throw ModelError("gamma dimension mismatch");
    g = *gamma;
  } else if (pop.v > 0) {
    g = fit_wls(build_design(pop, asg, ModelVariant::FullInteracted))
            .gamma_hat();
  }

  std::vector<BlockEstimate> out;
  out.reserve(pop.h());
  for (int b = 0; b < pop.h(); ++b) {
    const BlockSummary bs = block_summary(pop, b, &asg);
    BlockEstimate est;
    est.block_id = pop.blocks[b].id;
    est.ybar_treated = bs.ybar_treated;
    est.ybar_control = bs.ybar_control;
    est.covariate_shift = bs.xbar_treated - bs.xbar_control;
    est.beta1 = bs.ybar_treated - bs.ybar_control;
    if (pop.v > 0) est.beta1 -= est.covariate_shift.dot(g);
    out.push_back(std::move(est));
  }
  return out;
}

PooledEstimate pooled_ate(const Population& pop, const Assignment& asg,
                          const Eigen::VectorXd* gamma) {
  asg.validate_against(pop);
  PooledEstimate est;
  if (gamma != nullptr) {
    if (gamma->size() != pop.v) throw ModelError("gamma dimension mismatch");
    est.gamma = *gamma;
  } else if (pop.v > 0) {
    est.gamma = fit_wls(build_design(pop, asg, ModelVariant::PooledRestricted))
                    .gamma_hat();
  } else {
    est.gamma = Eigen::VectorXd::Zero(0);
  }

  double num = 0.0, den = 0.0;
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(pop.v);
  est.precision_weights.reserve(pop.h());
  for (int b = 0; b < pop.h(); ++b) {
    const BlockSummary bs = block_summary(pop, b, &asg);
    const double omega = bs.w1 * bs.w0 / bs.w;
    est.precision_weights.push_back(omega);
    num += omega * (bs.ybar_treated - bs.ybar_control);
    if (pop.v > 0) shift += omega * (bs.xbar_treated - bs.xbar_control);
    den += omega;
  }
  if (den <= 0.0) throw ModelError("zero total precision weight");
  est.beta1 = num / den;
  if (pop.v > 0) est.beta1 -= shift.dot(est.gamma) / den;
  return est;
}

ScheduleEstimands schedule_estimands(const Population& pop,
                                     const std::vector<double>& proportions) {
  pop.require_schedule("schedule_estimands");
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  ScheduleEstimands est;
  est.beta1_block.reserve(pop.h());
  const double m = pop.total_clusters();
  double num = 0.0, den = 0.0;
  for (int b = 0; b < pop.h(); ++b) {
    const BlockSummary bs = block_summary(pop, b);
    const double beta_b = bs.Ybar1 - bs.Ybar0;
    est.beta1_block.push_back(beta_b);
    const double p = proportions[b];
    const double kappa =
        (pop.blocks[b].m() / m) * p * (1.0 - p) * pop.blocks[b].wbar;
    num += kappa * beta_b;
    den += kappa;
  }
  if (den <= 0.0) throw ModelError("degenerate pooled estimand weights");
  est.beta1_pooled = num / den;
  return est;
}

Eigen::VectorXd schedule_gamma(const Population& pop,
                               const std::vector<double>& proportions) {
  pop.require_schedule("schedule_gamma");
  if (pop.v == 0) return Eigen::VectorXd::Zero(0);
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(pop.v, pop.v);
  Eigen::VectorXd N = Eigen::VectorXd::Zero(pop.v);
  for (int b = 0; b < pop.h(); ++b) {
    const BlockData& blk = pop.blocks[b];
    const double p = proportions[b];
    const double scale = 1.0 / blk.m();  // q_b / m_b up to the common 1/m
    for (const ClusterData& cl : blk.clusters) {
      for (int i = 0; i < cl.n(); ++i) {
        const Eigen::VectorXd xc = cl.x.row(i).transpose() - blk.xbarbar;
        const double w = cl.weights(i) * scale;
        G += w * xc * xc.transpose();
        N += w * xc * (p * cl.y1(i) + (1.0 - p) * cl.y0(i));
      }
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw ModelError("singular covariate moment matrix");
  }
  return ldlt.solve(N);
}

}  // namespace clusterate
