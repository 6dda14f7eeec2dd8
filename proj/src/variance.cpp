#include "clusterate/variance.hpp"

#include <cmath>
#include <sstream>

#include "clusterate/stats.hpp"

namespace clusterate {

const char* variance_method_name(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::DesignBased: return "design";
    case VarianceMethod::CRSE: return "crse";
    case VarianceMethod::ScheduleTheoretical: return "schedule";
    case VarianceMethod::PooledLargeSample: return "pooled-large-sample";
  }
  return "?";
}

std::string VarianceReport::to_csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << variance_method_name(method) << ',' << value << ',' << df << ','
      << g;
  auto grab = [&](const char* key) {
    auto it = components.find(key);
    out << ',';
    if (it != components.end()) out << it->second;
  };
  grab("qstar");
  grab("vstar");
  return out.str();
}

ScheduleVariance schedule_variance_block(const Population& pop, int block,
                                         double p_b,
                                         const Eigen::VectorXd& gamma) {
  pop.require_schedule("schedule_variance_block");
  if (pop.v > 0 && gamma.size() != pop.v) {
    throw ModelError("gamma dimension mismatch");
  }
  const BlockData& blk = pop.blocks[block];
  const int m = blk.m();
  ScheduleVariance sv;
  sv.m1 = treated_count_for(m, p_b, blk.id);
  sv.m0 = m - sv.m1;

  const BlockSummary bs = block_summary(pop, block);
  Eigen::VectorXd d1(m), d0(m);
  for (int j = 0; j < m; ++j) {
    const ClusterData& cl = blk.clusters[j];
    double adj = 0.0;
    if (pop.v > 0) adj = (cl.xbar - blk.xbarbar).dot(gamma);
    d1(j) = cl.w * (cl.ybar1 - bs.Ybar1 - adj) / blk.wbar;
    d0(j) = cl.w * (cl.ybar0 - bs.Ybar0 - adj) / blk.wbar;
  }

  const double div = m - 1.0;
  sv.s2d1 = d1.squaredNorm() / div;
  sv.s2d0 = d0.squaredNorm() / div;
  sv.s2cross = (d1 - d0).squaredNorm() / div;
  sv.value = sv.s2d1 / sv.m1 + sv.s2d0 / sv.m0 - sv.s2cross / m;
  return sv;
}

VarianceReport design_variance_block(const Population& pop,
                                     const Assignment& asg, const WlsFit& fit,
                                     int block,
                                     const DesignVarianceOptions& opt) {
  const DesignMatrix& dm = *fit.design;
  if (dm.variant != ModelVariant::NoCovariates &&
      dm.variant != ModelVariant::FullInteracted) {
    throw ModelError(
        "design-based block variance needs a per-block treatment column "
        "without per-block covariate slopes");
  }
  const BlockData& blk = pop.blocks[block];
  const BlockSummary bs = block_summary(pop, block, &asg);
  if (bs.m1 < 2 || bs.m0 < 2) {
    throw InfeasibleError("block '" + blk.id +
                          "' needs at least 2 clusters per arm for a "
                          "design-based variance");
  }

  const int vstar = dm.num_covariate_cols();
  double qstar = opt.qstar_override;
  if (qstar < 0.0) {
    double wtot = 0.0;
    for (const auto& b : pop.blocks) wtot += b.w;
    qstar = blk.w / wtot;
  }
  const double ptilde1 = bs.pstar;
  const double ptilde0 = 1.0 - bs.pstar;
  const double dfden1 = bs.m1 - vstar * ptilde1 * qstar - 1.0;
  const double dfden0 = bs.m0 - vstar * ptilde0 * qstar - 1.0;
  if (dfden1 <= 0.0 || dfden0 <= 0.0) {
    std::ostringstream msg;
    msg << "block '" << blk.id << "': df denominators " << dfden1 << " / "
        << dfden0 << " not positive";
    throw InfeasibleError(msg.str());
  }

  // eta: the block's treatment-interaction column. Its weighted residual on
  // the other interactions (and block indicators) is itself, exactly, because
  // column supports are disjoint and T~ has weighted mean 0 within the block.
  const int tcol = dm.treat_col(block);
  double den = 0.0;
  double num1 = 0.0, num0 = 0.0;
  int row = 0;
  // Walk rows in population order; only this block's rows contribute.
  const int n = dm.n();
  double score = 0.0;
  int cur_cluster = -1;
  bool cur_treated = false;
  auto flush = [&]() {
    if (cur_cluster < 0) return;
    (cur_treated ? num1 : num0) += score * score;
    score = 0.0;
  };
  for (; row < n; ++row) {
    const auto [b, j] = dm.row_cluster[row];
    if (b != block) continue;
    const double eta = dm.Z(row, tcol);
    const double w = dm.weights(row);
    den += w * eta * eta;
    if (j != cur_cluster) {
      flush();
      cur_cluster = j;
      cur_treated = asg.is_treated(b, j);
    }
    score += eta * w * fit.residuals(row);
  }
  flush();

  const double V1 = (bs.m1 / dfden1) * num1 / (den * den);
  const double V0 = (bs.m0 / dfden0) * num0 / (den * den);

  VarianceReport vr;
  vr.method = VarianceMethod::DesignBased;
  vr.value = V1 + V0;
  vr.g = 1.0;
  if (opt.df_rule == DfRule::MinArm) {
    vr.df = std::min(dfden1, dfden0);
  } else if (V1 + V0 > 0.0) {
    vr.df = (V1 + V0) * (V1 + V0) /
            (V1 * V1 / dfden1 + V0 * V0 / dfden0);
  } else {
    vr.df = dfden1 + dfden0;
  }
  vr.components = {{"arm1", V1},       {"arm0", V0},   {"num1", num1},
                   {"num0", num0},     {"den", den},   {"dfden1", dfden1},
                   {"dfden0", dfden0}, {"qstar", qstar},
                   {"vstar", static_cast<double>(vstar)},
                   {"pstar", bs.pstar}};
  return vr;
}

CrseVariance crse_variance(const WlsFit& fit, double correction) {
  const DesignMatrix& dm = *fit.design;
  const int p = dm.p();
  const int n = dm.n();

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
  std::pair<int, int> cur{-1, -1};
  int clusters = 0;
  auto flush = [&]() {
    if (cur.first < 0) return;
    meat.noalias() += score * score.transpose();
    score.setZero();
    ++clusters;
  };
  for (int row = 0; row < n; ++row) {
    if (dm.row_cluster[row] != cur) {
      flush();
      cur = dm.row_cluster[row];
    }
    score.noalias() +=
        dm.Z.row(row).transpose() * (dm.weights(row) * fit.residuals(row));
  }
  flush();

  CrseVariance cv;
  cv.num_clusters = clusters;
  cv.g = correction < 0.0 ? clusters / (clusters - 1.0) : correction;
  cv.labels = fit.labels;
  cv.vcov = cv.g * fit.gram_inverse * meat * fit.gram_inverse;
  return cv;
}

VarianceReport CrseVariance::report_for(int coefficient) const {
  VarianceReport vr;
  vr.method = VarianceMethod::CRSE;
  vr.value = vcov(coefficient, coefficient);
  vr.df = num_clusters - 1.0;
  vr.g = g;
  vr.components = {{"clusters", static_cast<double>(num_clusters)}};
  return vr;
}

double pooled_large_sample_variance(const Population& pop,
                               const std::vector<double>& proportions,
                               const Eigen::VectorXd& gamma) {
  pop.require_schedule("pooled_large_sample_variance");
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  if (pop.v > 0 && gamma.size() != pop.v) {
    throw ModelError("gamma dimension mismatch");
  }
  const double m = pop.total_clusters();

  double denom = 0.0;
  std::vector<double> beta_b(pop.h());
  for (int b = 0; b < pop.h(); ++b) {
    const double p = proportions[b];
    denom += (pop.blocks[b].m() / m) * p * (1.0 - p) * pop.blocks[b].wbar;
    const BlockSummary bs = block_summary(pop, b);
    beta_b[b] = bs.Ybar1 - bs.Ybar0;
  }
  if (denom <= 0.0) throw ModelError("degenerate pooled weights");
  double beta1 = 0.0;
  for (int b = 0; b < pop.h(); ++b) {
    const double p = proportions[b];
    beta1 += (pop.blocks[b].m() / m) * p * (1.0 - p) * pop.blocks[b].wbar *
             beta_b[b] / denom;
  }

  double var = 0.0;
  for (int b = 0; b < pop.h(); ++b) {
    const BlockData& blk = pop.blocks[b];
    const double mb = blk.m();
    const double p = proportions[b];
    const double qt = mb / m;
    const double lambda =
        qt * p * (1.0 - p) * (1.0 - 2.0 * p) / (std::sqrt(p * (1.0 - p)) * denom);
    const double kappa = qt * p * (1.0 - p) * blk.wbar / denom;
    const double c1 = std::sqrt((1.0 - p) / p) * kappa;
    const double c0 = std::sqrt(p / (1.0 - p)) * kappa;

    // U_j(t) = w_j (Ybar_j(t) - xbar_j' gamma) and its block mean.
    double Ubar1 = 0.0, Ubar0 = 0.0;
    std::vector<double> U1(blk.m()), U0(blk.m());
    for (int j = 0; j < blk.m(); ++j) {
      const ClusterData& cl = blk.clusters[j];
      const double adj = pop.v > 0 ? cl.xbar.dot(gamma) : 0.0;
      U1[j] = cl.w * (cl.ybar1 - adj);
      U0[j] = cl.w * (cl.ybar0 - adj);
      Ubar1 += U1[j] / mb;
      Ubar0 += U0[j] / mb;
    }

    double ssq = 0.0;
    for (int j = 0; j < blk.m(); ++j) {
      const double wj = blk.clusters[j].w;
      const double term =
          lambda * (beta_b[b] - beta1) * (wj - blk.wbar) +
          c1 * (U1[j] / blk.wbar - wj * Ubar1 / (blk.wbar * blk.wbar)) +
          c0 * (U0[j] / blk.wbar - wj * Ubar0 / (blk.wbar * blk.wbar));
      ssq += term * term;
    }
    var += ssq / (mb * (mb - 1.0));
  }
  return var;
}

Interval confidence_interval(double estimate, const VarianceReport& vr,
                             double level) {
  if (vr.df <= 0.0) throw ModelError("confidence interval needs df > 0");
  if (vr.value < 0.0) throw ModelError("negative variance");
  if (level <= 0.0 || level >= 1.0) throw ModelError("level must be in (0,1)");
  const double q = student_t_quantile(0.5 * (1.0 + level), vr.df);
  const double hw = q * std::sqrt(vr.value);
  return {estimate - hw, estimate + hw};
}

}  // namespace clusterate
