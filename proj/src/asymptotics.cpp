#include "clusterate/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "clusterate/estimators.hpp"
#include "clusterate/randomize.hpp"
#include "clusterate/rng.hpp"
#include "clusterate/stats.hpp"
#include "clusterate/variance.hpp"

namespace clusterate {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_ratio(double num, double den, bool* degenerate) {
  if (den <= 0.0) {
    *degenerate = true;
    return num == 0.0 ? 0.0 : kInf;
  }
  return num / den;
}
}  // namespace

std::vector<BlockConditionReport> condition_report(
    const Population& pop, const std::vector<double>& proportions,
    const Eigen::VectorXd& gamma) {
  pop.require_schedule("condition_report");
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  if (pop.v > 0 && gamma.size() != pop.v) {
    throw ModelError("gamma dimension mismatch");
  }

  std::vector<BlockConditionReport> out;
  out.reserve(pop.h());
  for (int b = 0; b < pop.h(); ++b) {
    const BlockData& blk = pop.blocks[b];
    const double p = proportions[b];
    const int m = blk.m();
    const int m1 = treated_count_for(m, p, blk.id);
    const int m0 = m - m1;
    const BlockSummary bs = block_summary(pop, b);

    BlockConditionReport rep;
    rep.block_id = blk.id;

    Eigen::VectorXd d1(m), d0(m), w(m), U1(m), U0(m);
    for (int j = 0; j < m; ++j) {
      const ClusterData& cl = blk.clusters[j];
      const double adj = pop.v > 0 ? (cl.xbar - blk.xbarbar).dot(gamma) : 0.0;
      d1(j) = cl.w * (cl.ybar1 - bs.Ybar1 - adj) / blk.wbar;
      d0(j) = cl.w * (cl.ybar0 - bs.Ybar0 - adj) / blk.wbar;
      w(j) = cl.w;
      const double uadj = pop.v > 0 ? cl.xbar.dot(gamma) : 0.0;
      U1(j) = cl.w * (cl.ybar1 - uadj);
      U0(j) = cl.w * (cl.ybar0 - uadj);
    }

    const double s2w = (w.array() - blk.wbar).square().sum() / m;
    const int min_arm = std::min(m1, m0);

    auto fill_arm = [&](const Eigen::VectorXd& d, int mt) {
      ArmCondition a;
      a.g = d.array().square().maxCoeff();
      a.s2d = d.squaredNorm() / m;
      a.arm_score_share = safe_ratio(a.g, min_arm * a.s2d, &rep.degenerate);
      const double f = static_cast<double>(mt) / m;
      a.weight_ratio = (1.0 - f) * s2w / (mt * blk.wbar * blk.wbar);
      return a;
    };
    rep.arm1 = fill_arm(d1, m1);
    rep.arm0 = fill_arm(d0, m0);

    rep.var_dhat = rep.arm1.s2d / m1 + rep.arm0.s2d / m0 -
                   (d1 - d0).squaredNorm() / (m * static_cast<double>(m));
    rep.contrast_score_share = std::max(
        safe_ratio(rep.arm1.g, static_cast<double>(m1) * m1 * rep.var_dhat,
                   &rep.degenerate),
        safe_ratio(rep.arm0.g, static_cast<double>(m0) * m0 * rep.var_dhat,
                   &rep.degenerate));

    auto pooled_term = [&](const Eigen::VectorXd& z) {
      const double zbar = z.mean();
      const Eigen::ArrayXd c = z.array() - zbar;
      const double a = c.square().maxCoeff();
      const double vz = c.square().sum() / m;
      return safe_ratio(a, p * (1.0 - p) * m * vz, &rep.degenerate);
    };
    rep.pooled_score_share = std::max({pooled_term(w), pooled_term(U1),
                                  pooled_term(U0)});
    out.push_back(std::move(rep));
  }
  return out;
}

double normality_diagnostic(const Population& pop,
                            const std::vector<double>& proportions,
                            const Eigen::VectorXd& gamma, int reps,
                            std::uint64_t seed, int block) {
  pop.require_schedule("normality_diagnostic");
  if (reps < 100) throw ModelError("need at least 100 replications");
  const ScheduleVariance sv =
      schedule_variance_block(pop, block, proportions[block], gamma);
  if (sv.value <= 0.0) throw ModelError("degenerate schedule variance");
  const double sd = std::sqrt(sv.value);
  const BlockSummary bs = block_summary(pop, block);
  const double beta = bs.Ybar1 - bs.Ybar0;

  std::vector<double> z;
  z.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t sub = Rng(seed, 0x6e6f726du, static_cast<std::uint64_t>(r)).next_u64();
    const Assignment asg = draw_assignment(pop, proportions, sub);
    const BlockSummary obs = block_summary(pop, block, &asg);
    double est = obs.ybar_treated - obs.ybar_control;
    if (pop.v > 0) est -= (obs.xbar_treated - obs.xbar_control).dot(gamma);
    z.push_back((est - beta) / sd);
  }
  return ks_distance_to_normal(std::move(z));
}

std::string condition_report_csv(
    const std::vector<BlockConditionReport>& rows) {
  std::ostringstream out;
  out.precision(12);
  out << "block,g1,g0,s2d1,s2d0,arm_score_share_t1,arm_score_share_t0,"
         "weight_ratio_t1,weight_ratio_t0,var_dhat,contrast_score_share,"
         "pooled_score_share,degenerate\n";
  for (const auto& r : rows) {
    out << r.block_id << ',' << r.arm1.g << ',' << r.arm0.g << ','
        << r.arm1.s2d << ',' << r.arm0.s2d << ',' << r.arm1.arm_score_share << ','
        << r.arm0.arm_score_share << ',' << r.arm1.weight_ratio << ','
        << r.arm0.weight_ratio << ',' << r.var_dhat << ',' << r.contrast_score_share
        << ',' << r.pooled_score_share << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace clusterate
