#include "clusterate/wls.hpp"

#include <cmath>
#include <sstream>

namespace clusterate {

std::string DesignMatrix::to_csv() const {
  std::ostringstream out;
  out << "weight,y";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (int i = 0; i < n(); ++i) {
    out << weights(i) << ',' << y(i);
    for (int j = 0; j < p(); ++j) out << ',' << Z(i, j);
    out << '\n';
  }
  return out.str();
}

Eigen::VectorXd WlsFit::gamma_hat() const {
  const auto& dm = *design;
  const int vc = dm.num_covariate_cols();
  if (dm.variant == ModelVariant::BlockCovariateInteracted) {
    throw ModelError("no shared covariate coefficient under per-block slopes");
  }
  Eigen::VectorXd g(dm.v);
  g.setZero();
  for (int k = 0; k < vc; ++k) g(k) = coefficients(dm.covariate_col(k));
  return g;
}

DesignMatrix build_design(const Population& pop, const Assignment& asg,
                          ModelVariant variant) {
  asg.validate_against(pop);
  DesignMatrix dm;
  dm.variant = variant;
  dm.h = pop.h();
  dm.v = pop.v;

  const int n = pop.total_units();
  const int nt = dm.num_treat_cols();
  const int nc = dm.num_covariate_cols();
  const int p = nt + dm.h + nc;
  dm.Z.setZero(n, p);
  dm.weights.resize(n);
  dm.y.resize(n);
  dm.row_cluster.reserve(n);

  dm.labels.reserve(p);
  if (variant == ModelVariant::PooledRestricted) {
    dm.labels.push_back("T~");
  } else {
    for (int b = 0; b < dm.h; ++b) dm.labels.push_back("T~:" + pop.blocks[b].id);
  }
  for (int b = 0; b < dm.h; ++b) dm.labels.push_back("S:" + pop.blocks[b].id);
  if (nc > 0) {
    if (variant == ModelVariant::BlockCovariateInteracted) {
      for (int b = 0; b < dm.h; ++b)
        for (int k = 0; k < dm.v; ++k)
          dm.labels.push_back("x" + std::to_string(k + 1) + "~:" +
                              pop.blocks[b].id);
    } else {
      for (int k = 0; k < dm.v; ++k)
        dm.labels.push_back("x" + std::to_string(k + 1) + "~");
    }
  }

  int row = 0;
  for (int b = 0; b < dm.h; ++b) {
    const BlockData& blk = pop.blocks[b];
    const BlockSummary bs = block_summary(pop, b, &asg);
    const double pstar = bs.pstar;
    for (int j = 0; j < blk.m(); ++j) {
      const ClusterData& cl = blk.clusters[j];
      const bool treated = asg.is_treated(b, j);
      const double t_tilde = (treated ? 1.0 : 0.0) - pstar;
      const double yj = cl.observed_mean(pop.mode, treated);
      for (int i = 0; i < cl.n(); ++i) {
        dm.weights(row) = cl.weights(i);
        dm.y(row) = yj;  // cluster-mean outcome replicated to unit rows
        dm.Z(row, dm.treat_col(b)) = t_tilde;
        dm.Z(row, dm.block_col(b)) = 1.0;
        if (nc > 0) {
          const Eigen::VectorXd xc =
              cl.x.row(i).transpose() - blk.xbarbar;
          if (variant == ModelVariant::BlockCovariateInteracted) {
            dm.Z.block(row, dm.covariate_col(b * dm.v), 1, dm.v) =
                xc.transpose();
          } else {
            dm.Z.block(row, dm.covariate_col(0), 1, dm.v) = xc.transpose();
          }
        }
        dm.row_cluster.emplace_back(b, j);
        ++row;
      }
    }
  }
  return dm;
}

WlsFit fit_wls(std::shared_ptr<const DesignMatrix> dmp) {
  const DesignMatrix& dm = *dmp;
  const int n = dm.n();
  const int p = dm.p();
  if (n < p) throw ModelError("fewer rows than regression columns");

  const Eigen::ArrayXd sw = dm.weights.array().sqrt();
  Eigen::MatrixXd A = sw.matrix().asDiagonal() * dm.Z;
  Eigen::VectorXd bv = (sw * dm.y.array()).matrix();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const int bad = qr.colsPermutation().indices()(qr.rank());
    throw ModelError("design is rank deficient at column '" + dm.labels[bad] +
                     "'");
  }

  WlsFit fit;
  fit.design = std::move(dmp);
  fit.labels = dm.labels;
  fit.coefficients = qr.solve(bv);
  fit.residuals = dm.y - dm.Z * fit.coefficients;

  // (Z'WZ)^{-1} = P R^{-1} R^{-T} P'
  Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd G = Rinv * Rinv.transpose();
  const auto& P = qr.colsPermutation();
  fit.gram_inverse = P * G * P.transpose();
  return fit;
}

WlsFit fit_wls(const DesignMatrix& dm) {
  return fit_wls(std::make_shared<const DesignMatrix>(dm));
}

}  // namespace clusterate
