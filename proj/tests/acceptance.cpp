// Acceptance gate: one line per criterion, [PASS]/[FAIL], exit 0 only when
// every criterion passes. Tolerances are pinned here on purpose; loosening
// them is a reviewed change, not a test edit.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "clusterate/asymptotics.hpp"
#include "clusterate/bias_exact.hpp"
#include "clusterate/collinearity.hpp"
#include "clusterate/estimators.hpp"
#include "clusterate/randomize.hpp"
#include "clusterate/rng.hpp"
#include "clusterate/simlab.hpp"
#include "clusterate/variance.hpp"
#include "clusterate/wls.hpp"

using namespace clusterate;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string detail;
};

double rel_err(double a, double b) {
  return std::abs(a - b) / (1.0 + std::max(std::abs(a), std::abs(b)));
}

// ---- small population builders (duplicated from the unit-test helpers so
// ---- the acceptance binary stands alone).

struct ClusterSpec {
  std::vector<double> w, y0, y1;
  std::vector<std::vector<double>> x;
};

Population build_population(const std::vector<std::vector<ClusterSpec>>& blocks) {
  Population pop;
  pop.mode = OutcomeMode::FullSchedule;
  int v = -1;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    BlockData blk;
    blk.id = "B" + std::to_string(b + 1);
    for (std::size_t j = 0; j < blocks[b].size(); ++j) {
      const ClusterSpec& cs = blocks[b][j];
      ClusterData cd;
      cd.id = "C" + std::to_string(j + 1);
      const int n = static_cast<int>(cs.w.size());
      cd.weights = Eigen::Map<const Eigen::VectorXd>(cs.w.data(), n);
      cd.y0 = Eigen::Map<const Eigen::VectorXd>(cs.y0.data(), n);
      cd.y1 = Eigen::Map<const Eigen::VectorXd>(cs.y1.data(), n);
      const int vk = cs.x.empty() ? 0 : static_cast<int>(cs.x[0].size());
      if (v < 0) v = vk;
      cd.x.resize(n, vk);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < vk; ++k) cd.x(i, k) = cs.x[i][k];
      blk.clusters.push_back(std::move(cd));
    }
    pop.blocks.push_back(std::move(blk));
  }
  pop.v = v < 0 ? 0 : v;
  aggregate_clusters(pop);
  return pop;
}

Population random_population(Rng& rng, int h, int min_m, int max_m, int v,
                             bool log_uniform_weights = true,
                             int max_units = 4) {
  std::vector<std::vector<ClusterSpec>> blocks(h);
  for (int b = 0; b < h; ++b) {
    const int m = min_m + static_cast<int>(rng.below(max_m - min_m + 1));
    for (int j = 0; j < m; ++j) {
      const int n = 1 + static_cast<int>(rng.below(max_units));
      ClusterSpec cs;
      for (int i = 0; i < n; ++i) {
        cs.w.push_back(log_uniform_weights
                           ? std::exp(rng.uniform01() * 4.0 - 2.0)
                           : 1.0);
        std::vector<double> xi;
        double shift = 0.0;
        for (int k = 0; k < v; ++k) {
          xi.push_back(rng.normal());
          shift += 0.3 * xi.back();
        }
        cs.x.push_back(xi);
        cs.y0.push_back(rng.normal() + shift);
        cs.y1.push_back(cs.y0.back() + 0.5 + 0.2 * rng.normal());
      }
      blocks[b].push_back(std::move(cs));
    }
  }
  return build_population(blocks);
}

// ---- criteria -------------------------------------------------------------

// 1. The WLS treatment coefficients equal the closed-form ratio contrasts.
Check criterion_closed_form_wls() {
  Check c;
  Rng rng(101);
  double worst = 0.0;
  const int instances = 1000;
  for (int t = 0; t < instances; ++t) {
    const int h = 1 + static_cast<int>(rng.below(3));
    const int v_choices[] = {0, 1, 3};
    const int v = v_choices[rng.below(3)];
    Population pop = random_population(rng, h, 4, 12, v);
    std::vector<double> props(h, 0.5);
    Assignment asg = draw_assignment(pop, props, 9000 + t);

    WlsFit full = fit_wls(build_design(pop, asg, ModelVariant::FullInteracted));
    std::vector<BlockEstimate> blocks = block_ate(pop, asg);
    for (int b = 0; b < h; ++b)
      worst = std::max(worst, rel_err(full.beta1(b), blocks[b].beta1));

    WlsFit pooled_fit =
        fit_wls(build_design(pop, asg, ModelVariant::PooledRestricted));
    PooledEstimate pooled = pooled_ate(pop, asg);
    worst = std::max(worst, rel_err(pooled_fit.beta1(0), pooled.beta1));

    if (v == 0) {
      WlsFit none = fit_wls(build_design(pop, asg, ModelVariant::NoCovariates));
      for (int b = 0; b < h; ++b) {
        const double diff = ratio_mean(pop, b, asg, true) -
                            ratio_mean(pop, b, asg, false);
        worst = std::max(worst, rel_err(none.beta1(b), diff));
      }
    }
  }
  std::ostringstream os;
  os << instances << " instances, worst relative gap " << worst;
  c.detail = os.str();
  c.ok = worst <= 1e-10;
  return c;
}

// 2. The two-covariance bias decomposition equals the exact enumeration bias.
Check criterion_bias_identity() {
  Check c;
  Rng rng(102);
  double worst = 0.0, worst_equal = 0.0;
  int instances = 0;
  for (int t = 0; t < 120; ++t) {
    const bool equal_weights = (t % 3 == 0);
    const int m = 4 + static_cast<int>(rng.below(7));  // 4..10 clusters
    std::vector<std::vector<ClusterSpec>> blocks(1);
    for (int j = 0; j < m; ++j) {
      ClusterSpec cs;
      cs.w.push_back(equal_weights ? 1.0 : std::exp(rng.uniform01() * 2.0 - 1.0));
      cs.y0.push_back(rng.normal());
      cs.y1.push_back(cs.y0.back() + 1.0 + 0.3 * rng.normal());
      cs.x.push_back({});
      blocks[0].push_back(std::move(cs));
    }
    Population pop = build_population(blocks);
    const double p = 0.5;
    const int m1 = treated_count_for(m, p, "B1");
    if (assignment_space_size(pop, {m1}) > 1e5) continue;
    ++instances;

    ScheduleEstimands est = schedule_estimands(pop, {p});
    auto stat = [](const Population& pp, const Assignment& aa) {
      return ratio_mean(pp, 0, aa, true) - ratio_mean(pp, 0, aa, false);
    };
    const double exact_bias =
        exact_expectation(pop, {m1}, stat) - est.beta1_block[0];
    HartleyBias hb = hartley_bias(pop, 0, p);
    worst = std::max(worst, std::abs(hb.total - exact_bias));
    if (equal_weights) worst_equal = std::max(worst_equal, std::abs(hb.total));
  }
  std::ostringstream os;
  os << instances << " instances, worst |identity residual| " << worst
     << ", worst equal-weight bias " << worst_equal;
  c.detail = os.str();
  c.ok = instances >= 100 && worst <= 1e-12 && worst_equal == 0.0;
  return c;
}

// 3. No covariates: the cluster-robust sandwich collapses to the two-arm
// weighted moment formula.
Check criterion_crse_reduction() {
  Check c;
  Rng rng(103);
  double worst = 0.0;
  const int instances = 200;
  for (int t = 0; t < instances; ++t) {
    Population pop = random_population(rng, 1, 6, 12, 0);
    Assignment asg = draw_assignment(pop, {0.5}, 12000 + t);
    WlsFit fit = fit_wls(build_design(pop, asg, ModelVariant::NoCovariates));
    CrseVariance cv = crse_variance(fit);
    const double got = cv.vcov(0, 0);

    const BlockSummary bs = block_summary(pop, 0, &asg);
    std::vector<double> d1, d0;
    const BlockData& blk = pop.blocks[0];
    for (int j = 0; j < blk.m(); ++j) {
      const ClusterData& cl = blk.clusters[j];
      const bool treated = asg.is_treated(0, j);
      const double e = cl.ybar1 * treated + cl.ybar0 * !treated -
                       (treated ? bs.ybar_treated : bs.ybar_control);
      if (treated)
        d1.push_back(cl.w * e * bs.m1 / bs.w1);
      else
        d0.push_back(cl.w * e * bs.m0 / bs.w0);
    }
    auto s2 = [](const std::vector<double>& d) {
      double mu = 0.0;
      for (double x : d) mu += x / d.size();
      double v = 0.0;
      for (double x : d) v += (x - mu) * (x - mu) / (d.size() - 1);
      return v;
    };
    const int m = blk.m(), m1 = bs.m1, m0 = bs.m0;
    const double g = static_cast<double>(m) / (m - 1);
    const double want = g * ((m1 - 1.0) / m1 * s2(d1) / m1 +
                             (m0 - 1.0) / m0 * s2(d0) / m0);
    worst = std::max(worst, rel_err(got, want));
  }
  std::ostringstream os;
  os << instances << " instances, worst relative gap " << worst;
  c.detail = os.str();
  c.ok = worst <= 1e-12;
  return c;
}

// 4. The aggregate-covariate R^2 dominates the unit-covariate R^2 on every
// allocation; equality under cluster-constant covariates.
Check criterion_r2_dominance() {
  Check c;
  Rng rng(104);
  long allocations = 0;
  double worst_gap = 0.0;  // most negative r2_txb - r2_tx
  for (int pop_i = 0; pop_i < 100; ++pop_i) {
    SimConfig cfg;
    cfg.v = 1 + static_cast<int>(rng.below(3)) * 2;  // 1, 3, 5
    cfg.rho_x = 0.4 * rng.below(3) / 2.0;            // 0, 0.2, 0.4
    cfg.m = 10 + static_cast<int>(rng.below(20));
    cfg.n_lo = 3;
    cfg.n_hi = 12;
    Population pop = gen_population(cfg, 5000 + pop_i);
    for (int a = 0; a < 100; ++a) {
      Assignment asg = draw_assignment(pop, {0.5}, 100000 + 100 * pop_i + a);
      R2Pair r2 = r2_pair(pop, asg);
      worst_gap = std::min(worst_gap, r2.r2_txb - r2.r2_tx);
      ++allocations;
    }
  }

  // Cluster-constant covariates: both levels coincide.
  double worst_equal = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<std::vector<ClusterSpec>> blocks(1);
    for (int j = 0; j < 8; ++j) {
      ClusterSpec cs;
      const double xc = rng.normal();
      for (int i = 0; i < 3; ++i) {
        cs.w.push_back(std::exp(rng.uniform01() - 0.5));
        cs.x.push_back({xc});
        cs.y0.push_back(rng.normal());
        cs.y1.push_back(cs.y0.back() + 1.0);
      }
      blocks[0].push_back(std::move(cs));
    }
    Population pop = build_population(blocks);
    Assignment asg = draw_assignment(pop, {0.5}, 777 + t);
    R2Pair r2 = r2_pair(pop, asg);
    worst_equal = std::max(worst_equal, std::abs(r2.r2_txb - r2.r2_tx));
  }
  std::ostringstream os;
  os << allocations << " allocations, worst dominance gap " << worst_gap
     << ", worst cluster-constant split " << worst_equal;
  c.detail = os.str();
  c.ok = allocations >= 10000 && worst_gap >= -1e-12 && worst_equal <= 1e-10;
  return c;
}

// 5. pi_hat = Gamma_x lambda_B and the pooled-slope recombination identity.
Check criterion_decompositions() {
  Check c;
  Rng rng(105);
  double worst_pi = 0.0, worst_gamma = 0.0;
  for (int t = 0; t < 50; ++t) {
    Population pop = random_population(rng, 1 + t % 2, 8, 14, 2);
    std::vector<double> props(pop.h(), 0.5);
    Assignment asg = draw_assignment(pop, props, 22000 + t);
    R2Pair r2 = r2_pair(pop, asg);
    IccDecomposition icc = icc_matrix(pop);
    worst_pi = std::max(
        worst_pi,
        (icc.gamma_x * r2.lambda_b - r2.pi_hat).cwiseAbs().maxCoeff());
    GammaDecomposition gd = between_within_gammas(pop, props);
    worst_gamma = std::max(worst_gamma, gd.recombination_residual);
  }
  std::ostringstream os;
  os << "50 instances, worst pi identity " << worst_pi
     << ", worst slope recombination " << worst_gamma;
  c.detail = os.str();
  c.ok = worst_pi <= 1e-8 && worst_gamma <= 1e-8;
  return c;
}

// 6. The Monte Carlo R^2 means track their analytic approximations on the
// simulation grid, and stay (slightly) downward-biased as the covariate
// intraclass correlation rises.
Check criterion_r2_protocol() {
  Check c;
  std::ostringstream os;
  bool ok = true;
  for (int m : {20, 40, 60}) {
    SimConfig cfg;
    cfg.v = 2;
    cfg.rho_x = 0.0;
    cfg.m = m;
    cfg.draws = 500;
    cfg.repeats = 10;
    cfg.seed = 60000 + m;
    cfg.workers = 8;
    SimSummary s = run_study(cfg);
    const double txb_gap = std::abs(s.mean_r2_txb - 2.0 / m);
    const double tx_gap = std::abs(s.mean_r2_tx - s.approx_tx);
    ok = ok && txb_gap <= 0.02 && tx_gap <= 0.01;
    os << "m=" << m << " txb_gap=" << txb_gap << " tx_gap=" << tx_gap << "; ";
  }
  for (double rho : {0.4, 0.8}) {
    SimConfig cfg;
    cfg.v = 2;
    cfg.rho_x = rho;
    cfg.m = 20;
    cfg.draws = 500;
    cfg.repeats = 10;
    cfg.seed = 61000 + static_cast<int>(10 * rho);
    cfg.workers = 8;
    SimSummary s = run_study(cfg);
    ok = ok && s.mean_r2_txb >= 2.0 / 20.0 - 0.005;
    os << "rho=" << rho << " txb=" << s.mean_r2_txb << "; ";
  }
  c.detail = os.str();
  c.ok = ok;
  return c;
}

// 7. The standardized block estimate is closer to normal at m=100 than at
// m=20, with the m=100 distance itself small.
Check criterion_normality() {
  Check c;
  const std::uint64_t base = 3000;
  int wins = 0;
  double worst100 = 0.0;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(2);
  for (int s = 0; s < 20; ++s) {
    SimConfig big;
    big.m = 100;
    big.n_lo = big.n_hi = 50;  // equal cluster weights
    SimConfig small = big;
    small.m = 20;
    const std::uint64_t seed = base + s;
    Population p100 = gen_population(big, Rng(seed, 1).next_u64());
    Population p20 = gen_population(small, Rng(seed, 2).next_u64());
    const double k100 = normality_diagnostic(p100, {0.6}, gamma, 2000, seed * 3 + 1);
    const double k20 = normality_diagnostic(p20, {0.6}, gamma, 2000, seed * 3 + 2);
    wins += (k100 < k20);
    worst100 = std::max(worst100, k100);
  }
  std::ostringstream os;
  os << "wins " << wins << "/20, worst m=100 KS " << worst100;
  c.detail = os.str();
  c.ok = wins >= 16 && worst100 < 0.05;
  return c;
}

// 8. Design-based intervals are calibrated on the default generator.
Check criterion_coverage() {
  Check c;
  SimConfig cfg;
  cfg.m = 60;
  cfg.draws = 500;
  cfg.repeats = 10;
  cfg.seed = 777;
  cfg.workers = 8;
  SimSummary s = run_study(cfg);
  const double ratio = s.mean_se_design / s.empirical_sd;
  std::ostringstream os;
  os << "coverage " << s.coverage_design << ", SE/SD " << ratio << " over "
     << s.total_draws << " draws";
  c.detail = os.str();
  c.ok = s.total_draws >= 5000 && s.coverage_design >= 0.92 &&
         s.coverage_design <= 0.98 && ratio >= 0.95 && ratio <= 1.15;
  return c;
}

// 9. The CLI simulation output is bit-identical across worker counts.
Check criterion_determinism() {
  Check c;
  auto run = [](const char* workers) {
    const std::string cmd =
        std::string(CLUSTERATE_CLI_PATH) +
        " simulate --seed 31337 --set m=24 --set draws=120 --set repeats=4"
        " --set variance=both --format csv --workers " +
        workers + " 2>&1";
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return std::string("<popen failed>");
    std::array<char, 4096> buf;
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe))
      out.append(buf.data(), n);
    if (pclose(pipe) != 0) return std::string("<nonzero exit>");
    return out;
  };
  const std::string one = run("1");
  const std::string eight = run("8");
  c.ok = !one.empty() && one == eight && one[0] == '#';
  c.detail = c.ok ? "outputs byte-identical at --workers 1 and 8"
                  : "outputs differ between --workers 1 and 8";
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> fn;
    double limit_s;  // wall-clock budget; <= 0 means no budget
  };
  const std::vector<Entry> entries = {
      {"1 closed-form estimators match WLS (<=1e-10 rel)",
       criterion_closed_form_wls, 30.0},
      {"2 exact bias decomposition identity (<=1e-12 abs)",
       criterion_bias_identity, 120.0},
      {"3 no-covariate CRSE reduction (<=1e-12 rel)", criterion_crse_reduction,
       0.0},
      {"4 aggregate R^2 dominance on 10k allocations", criterion_r2_dominance,
       0.0},
      {"5 between/within decomposition identities (<=1e-8)",
       criterion_decompositions, 0.0},
      {"6 simulation grid tracks R^2 approximations", criterion_r2_protocol,
       900.0},
      {"7 normality improves from m=20 to m=100", criterion_normality, 180.0},
      {"8 CI coverage and SE calibration at m=60", criterion_coverage, 300.0},
      {"9 bit-identical CLI output across worker counts",
       criterion_determinism, 0.0},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    const auto t0 = Clock::now();
    Check c;
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.ok = false;
      c.detail = std::string("exception: ") + ex.what();
    }
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    if (e.limit_s > 0.0 && secs > e.limit_s) {
      c.ok = false;
      c.detail += " [over time budget]";
    }
    std::printf("[%s] %s — %s (%.1fs)\n", c.ok ? "PASS" : "FAIL", e.name,
                c.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !c.ok;
  }
  if (failures == 0) {
    std::printf("acceptance: all %zu criteria passed\n", entries.size());
  } else {
    std::printf("acceptance: %d criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
