#include "clusterate/simlab.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <istream>
#include <sstream>
#include <thread>

#include "clusterate/collinearity.hpp"
#include "clusterate/estimators.hpp"
#include "clusterate/randomize.hpp"
#include "clusterate/rng.hpp"
#include "clusterate/stats.hpp"
#include "clusterate/variance.hpp"
#include "clusterate/wls.hpp"

namespace clusterate {

namespace {
// Stream tags for substream derivation.
constexpr std::uint64_t kSizesStream = 0x73697a65;    // cluster sizes
constexpr std::uint64_t kCovStream = 0x636f7661;      // covariates
constexpr std::uint64_t kOutcomeStream = 0x6f757463;  // outcomes
constexpr std::uint64_t kPopStream = 0x706f7075;      // per-repeat seeds
constexpr std::uint64_t kDrawStream = 0x64726177;     // per-draw seeds
}  // namespace

void SimConfig::validate() const {
  if (v < 0) throw DataError("v must be >= 0");
  if (rho_x < 0.0 || rho_x >= 1.0) throw DataError("rho_x must be in [0,1)");
  if (r <= -1.0 || r >= 1.0) throw DataError("r must be in (-1,1)");
  if (m < 2) throw DataError("m must be >= 2");
  if (p <= 0.0 || p >= 1.0) throw DataError("p must be in (0,1)");
  if (n_lo < 1 || n_hi < n_lo) throw DataError("need 1 <= n_lo <= n_hi");
  if (draws < 1) throw DataError("draws must be >= 1");
  if (repeats < 1) throw DataError("repeats must be >= 1");
  if (workers < 1) throw DataError("workers must be >= 1");
  if (level <= 0.0 || level >= 1.0) throw DataError("level must be in (0,1)");
  if (dgp.outcome_icc < 0.0 || dgp.outcome_icc >= 1.0) {
    throw DataError("outcome_icc must be in [0,1)");
  }
  if (dgp.noise_sd < 0.0 || dgp.effect_sd < 0.0) {
    throw DataError("noise_sd and effect_sd must be >= 0");
  }
}

void apply_sim_override(SimConfig& cfg, const std::string& key,
                        const std::string& value) {
  try {
    if (key == "v") cfg.v = std::stoi(value);
    else if (key == "rho_x") cfg.rho_x = std::stod(value);
    else if (key == "r") cfg.r = std::stod(value);
    else if (key == "m") cfg.m = std::stoi(value);
    else if (key == "p") cfg.p = std::stod(value);
    else if (key == "n_lo") cfg.n_lo = std::stoi(value);
    else if (key == "n_hi") cfg.n_hi = std::stoi(value);
    else if (key == "draws") cfg.draws = std::stoi(value);
    else if (key == "repeats") cfg.repeats = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "workers") cfg.workers = std::stoi(value);
    else if (key == "level") cfg.level = std::stod(value);
    else if (key == "g") cfg.g = std::stod(value);
    else if (key == "tau") cfg.dgp.tau = std::stod(value);
    else if (key == "effect_sd") cfg.dgp.effect_sd = std::stod(value);
    else if (key == "outcome_icc") cfg.dgp.outcome_icc = std::stod(value);
    else if (key == "beta_x") cfg.dgp.beta_x = std::stod(value);
    else if (key == "noise_sd") cfg.dgp.noise_sd = std::stod(value);
    else if (key == "size_effect") cfg.dgp.size_effect = std::stod(value);
    else if (key == "skew_sigma") cfg.dgp.skew_sigma = std::stod(value);
    else if (key == "skew")
      cfg.dgp.skew_cluster_effects = (value == "1" || value == "true");
    else if (key == "model") {
      if (value == "none") cfg.adjust_covariates = false;
      else if (value == "interacted") cfg.adjust_covariates = true;
      else throw DataError("model must be none or interacted");
    } else if (key == "variance") {
      if (value == "design") cfg.crse = false;
      else if (value == "crse" || value == "both") cfg.crse = true;
      else throw DataError("variance must be design, crse, or both");
    } else {
      throw DataError("unknown config key '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    throw DataError("bad value '" + value + "' for config key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw DataError("bad value '" + value + "' for config key '" + key + "'");
  }
}

SimConfig parse_sim_config(std::istream& in) {
  SimConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(lineno) +
                      ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    apply_sim_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string sim_config_echo(const SimConfig& cfg) {
  std::ostringstream out;
  out << "v=" << cfg.v << " rho_x=" << cfg.rho_x << " r=" << cfg.r
      << " m=" << cfg.m << " p=" << cfg.p << " n=[" << cfg.n_lo << ','
      << cfg.n_hi << "] draws=" << cfg.draws << " repeats=" << cfg.repeats
      << " seed=" << cfg.seed << " model="
      << (cfg.adjust_covariates ? "interacted" : "none") << " variance="
      << (cfg.crse ? "both" : "design") << " level=" << cfg.level
      << " tau=" << cfg.dgp.tau << " effect_sd=" << cfg.dgp.effect_sd
      << " outcome_icc=" << cfg.dgp.outcome_icc << " beta_x=" << cfg.dgp.beta_x
      << " noise_sd=" << cfg.dgp.noise_sd << " size_effect="
      << cfg.dgp.size_effect << " skew_sigma=" << cfg.dgp.skew_sigma
      << " skew="
      << (cfg.dgp.skew_cluster_effects ? 1 : 0);
  return out.str();
}

CovariateDraw gen_covariates(const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CovariateDraw out;
  Rng size_rng(seed, kSizesStream);
  out.sizes.resize(cfg.m);
  int total = 0;
  for (int j = 0; j < cfg.m; ++j) {
    out.sizes[j] =
        cfg.n_lo +
        static_cast<int>(size_rng.below(cfg.n_hi - cfg.n_lo + 1));
    total += out.sizes[j];
  }
  out.x.resize(total, cfg.v);
  if (cfg.v == 0) return out;

  const double theta = cfg.r / std::sqrt(1.0 - cfg.r * cfg.r);
  const double u_sd = std::sqrt(cfg.rho_x / (1.0 - cfg.rho_x));
  Rng rng(seed, kCovStream);
  int row = 0;
  std::vector<double> u(cfg.v);
  for (int j = 0; j < cfg.m; ++j) {
    for (int k = 0; k < cfg.v; ++k) u[k] = u_sd * rng.normal();
    for (int i = 0; i < out.sizes[j]; ++i, ++row) {
      double prev = 0.0;
      for (int k = 0; k < cfg.v; ++k) {
        const double val = (k == 0 ? 0.0 : theta * prev) + u[k] + rng.normal();
        out.x(row, k) = val;
        prev = val;
      }
    }
  }
  return out;
}

Population gen_population(const SimConfig& cfg, std::uint64_t seed) {
  const CovariateDraw cov = gen_covariates(cfg, seed);
  Population pop;
  pop.v = cfg.v;
  pop.mode = OutcomeMode::FullSchedule;
  pop.blocks.resize(1);
  BlockData& blk = pop.blocks[0];
  blk.id = "B1";
  blk.clusters.resize(cfg.m);

  const double icc = cfg.dgp.outcome_icc;
  const double c_sd = cfg.dgp.noise_sd * std::sqrt(icc / (1.0 - icc));

  // With skewed cluster effects the values are exponential quantiles, the
  // same standardized shape at every seed, so the finite-m sampling
  // distribution of the block estimator is reliably right-skewed instead of
  // skewed only on lucky draws. A seeded shuffle decouples the effect rank
  // from the (ordered) cluster ids.
  Eigen::VectorXd c_effects(cfg.m);
  Rng rng(seed, kOutcomeStream);
  if (cfg.dgp.skew_cluster_effects) {
    for (int j = 0; j < cfg.m; ++j) {
      c_effects(j) =
          std::exp(cfg.dgp.skew_sigma * normal_quantile((j + 0.5) / cfg.m));
    }
    c_effects.array() -= c_effects.mean();
    const double sd =
        std::sqrt(c_effects.squaredNorm() / std::max(1, cfg.m - 1));
    if (sd > 0.0) c_effects *= c_sd / sd;
    for (int j = cfg.m - 1; j > 0; --j) {
      const int k = static_cast<int>(rng.below(j + 1));
      std::swap(c_effects(j), c_effects(k));
    }
  } else {
    for (int j = 0; j < cfg.m; ++j) c_effects(j) = c_sd * rng.normal();
  }

  int row = 0;
  for (int j = 0; j < cfg.m; ++j) {
    ClusterData& cl = blk.clusters[j];
    cl.id = "C" + std::to_string(j + 1);
    const int n = cov.sizes[j];
    cl.weights = Eigen::VectorXd::Ones(n);
    cl.x = cov.x.middleRows(row, n);
    cl.y0.resize(n);
    cl.y1.resize(n);
    double c_j = c_effects(j);
    c_j += cfg.dgp.size_effect * (n - 0.5 * (cfg.n_lo + cfg.n_hi)) /
           std::max(1, cfg.n_hi - cfg.n_lo);
    const double delta_j = cfg.dgp.effect_sd * rng.normal();
    for (int i = 0; i < n; ++i) {
      double y0 = c_j + cfg.dgp.noise_sd * rng.normal();
      if (cfg.v > 0) y0 += cfg.dgp.beta_x * cl.x.row(i).sum();
      cl.y0(i) = y0;
      cl.y1(i) = y0 + cfg.dgp.tau + delta_j;
    }
    row += n;
  }
  aggregate_clusters(pop);
  return pop;
}

namespace {

struct DrawRecord {
  double r2_tx = 0.0, r2_txb = 0.0;
  double beta = 0.0;
  double err = 0.0;  // beta - beta1 of its base population
  double se_design = 0.0;
  bool cover_design = false;
  double se_crse = 0.0;
  bool cover_crse = false;
  double std_stat = 0.0;
};

struct RepeatContext {
  Population pop;
  double beta1 = 0.0;
  double sched_sd = 0.0;
  Eigen::VectorXd gamma;  // schedule slope used for standardization
};

}  // namespace

SimSummary run_study(const SimConfig& cfg) {
  cfg.validate();

  const std::vector<double> props{cfg.p};
  std::vector<RepeatContext> reps(cfg.repeats);
  double approx_tx_sum = 0.0, approx_txb_sum = 0.0, trace_sum = 0.0;
  for (int r = 0; r < cfg.repeats; ++r) {
    RepeatContext& ctx = reps[r];
    ctx.pop = gen_population(
        cfg, Rng(cfg.seed, kPopStream, static_cast<std::uint64_t>(r)).next_u64());
    const BlockSummary bs = block_summary(ctx.pop, 0);
    ctx.beta1 = bs.Ybar1 - bs.Ybar0;
    ctx.gamma = (cfg.adjust_covariates && cfg.v > 0)
                    ? schedule_gamma(ctx.pop, props)
                    : Eigen::VectorXd::Zero(cfg.v);
    const ScheduleVariance sv =
        schedule_variance_block(ctx.pop, 0, cfg.p, ctx.gamma);
    ctx.sched_sd = std::sqrt(std::max(sv.value, 0.0));
    if (cfg.v > 0) {
      const IccDecomposition icc = icc_matrix(ctx.pop);
      const R2Approximations a =
          r2_approximations(cfg.v, cfg.m, ctx.pop.total_units(), icc);
      approx_tx_sum += a.approx_tx;
      approx_txb_sum += a.approx_txb;
      trace_sum += icc.trace;
    }
  }

  const long total = static_cast<long>(cfg.repeats) * cfg.draws;
  std::vector<DrawRecord> recs(total);
  const ModelVariant variant = (cfg.adjust_covariates && cfg.v > 0)
                                   ? ModelVariant::FullInteracted
                                   : ModelVariant::NoCovariates;

  std::atomic<long> next{0};
  auto worker = [&]() {
    for (;;) {
      const long idx = next.fetch_add(1);
      if (idx >= total) return;
      const int r = static_cast<int>(idx / cfg.draws);
      const int d = static_cast<int>(idx % cfg.draws);
      const RepeatContext& ctx = reps[r];
      DrawRecord& rec = recs[idx];

      const std::uint64_t sub =
          Rng(cfg.seed, kDrawStream, static_cast<std::uint64_t>(r),
              static_cast<std::uint64_t>(d))
              .next_u64();
      const Assignment asg = draw_assignment(ctx.pop, props, sub);

      if (cfg.v > 0) {
        const R2Pair r2 = r2_pair(ctx.pop, asg);
        rec.r2_tx = r2.r2_tx;
        rec.r2_txb = r2.r2_txb;
      }

      const WlsFit fit = fit_wls(build_design(ctx.pop, asg, variant));
      rec.beta = fit.beta1(0);
      rec.err = rec.beta - ctx.beta1;

      const VarianceReport dv = design_variance_block(ctx.pop, asg, fit, 0);
      rec.se_design = std::sqrt(dv.value);
      const Interval ci = confidence_interval(rec.beta, dv, cfg.level);
      rec.cover_design = ci.lo <= ctx.beta1 && ctx.beta1 <= ci.hi;

      if (cfg.crse) {
        const CrseVariance cv = crse_variance(fit, cfg.g);
        const VarianceReport cr = cv.report_for(fit.design->treat_col(0));
        rec.se_crse = std::sqrt(cr.value);
        const Interval cci = confidence_interval(rec.beta, cr, cfg.level);
        rec.cover_crse = cci.lo <= ctx.beta1 && ctx.beta1 <= cci.hi;
      }
      rec.std_stat = ctx.sched_sd > 0.0 ? rec.err / ctx.sched_sd : 0.0;
    }
  };
  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(cfg.workers);
    for (int t = 0; t < cfg.workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Fixed-order reduction over the record vector: worker-count invariant.
  SimSummary s;
  s.config = cfg;
  s.rng_id = Rng::kAlgorithmId;
  s.total_draws = total;
  std::vector<double> std_stats;
  std_stats.reserve(total);
  for (const DrawRecord& rec : recs) {
    s.mean_r2_tx += rec.r2_tx;
    s.mean_r2_txb += rec.r2_txb;
    s.mean_bias += rec.err;
    s.mean_se_design += rec.se_design;
    s.coverage_design += rec.cover_design ? 1.0 : 0.0;
    s.mean_se_crse += rec.se_crse;
    s.coverage_crse += rec.cover_crse ? 1.0 : 0.0;
    std_stats.push_back(rec.std_stat);
  }
  const double nd = static_cast<double>(total);
  s.mean_r2_tx /= nd;
  s.mean_r2_txb /= nd;
  s.mean_bias /= nd;
  s.mean_se_design /= nd;
  s.coverage_design /= nd;
  s.mean_se_crse /= nd;
  s.coverage_crse /= nd;
  if (cfg.v > 0) {
    s.approx_tx = approx_tx_sum / cfg.repeats;
    s.approx_txb = approx_txb_sum / cfg.repeats;
    s.trace_gamma_x = trace_sum / cfg.repeats;
  }

  // Empirical SD pooled across repeats, each repeat centered at its own mean.
  double ss = 0.0;
  for (int r = 0; r < cfg.repeats; ++r) {
    double mu = 0.0;
    for (int d = 0; d < cfg.draws; ++d)
      mu += recs[static_cast<long>(r) * cfg.draws + d].beta;
    mu /= cfg.draws;
    for (int d = 0; d < cfg.draws; ++d) {
      const double dev = recs[static_cast<long>(r) * cfg.draws + d].beta - mu;
      ss += dev * dev;
    }
  }
  s.empirical_sd = total > cfg.repeats
                       ? std::sqrt(ss / (total - cfg.repeats))
                       : 0.0;
  s.ks_distance = ks_distance_to_normal(std::move(std_stats));
  return s;
}

std::vector<SimSummary> table_a1_study(const SimConfig& base,
                                       const std::vector<int>& vs,
                                       const std::vector<double>& rhos,
                                       const std::vector<int>& ms) {
  if (vs.empty() || rhos.empty() || ms.empty()) {
    throw DataError("empty study grid");
  }
  std::vector<SimSummary> rows;
  rows.reserve(vs.size() * rhos.size() * ms.size());
  for (int v : vs) {
    for (double rho : rhos) {
      for (int m : ms) {
        SimConfig cfg = base;
        cfg.v = v;
        cfg.rho_x = rho;
        cfg.m = m;
        rows.push_back(run_study(cfg));
      }
    }
  }
  return rows;
}

std::string summary_csv_header() {
  return "v,rho_x,m,n_lo,n_hi,p,draws,repeats,seed,mean_r2_tx,mean_r2_txb,"
         "approx_tx,approx_txb,trace_gamma_x,mean_bias,empirical_sd,"
         "mean_se_design,coverage_design,mean_se_crse,coverage_crse,"
         "ks_distance,total_draws";
}

std::string summary_csv_row(const SimSummary& s) {
  std::ostringstream out;
  out.precision(12);
  const SimConfig& c = s.config;
  out << c.v << ',' << c.rho_x << ',' << c.m << ',' << c.n_lo << ',' << c.n_hi
      << ',' << c.p << ',' << c.draws << ',' << c.repeats << ',' << c.seed
      << ',' << s.mean_r2_tx << ',' << s.mean_r2_txb << ',' << s.approx_tx
      << ',' << s.approx_txb << ',' << s.trace_gamma_x << ',' << s.mean_bias
      << ',' << s.empirical_sd << ',' << s.mean_se_design << ','
      << s.coverage_design << ',' << s.mean_se_crse << ',' << s.coverage_crse
      << ',' << s.ks_distance << ',' << s.total_draws;
  return out.str();
}

std::string summary_table(const std::vector<SimSummary>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(4) << "v" << std::setw(7) << "rho_x"
      << std::setw(5) << "m" << std::setw(10) << "R2_TX" << std::setw(10)
      << "R2_TXB" << std::setw(10) << "E(R2_TX)" << std::setw(11)
      << "E(R2_TXB)" << std::setw(11) << "bias" << std::setw(10) << "emp_sd"
      << std::setw(10) << "se_dsgn" << std::setw(9) << "cover" << std::setw(8)
      << "ks" << '\n';
  for (const SimSummary& s : rows) {
    out << std::left << std::setw(4) << s.config.v << std::setw(7)
        << s.config.rho_x << std::setw(5) << s.config.m << std::fixed
        << std::setprecision(4) << std::setw(10) << s.mean_r2_tx
        << std::setw(10) << s.mean_r2_txb << std::setw(10) << s.approx_tx
        << std::setw(11) << s.approx_txb << std::setw(11) << s.mean_bias
        << std::setw(10) << s.empirical_sd << std::setw(10) << s.mean_se_design
        << std::setw(9) << s.coverage_design << std::setw(8) << s.ks_distance
        << '\n';
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6);
  }
  return out.str();
}

}  // namespace clusterate
