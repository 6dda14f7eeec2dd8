// clusterate: design-based estimation for blocked, cluster-randomized
// experiments with unit weights.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "clusterate/asymptotics.hpp"
#include "clusterate/bias_exact.hpp"
#include "clusterate/collinearity.hpp"
#include "clusterate/estimators.hpp"
#include "clusterate/population.hpp"
#include "clusterate/randomize.hpp"
#include "clusterate/rng.hpp"
#include "clusterate/simlab.hpp"
#include "clusterate/variance.hpp"
#include "clusterate/wls.hpp"

namespace {

using namespace clusterate;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string provenance(const std::string& config_echo, std::uint64_t seed,
                       bool has_seed) {
  std::ostringstream out;
  out << "# clusterate " << kVersion << " rng=" << Rng::kAlgorithmId
      << " seed=";
  if (has_seed) {
    out << seed;
  } else {
    out << '-';
  }
  out << " config=" << std::hex << std::setw(16) << std::setfill('0')
      << fnv1a(config_echo);
  return out.str();
}

void emit(const std::string& text, const std::string& out_path) {
  std::cout << text;
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw DataError("cannot write '" + out_path + "'");
    f << text;
  }
}

int default_workers() {
  if (const char* env = std::getenv("CLUSTERATE_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

struct AnalyzeArgs {
  std::string input;
  std::string model = "interacted";
  std::string variance = "design";
  std::string format = "table";
  std::string out;
  std::string df_rule = "satterthwaite";
  double g = -1.0;
  double qstar = -1.0;
  double level = 0.95;
};

struct EstimateRow {
  std::string scope;
  double estimate = 0.0;
  std::string method;
  double se = 0.0, df = 0.0, g = 0.0, lo = 0.0, hi = 0.0;
  bool has_var = false;
};

std::string render_rows(const std::vector<EstimateRow>& rows,
                        const std::string& format, const std::string& header) {
  std::ostringstream out;
  out << header << '\n';
  if (format == "csv") {
    out << "scope,estimate,method,se,df,g,ci_lo,ci_hi\n";
    out.precision(12);
    for (const auto& r : rows) {
      out << r.scope << ',' << r.estimate << ',' << r.method << ',';
      if (r.has_var) {
        out << r.se << ',' << r.df << ',' << r.g << ',' << r.lo << ',' << r.hi;
      } else {
        out << ",,,,";
      }
      out << '\n';
    }
  } else if (format == "json") {
    json j = json::array();
    for (const auto& r : rows) {
      json row = {{"scope", r.scope},
                  {"estimate", r.estimate},
                  {"method", r.method}};
      if (r.has_var) {
        row["se"] = r.se;
        row["df"] = r.df;
        row["g"] = r.g;
        row["ci"] = {r.lo, r.hi};
      }
      j.push_back(row);
    }
    out << j.dump(2) << '\n';
  } else {
    out << std::left << std::setw(12) << "scope" << std::setw(13) << "estimate"
        << std::setw(10) << "method" << std::setw(12) << "se" << std::setw(9)
        << "df" << std::setw(9) << "g" << std::setw(12) << "ci_lo"
        << std::setw(12) << "ci_hi" << '\n';
    for (const auto& r : rows) {
      out << std::left << std::setw(12) << r.scope << std::setprecision(6)
          << std::setw(13) << r.estimate << std::setw(10) << r.method;
      if (r.has_var) {
        out << std::setw(12) << r.se << std::setw(9) << std::setprecision(4)
            << r.df << std::setw(9) << r.g << std::setprecision(6)
            << std::setw(12) << r.lo << std::setw(12) << r.hi;
      }
      out << '\n';
    }
  }
  return out.str();
}

int cmd_analyze(const AnalyzeArgs& a) {
  IngestResult ing = ingest_file(a.input);
  if (!ing.assignment.has_value()) {
    throw DataError("input has no treatment column 'T'");
  }
  aggregate_clusters(ing.population);
  const Population& pop = ing.population;
  const Assignment& asg = *ing.assignment;

  const bool want_design = a.variance == "design" || a.variance == "both";
  const bool want_crse = a.variance == "crse" || a.variance == "both";

  DesignVarianceOptions dvo;
  dvo.qstar_override = a.qstar;
  if (a.df_rule == "min") {
    dvo.df_rule = DfRule::MinArm;
  } else if (a.df_rule != "satterthwaite") {
    throw DataError("df rule must be satterthwaite or min");
  }

  std::vector<EstimateRow> rows;
  auto add_ci = [&](EstimateRow& row, const VarianceReport& vr) {
    row.method = variance_method_name(vr.method);
    row.se = std::sqrt(vr.value);
    row.df = vr.df;
    row.g = vr.g;
    const Interval ci = confidence_interval(row.estimate, vr, a.level);
    row.lo = ci.lo;
    row.hi = ci.hi;
    row.has_var = true;
  };

  if (a.model == "pooled") {
    const auto dm = std::make_shared<const DesignMatrix>(
        build_design(pop, asg, ModelVariant::PooledRestricted));
    const WlsFit fit = fit_wls(dm);
    EstimateRow row;
    row.scope = "pooled";
    row.estimate = fit.beta1(0);
    if (want_design) {
      throw ModelError(
          "design-based variance applies to per-block coefficients; use "
          "--variance crse with --model pooled");
    }
    if (want_crse) {
      const CrseVariance cv = crse_variance(fit, a.g);
      rows.push_back(row);
      add_ci(rows.back(), cv.report_for(0));
    } else {
      rows.push_back(row);
    }
  } else {
    ModelVariant variant;
    if (a.model == "none") {
      variant = ModelVariant::NoCovariates;
    } else if (a.model == "interacted") {
      variant = pop.v > 0 ? ModelVariant::FullInteracted
                          : ModelVariant::NoCovariates;
    } else if (a.model == "block-cov") {
      variant = pop.v > 0 ? ModelVariant::BlockCovariateInteracted
                          : ModelVariant::NoCovariates;
    } else {
      throw DataError("model must be none, interacted, pooled, or block-cov");
    }
    const auto dm =
        std::make_shared<const DesignMatrix>(build_design(pop, asg, variant));
    const WlsFit fit = fit_wls(dm);
    CrseVariance cv;
    if (want_crse) cv = crse_variance(fit, a.g);
    for (int b = 0; b < pop.h(); ++b) {
      EstimateRow base;
      base.scope = pop.blocks[b].id;
      base.estimate = fit.beta1(b);
      if (want_design) {
        EstimateRow row = base;
        add_ci(row, design_variance_block(pop, asg, fit, b, dvo));
        rows.push_back(row);
      }
      if (want_crse) {
        EstimateRow row = base;
        add_ci(row, cv.report_for(dm->treat_col(b)));
        rows.push_back(row);
      }
      if (!want_design && !want_crse) rows.push_back(base);
    }
    // Pooled summary from the restricted model.
    const auto pdm = std::make_shared<const DesignMatrix>(
        build_design(pop, asg, ModelVariant::PooledRestricted));
    const WlsFit pfit = fit_wls(pdm);
    EstimateRow prow;
    prow.scope = "pooled";
    prow.estimate = pfit.beta1(0);
    if (want_crse) {
      add_ci(prow, crse_variance(pfit, a.g).report_for(0));
    }
    rows.push_back(prow);
  }

  std::ostringstream echo;
  echo << "analyze input=" << a.input << " model=" << a.model
       << " variance=" << a.variance << " g=" << a.g << " qstar=" << a.qstar
       << " level=" << a.level << " df_rule=" << a.df_rule;
  emit(render_rows(rows, a.format, provenance(echo.str(), 0, false)),
       a.out);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"design-based analysis of blocked cluster-randomized data"};
  app.require_subcommand(1);

  // --- analyze ---
  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "estimate effects from data");
  analyze->add_option("--input", an.input, "unit-level CSV")->required();
  analyze->add_option("--model", an.model,
                      "none|interacted|pooled|block-cov");
  analyze->add_option("--variance", an.variance, "design|crse|both");
  analyze->add_option("--g", an.g, "CRSE correction (default m/(m-1))");
  analyze->add_option("--qstar", an.qstar,
                      "block df share (default weight share)");
  analyze->add_option("--level", an.level, "CI level");
  analyze->add_option("--df-rule", an.df_rule, "satterthwaite|min");
  analyze->add_option("--format", an.format, "table|csv|json");
  analyze->add_option("--out", an.out, "also write to file");

  // --- simulate ---
  std::string sim_config_path, sim_out, sim_format = "table";
  std::vector<std::string> sim_sets;
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false;
  int sim_workers = default_workers();
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  simulate->add_option("--config", sim_config_path, "key=value config file");
  simulate->add_option("--set", sim_sets, "override key=value");
  simulate->add_option("--seed", sim_seed, "RNG seed (required)")
      ->each([&](const std::string&) { sim_seed_set = true; });
  simulate->add_option("--workers", sim_workers, "worker threads");
  simulate->add_option("--format", sim_format, "table|csv");
  simulate->add_option("--out", sim_out, "also write to file");

  // --- r2lab ---
  std::uint64_t r2_seed = 0;
  bool r2_seed_set = false;
  int r2_draws = 500, r2_repeats = 10, r2_workers = default_workers();
  std::string r2_out, r2_format = "table";
  std::vector<int> r2_vs{2, 5, 10};
  std::vector<double> r2_rhos{0.0, 0.4, 0.8};
  std::vector<int> r2_ms{20, 40, 60};
  auto* r2lab = app.add_subcommand(
      "r2lab", "collinearity study over a (v, rho_x, m) grid");
  r2lab->add_option("--seed", r2_seed, "RNG seed (required)")
      ->each([&](const std::string&) { r2_seed_set = true; });
  r2lab->add_option("--v", r2_vs, "covariate counts");
  r2lab->add_option("--rho", r2_rhos, "covariate ICCs");
  r2lab->add_option("--m", r2_ms, "cluster counts");
  r2lab->add_option("--draws", r2_draws, "draws per dataset");
  r2lab->add_option("--repeats", r2_repeats, "base datasets per cell");
  r2lab->add_option("--workers", r2_workers, "worker threads");
  r2lab->add_option("--format", r2_format, "table|csv");
  r2lab->add_option("--out", r2_out, "also write to file");

  // --- exact ---
  std::string ex_input, ex_out;
  double ex_p = 0.5;
  std::uint64_t ex_seed = 0;
  bool ex_seed_set = false;
  double ex_cap = kDefaultEnumerationCap;
  auto* exact = app.add_subcommand(
      "exact", "exact enumeration bias of the block estimators");
  exact->add_option("--input", ex_input, "schedule CSV with y0,y1")->required();
  exact->add_option("--p", ex_p, "treated proportion");
  exact->add_option("--seed", ex_seed, "RNG seed (required)")
      ->each([&](const std::string&) { ex_seed_set = true; });
  exact->add_option("--cap", ex_cap, "enumeration cap");
  exact->add_option("--out", ex_out, "also write to file");

  // --- conditions ---
  std::string cn_input, cn_out;
  double cn_p = 0.5;
  int cn_reps = 0;
  std::uint64_t cn_seed = 0;
  auto* conditions = app.add_subcommand(
      "conditions", "finite-m regularity-condition diagnostics");
  conditions->add_option("--input", cn_input, "schedule CSV with y0,y1")
      ->required();
  conditions->add_option("--p", cn_p, "treated proportion");
  conditions->add_option("--reps", cn_reps,
                         "optional normality draws (needs --seed)");
  conditions->add_option("--seed", cn_seed, "RNG seed for --reps");
  conditions->add_option("--out", cn_out, "also write to file");

  CLI11_PARSE(app, argc, argv);

  if (analyze->parsed()) return cmd_analyze(an);

  if (simulate->parsed()) {
    if (!sim_seed_set) throw DataError("simulate requires --seed");
    SimConfig cfg;
    if (!sim_config_path.empty()) {
      std::ifstream f(sim_config_path);
      if (!f) throw DataError("cannot read '" + sim_config_path + "'");
      cfg = parse_sim_config(f);
    }
    for (const std::string& kv : sim_sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw DataError("--set needs key=value");
      apply_sim_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.seed = sim_seed;
    cfg.workers = sim_workers;
    const SimSummary s = run_study(cfg);
    std::ostringstream out;
    out << provenance(sim_config_echo(cfg), cfg.seed, true) << '\n';
    out << "# " << sim_config_echo(cfg) << '\n';
    if (sim_format == "csv") {
      out << summary_csv_header() << '\n' << summary_csv_row(s) << '\n';
    } else {
      out << summary_table({s});
    }
    emit(out.str(), sim_out);
    return 0;
  }

  if (r2lab->parsed()) {
    if (!r2_seed_set) throw DataError("r2lab requires --seed");
    SimConfig base;
    base.seed = r2_seed;
    base.draws = r2_draws;
    base.repeats = r2_repeats;
    base.workers = r2_workers;
    const auto rows = table_a1_study(base, r2_vs, r2_rhos, r2_ms);
    std::ostringstream echo;
    echo << "r2lab draws=" << r2_draws << " repeats=" << r2_repeats;
    std::ostringstream out;
    out << provenance(echo.str(), r2_seed, true) << '\n';
    if (r2_format == "csv") {
      out << summary_csv_header() << ",dominance\n";
      for (const auto& s : rows) {
        out << summary_csv_row(s) << ',' << (s.mean_r2_txb - s.mean_r2_tx)
            << '\n';
      }
    } else {
      out << summary_table(rows);
    }
    emit(out.str(), r2_out);
    return 0;
  }

  if (exact->parsed()) {
    if (!ex_seed_set) throw DataError("exact requires --seed");
    IngestResult ing = ingest_file(ex_input);
    aggregate_clusters(ing.population);
    const Population& pop = ing.population;
    pop.require_schedule("exact");
    const std::vector<double> props(pop.h(), ex_p);
    const auto counts = treated_counts(pop, props);

    std::ostringstream echo;
    echo << "exact input=" << ex_input << " p=" << ex_p << " cap=" << ex_cap;
    std::ostringstream out;
    out << provenance(echo.str(), ex_seed, true) << '\n';
    out << "block,estimand,exact_mean,bias,cov_treated,cov_control,"
           "hartley_total,identity_residual\n";
    out.precision(15);
    for (int b = 0; b < pop.h(); ++b) {
      const BlockSummary bs = block_summary(pop, b);
      const double estimand = bs.Ybar1 - bs.Ybar0;
      const double mean = exact_expectation(
          pop, counts,
          [b](const Population& p2, const Assignment& a2) {
            const BlockSummary obs = block_summary(p2, b, &a2);
            return obs.ybar_treated - obs.ybar_control;
          },
          ex_cap);
      const HartleyBias hb = hartley_bias(pop, b, ex_p, ex_cap);
      out << pop.blocks[b].id << ',' << estimand << ',' << mean << ','
          << mean - estimand << ',' << hb.cov_treated << ',' << hb.cov_control
          << ',' << hb.total << ',' << (mean - estimand) - hb.total << '\n';
    }
    emit(out.str(), ex_out);
    return 0;
  }

  if (conditions->parsed()) {
    IngestResult ing = ingest_file(cn_input);
    aggregate_clusters(ing.population);
    const Population& pop = ing.population;
    pop.require_schedule("conditions");
    const std::vector<double> props(pop.h(), cn_p);
    const Eigen::VectorXd gamma = pop.v > 0 ? schedule_gamma(pop, props)
                                            : Eigen::VectorXd::Zero(0);
    std::ostringstream echo;
    echo << "conditions input=" << cn_input << " p=" << cn_p;
    std::ostringstream out;
    out << provenance(echo.str(), cn_seed, cn_reps > 0) << '\n';
    out << condition_report_csv(condition_report(pop, props, gamma));
    if (cn_reps > 0) {
      out << "ks_distance," << normality_diagnostic(pop, props, gamma, cn_reps,
                                                    cn_seed)
          << '\n';
    }
    emit(out.str(), cn_out);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 3;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
