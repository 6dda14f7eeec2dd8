#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "clusterate/errors.hpp"

namespace clusterate {

enum class OutcomeMode { Observed, FullSchedule };

struct Population;

// Blocked complete randomization: a binary vector per block with a fixed
// treated count.
struct Assignment {
  std::vector<std::vector<std::uint8_t>> treat;  // [block][cluster]
  std::vector<int> treated_count;                // m_b^1

  int h() const { return static_cast<int>(treat.size()); }
  bool is_treated(int block, int cluster) const {
    return treat[block][cluster] != 0;
  }
  void validate_against(const Population& pop) const;
};

// One cluster: unit-level weights / outcomes / covariates in row order, plus
// weighted aggregates filled by aggregate_clusters().
struct ClusterData {
  std::string id;
  Eigen::VectorXd weights;  // n_jb, strictly positive
  Eigen::VectorXd y;        // Observed mode
  Eigen::VectorXd y0, y1;   // FullSchedule mode
  Eigen::MatrixXd x;        // n_jb x v

  // Aggregates.
  double w = 0.0;      // sum of unit weights (unnormalized)
  double ybar = 0.0;   // weighted mean outcome (Observed)
  double ybar0 = 0.0;  // weighted mean Y(0) (FullSchedule)
  double ybar1 = 0.0;  // weighted mean Y(1) (FullSchedule)
  Eigen::VectorXd xbar;

  int n() const { return static_cast<int>(weights.size()); }

  // Revealed weighted cluster mean under treatment status `treated`.
  double observed_mean(OutcomeMode mode, bool treated) const {
    if (mode == OutcomeMode::Observed) return ybar;
    return treated ? ybar1 : ybar0;
  }
};

struct BlockData {
  std::string id;
  std::vector<ClusterData> clusters;

  // Aggregates.
  double w = 0.0;     // total block weight
  double wbar = 0.0;  // w / m_b
  Eigen::VectorXd xbarbar;

  int m() const { return static_cast<int>(clusters.size()); }
  int total_units() const;
};

struct Population {
  std::vector<BlockData> blocks;
  int v = 0;  // covariate dimension (0 allowed)
  OutcomeMode mode = OutcomeMode::Observed;
  bool aggregated = false;

  int h() const { return static_cast<int>(blocks.size()); }
  int total_clusters() const;
  int total_units() const;

  void require_schedule(const char* op) const;
};

// Assignment-dependent (and assignment-free) block-level ratio statistics.
struct BlockSummary {
  double w = 0.0;
  double wbar = 0.0;
  Eigen::VectorXd xbarbar;

  // Present when an assignment was supplied.
  double w1 = 0.0, w0 = 0.0;
  int m1 = 0, m0 = 0;
  double pstar = 0.0;              // w1 / w
  double ybar_treated = 0.0;       // ratio mean over the treated arm
  double ybar_control = 0.0;       // ratio mean over the control arm
  Eigen::VectorXd xbar_treated;    // weighted covariate ratio mean, treated
  Eigen::VectorXd xbar_control;

  // FullSchedule mode only (assignment-free weighted means).
  double Ybar1 = 0.0, Ybar0 = 0.0;
};

struct ColumnSchema {
  std::string block = "block";
  std::string cluster = "cluster";
  std::string unit = "unit";
  std::string weight = "weight";
  std::string y = "y";
  std::string y0 = "y0";
  std::string y1 = "y1";
  std::string treatment = "T";  // optional column; captured when present
  char delimiter = ',';
};

struct IngestResult {
  Population population;
  // Filled when the input carries a treatment column (Observed-mode analyses).
  std::optional<Assignment> assignment;
};

// Parses delimited text with a header row. Blocks and clusters keep
// first-appearance order; unit rows keep file order within each cluster.
// Covariate columns are every header not claimed by the schema. Aggregates
// are not yet computed.
IngestResult ingest_units(std::istream& in, const ColumnSchema& schema = {});
IngestResult ingest_file(const std::string& path,
                         const ColumnSchema& schema = {});

// Fills cluster aggregates (w_jb, ybar, xbar) and block totals (w_b, wbar_b,
// xbarbar_b). The population is treated as immutable afterwards.
void aggregate_clusters(Population& pop);

BlockSummary block_summary(const Population& pop, int block_index,
                           const Assignment* asg = nullptr);

// k-fold replication: every cluster duplicated k times with suffixed ids.
// Estimands are unchanged; used by the asymptotic-condition diagnostics.
Population replicate(const Population& pop, int k);

}  // namespace clusterate
