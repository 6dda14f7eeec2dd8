#include "clusterate/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "clusterate/randomize.hpp"

namespace clusterate {

int BlockData::total_units() const {
  int n = 0;
  for (const auto& c : clusters) n += c.n();
  return n;
}

int Population::total_clusters() const {
  int m = 0;
  for (const auto& b : blocks) m += b.m();
  return m;
}

int Population::total_units() const {
  int n = 0;
  for (const auto& b : blocks) n += b.total_units();
  return n;
}

void Population::require_schedule(const char* op) const {
  if (mode != OutcomeMode::FullSchedule) {
    throw ModelError(std::string(op) +
                     " requires a full schedule of potential outcomes");
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) {
    // Trim whitespace and a possible trailing CR.
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

double parse_real(const std::string& s, const std::string& what, int row) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row) + ": cannot parse " + what +
                    " value '" + s + "'");
  }
}

struct RawUnit {
  double weight;
  double y = 0, y0 = 0, y1 = 0;
  std::vector<double> x;
  int t = -1;  // optional treatment flag
};

}  // namespace

IngestResult ingest_units(std::istream& in, const ColumnSchema& schema) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("empty input: no header row");
  const auto header = split_line(header_line, schema.delimiter);

  int col_block = -1, col_cluster = -1, col_unit = -1, col_weight = -1;
  int col_y = -1, col_y0 = -1, col_y1 = -1, col_t = -1;
  std::vector<int> col_x;
  std::vector<std::string> x_names;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    const auto& name = header[i];
    if (name == schema.block) col_block = i;
    else if (name == schema.cluster) col_cluster = i;
    else if (name == schema.unit) col_unit = i;
    else if (name == schema.weight) col_weight = i;
    else if (name == schema.y) col_y = i;
    else if (name == schema.y0) col_y0 = i;
    else if (name == schema.y1) col_y1 = i;
    else if (name == schema.treatment) col_t = i;
    else {
      col_x.push_back(i);
      x_names.push_back(name);
    }
  }
  if (col_block < 0) throw DataError("missing column '" + schema.block + "'");
  if (col_cluster < 0) throw DataError("missing column '" + schema.cluster + "'");
  if (col_weight < 0) throw DataError("missing column '" + schema.weight + "'");
  const bool has_observed = col_y >= 0;
  const bool has_schedule = col_y0 >= 0 || col_y1 >= 0;
  if (has_observed && has_schedule) {
    throw DataError("mixed outcome modes: both '" + schema.y + "' and '" +
                    schema.y0 + "'/'" + schema.y1 + "' columns present");
  }
  if (!has_observed && !has_schedule) {
    throw DataError("no outcome column: expected '" + schema.y + "' or '" +
                    schema.y0 + "' and '" + schema.y1 + "'");
  }
  if (has_schedule && (col_y0 < 0 || col_y1 < 0)) {
    throw DataError("schedule mode needs both '" + schema.y0 + "' and '" +
                    schema.y1 + "' columns");
  }

  const int v = static_cast<int>(col_x.size());
  const std::size_t ncols = header.size();

  // (block id, cluster id) -> units, in first-appearance order.
  std::vector<std::string> block_order;
  std::map<std::string, int> block_index;
  std::vector<std::vector<std::string>> cluster_order;
  std::vector<std::map<std::string, int>> cluster_index;
  std::vector<std::vector<std::vector<RawUnit>>> units;
  std::vector<std::vector<std::vector<std::string>>> unit_ids;

  std::string line;
  int row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_line(line, schema.delimiter);
    if (fields.size() != ncols) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(ncols) + " fields, got " +
                      std::to_string(fields.size()));
    }
    RawUnit u;
    u.weight = parse_real(fields[col_weight], "weight", row);
    if (!(u.weight > 0.0)) {
      throw DataError("row " + std::to_string(row) +
                      ": non-positive weight " + fields[col_weight]);
    }
    if (has_observed) {
      u.y = parse_real(fields[col_y], "outcome", row);
    } else {
      u.y0 = parse_real(fields[col_y0], "y0", row);
      u.y1 = parse_real(fields[col_y1], "y1", row);
    }
    u.x.reserve(v);
    for (int k = 0; k < v; ++k) {
      u.x.push_back(parse_real(fields[col_x[k]], "covariate " + x_names[k], row));
    }
    if (col_t >= 0) {
      const double t = parse_real(fields[col_t], "treatment", row);
      if (t != 0.0 && t != 1.0) {
        throw DataError("row " + std::to_string(row) +
                        ": treatment must be 0 or 1");
      }
      u.t = static_cast<int>(t);
    }

    const std::string& bid = fields[col_block];
    auto bit = block_index.find(bid);
    int bi;
    if (bit == block_index.end()) {
      bi = static_cast<int>(block_order.size());
      block_index.emplace(bid, bi);
      block_order.push_back(bid);
      cluster_order.emplace_back();
      cluster_index.emplace_back();
      units.emplace_back();
      unit_ids.emplace_back();
    } else {
      bi = bit->second;
    }
    const std::string& cid = fields[col_cluster];
    auto cit = cluster_index[bi].find(cid);
    int ci;
    if (cit == cluster_index[bi].end()) {
      ci = static_cast<int>(cluster_order[bi].size());
      cluster_index[bi].emplace(cid, ci);
      cluster_order[bi].push_back(cid);
      units[bi].emplace_back();
      unit_ids[bi].emplace_back();
    } else {
      ci = cit->second;
    }
    units[bi][ci].push_back(std::move(u));
    unit_ids[bi][ci].push_back(col_unit >= 0 ? fields[col_unit] : "");
  }

  if (block_order.empty()) throw DataError("no data rows");

  IngestResult result;
  Population& pop = result.population;
  pop.v = v;
  pop.mode = has_observed ? OutcomeMode::Observed : OutcomeMode::FullSchedule;

  std::optional<Assignment> asg;
  if (col_t >= 0) {
    asg.emplace();
    asg->treat.resize(block_order.size());
    asg->treated_count.assign(block_order.size(), 0);
  }

  for (std::size_t bi = 0; bi < block_order.size(); ++bi) {
    if (cluster_order[bi].size() < 2) {
      throw DataError("block '" + block_order[bi] +
                      "' has fewer than 2 clusters");
    }
    BlockData block;
    block.id = block_order[bi];
    for (std::size_t ci = 0; ci < cluster_order[bi].size(); ++ci) {
      const auto& us = units[bi][ci];
      ClusterData c;
      c.id = cluster_order[bi][ci];
      const int n = static_cast<int>(us.size());
      c.weights.resize(n);
      if (pop.mode == OutcomeMode::Observed) {
        c.y.resize(n);
      } else {
        c.y0.resize(n);
        c.y1.resize(n);
      }
      c.x.resize(n, v);
      int cluster_t = us.front().t;
      for (int i = 0; i < n; ++i) {
        c.weights(i) = us[i].weight;
        if (pop.mode == OutcomeMode::Observed) c.y(i) = us[i].y;
        else { c.y0(i) = us[i].y0; c.y1(i) = us[i].y1; }
        for (int k = 0; k < v; ++k) c.x(i, k) = us[i].x[k];
        if (us[i].t != cluster_t) {
          throw DataError("cluster '" + c.id + "' in block '" + block.id +
                          "' has mixed treatment values");
        }
      }
      if (asg) {
        asg->treat[bi].push_back(static_cast<std::uint8_t>(cluster_t == 1));
        if (cluster_t == 1) ++asg->treated_count[bi];
      }
      block.clusters.push_back(std::move(c));
    }
    pop.blocks.push_back(std::move(block));
  }
  result.assignment = std::move(asg);
  return result;
}

IngestResult ingest_file(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  return ingest_units(in, schema);
}

void aggregate_clusters(Population& pop) {
  for (auto& block : pop.blocks) {
    block.w = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(pop.v);
    for (auto& c : block.clusters) {
      c.w = c.weights.sum();
      if (pop.mode == OutcomeMode::Observed) {
        c.ybar = c.weights.dot(c.y) / c.w;
      } else {
        c.ybar0 = c.weights.dot(c.y0) / c.w;
        c.ybar1 = c.weights.dot(c.y1) / c.w;
      }
      c.xbar = (pop.v > 0) ? Eigen::VectorXd(c.x.transpose() * c.weights / c.w)
                           : Eigen::VectorXd(0);
      block.w += c.w;
      if (pop.v > 0) xsum += c.x.transpose() * c.weights;
    }
    block.wbar = block.w / block.m();
    block.xbarbar = (pop.v > 0) ? Eigen::VectorXd(xsum / block.w)
                                : Eigen::VectorXd(0);
  }
  pop.aggregated = true;
}

BlockSummary block_summary(const Population& pop, int block_index,
                           const Assignment* asg) {
  const BlockData& block = pop.blocks.at(block_index);
  BlockSummary s;
  s.w = block.w;
  s.wbar = block.wbar;
  s.xbarbar = block.xbarbar;

  if (pop.mode == OutcomeMode::FullSchedule) {
    double n1 = 0, n0 = 0;
    for (const auto& c : block.clusters) {
      n1 += c.w * c.ybar1;
      n0 += c.w * c.ybar0;
    }
    s.Ybar1 = n1 / block.w;
    s.Ybar0 = n0 / block.w;
  }

  if (asg != nullptr) {
    const auto& t = asg->treat.at(block_index);
    if (static_cast<int>(t.size()) != block.m()) {
      throw ModelError("assignment does not match block '" + block.id + "'");
    }
    double y1num = 0, y0num = 0;
    Eigen::VectorXd x1num = Eigen::VectorXd::Zero(pop.v);
    Eigen::VectorXd x0num = Eigen::VectorXd::Zero(pop.v);
    for (int j = 0; j < block.m(); ++j) {
      const auto& c = block.clusters[j];
      const bool treated = t[j] != 0;
      const double ym = c.observed_mean(pop.mode, treated);
      if (treated) {
        s.w1 += c.w;
        ++s.m1;
        y1num += c.w * ym;
        if (pop.v > 0) x1num += c.w * c.xbar;
      } else {
        s.w0 += c.w;
        ++s.m0;
        y0num += c.w * ym;
        if (pop.v > 0) x0num += c.w * c.xbar;
      }
    }
    if (s.m1 == 0 || s.m0 == 0) {
      throw ModelError("block '" + block.id +
                       "' has an empty arm under this assignment");
    }
    s.pstar = s.w1 / s.w;
    s.ybar_treated = y1num / s.w1;
    s.ybar_control = y0num / s.w0;
    s.xbar_treated = (pop.v > 0) ? Eigen::VectorXd(x1num / s.w1)
                                 : Eigen::VectorXd(0);
    s.xbar_control = (pop.v > 0) ? Eigen::VectorXd(x0num / s.w0)
                                 : Eigen::VectorXd(0);
  }
  return s;
}

Population replicate(const Population& pop, int k) {
  Population out;
  out.v = pop.v;
  out.mode = pop.mode;
  for (const auto& block : pop.blocks) {
    BlockData nb;
    nb.id = block.id;
    for (int r = 0; r < k; ++r) {
      for (const auto& c : block.clusters) {
        ClusterData nc = c;
        if (r > 0) nc.id = c.id + "#" + std::to_string(r);
        nb.clusters.push_back(std::move(nc));
      }
    }
    out.blocks.push_back(std::move(nb));
  }
  aggregate_clusters(out);
  return out;
}

}  // namespace clusterate
