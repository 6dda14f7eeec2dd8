#include "clusterate/randomize.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "clusterate/rng.hpp"

namespace clusterate {

void Assignment::validate_against(const Population& pop) const {
  if (h() != pop.h()) throw ModelError("assignment block count mismatch");
  for (int b = 0; b < pop.h(); ++b) {
    if (static_cast<int>(treat[b].size()) != pop.blocks[b].m()) {
      throw ModelError("assignment cluster count mismatch in block '" +
                       pop.blocks[b].id + "'");
    }
    int m1 = 0;
    for (auto t : treat[b]) m1 += (t != 0);
    if (m1 != treated_count[b]) {
      throw ModelError("assignment treated count mismatch in block '" +
                       pop.blocks[b].id + "'");
    }
  }
}

int treated_count_for(int m_b, double p_b, const std::string& block_id) {
  const double raw = p_b * m_b;
  // round half to even
  double rounded = std::nearbyint(raw);
  if (std::abs(raw - std::floor(raw) - 0.5) < 1e-12) {
    const double lo = std::floor(raw);
    rounded = (static_cast<long long>(lo) % 2 == 0) ? lo : lo + 1.0;
  }
  const int m1 = static_cast<int>(rounded);
  if (m1 < 1 || m1 > m_b - 1) {
    throw InfeasibleError("block '" + block_id + "': treated count " +
                          std::to_string(m1) + " of " + std::to_string(m_b) +
                          " leaves an empty arm");
  }
  return m1;
}

std::vector<int> treated_counts(const Population& pop,
                                const std::vector<double>& proportions) {
  if (proportions.size() != static_cast<std::size_t>(pop.h())) {
    throw ModelError("need one treated proportion per block");
  }
  std::vector<int> counts(pop.h());
  for (int b = 0; b < pop.h(); ++b) {
    counts[b] = treated_count_for(pop.blocks[b].m(), proportions[b],
                                  pop.blocks[b].id);
  }
  return counts;
}

Assignment draw_assignment(const Population& pop,
                           const std::vector<double>& proportions,
                           std::uint64_t seed) {
  const auto counts = treated_counts(pop, proportions);
  Assignment asg;
  asg.treat.resize(pop.h());
  asg.treated_count = counts;
  for (int b = 0; b < pop.h(); ++b) {
    const int m = pop.blocks[b].m();
    const int m1 = counts[b];
    Rng rng(seed, 0x61736779u /* block stream tag */, static_cast<std::uint64_t>(b));
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m1; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
      std::swap(idx[i], idx[j]);
    }
    asg.treat[b].assign(m, 0);
    for (int i = 0; i < m1; ++i) asg.treat[b][idx[i]] = 1;
  }
  return asg;
}

double assignment_space_size(const Population& pop,
                             const std::vector<int>& treated_counts) {
  double total = 1.0;
  for (int b = 0; b < pop.h(); ++b) {
    const int m = pop.blocks[b].m();
    const int k = treated_counts[b];
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (m - i) / (i + 1);
    total *= std::round(c);
  }
  return total;
}

void enumerate_assignments(const Population& pop,
                           const std::vector<int>& counts,
                           const std::function<bool(const Assignment&)>& visit,
                           double cap) {
  const double total = assignment_space_size(pop, counts);
  if (total > cap) {
    std::ostringstream msg;
    msg << "assignment space has " << total << " elements, above the cap of "
        << cap;
    throw InfeasibleError(msg.str());
  }

  const int h = pop.h();
  // Per-block combination state: chosen indices in increasing order.
  std::vector<std::vector<int>> combo(h);
  Assignment asg;
  asg.treat.resize(h);
  asg.treated_count = counts;
  for (int b = 0; b < h; ++b) {
    combo[b].resize(counts[b]);
    std::iota(combo[b].begin(), combo[b].end(), 0);
    asg.treat[b].assign(pop.blocks[b].m(), 0);
  }

  auto write_block = [&](int b) {
    std::fill(asg.treat[b].begin(), asg.treat[b].end(), 0);
    for (int i : combo[b]) asg.treat[b][i] = 1;
  };
  for (int b = 0; b < h; ++b) write_block(b);

  // Lexicographic next-combination within a block; odometer across blocks
  // with the last block advancing fastest.
  auto next_combo = [&](int b) -> bool {
    const int m = pop.blocks[b].m();
    const int k = counts[b];
    int i = k - 1;
    while (i >= 0 && combo[b][i] == m - k + i) --i;
    if (i < 0) return false;
    ++combo[b][i];
    for (int j = i + 1; j < k; ++j) combo[b][j] = combo[b][j - 1] + 1;
    return true;
  };

  for (;;) {
    if (!visit(asg)) return;
    int b = h - 1;
    while (b >= 0 && !next_combo(b)) {
      std::iota(combo[b].begin(), combo[b].end(), 0);
      write_block(b);
      --b;
    }
    if (b < 0) return;
    write_block(b);
  }
}

std::string assignment_to_csv(const Population& pop, const Assignment& asg) {
  std::ostringstream out;
  out << "block,cluster,T\n";
  for (int b = 0; b < pop.h(); ++b) {
    for (int j = 0; j < pop.blocks[b].m(); ++j) {
      out << pop.blocks[b].id << ',' << pop.blocks[b].clusters[j].id << ','
          << static_cast<int>(asg.treat[b][j]) << '\n';
    }
  }
  return out.str();
}

}  // namespace clusterate
