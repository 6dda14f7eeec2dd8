#include "clusterate/bias_exact.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "clusterate/stats.hpp"

namespace clusterate {

double exact_expectation(
    const Population& pop, const std::vector<int>& treated_counts,
    const std::function<double(const Population&, const Assignment&)>& statistic,
    double cap) {
  pop.require_schedule("exact_expectation");
  KahanSum acc;
  long long count = 0;
  enumerate_assignments(
      pop, treated_counts,
      [&](const Assignment& asg) {
        acc.add(statistic(pop, asg));
        ++count;
        return true;
      },
      cap);
  return acc.value() / static_cast<double>(count);
}

HartleyBias hartley_bias(const Population& pop, int block, double p_b,
                         double cap) {
  pop.require_schedule("hartley_bias");
  const BlockData& blk = pop.blocks[block];
  const int m = blk.m();
  const int m1 = treated_count_for(m, p_b, blk.id);
  const int m0 = m - m1;

  double n_subsets = 1.0;
  for (int i = 0; i < m1; ++i) n_subsets = n_subsets * (m - i) / (i + 1);
  n_subsets = std::round(n_subsets);
  if (n_subsets > cap) {
    std::ostringstream msg;
    msg << "block '" << blk.id << "' has " << n_subsets
        << " assignments, above the cap of " << cap;
    throw InfeasibleError(msg.str());
  }

  const double wtot = blk.w;
  KahanSum e_r1, e_r0, e_r1w, e_r0w;

  std::vector<int> combo(m1);
  std::iota(combo.begin(), combo.end(), 0);
  std::vector<char> in(m, 0);
  for (;;) {
    std::fill(in.begin(), in.end(), 0);
    for (int i : combo) in[i] = 1;
    double num1 = 0.0, w1 = 0.0, num0 = 0.0;
    for (int j = 0; j < m; ++j) {
      const ClusterData& cl = blk.clusters[j];
      if (in[j]) {
        num1 += cl.w * cl.ybar1;
        w1 += cl.w;
      } else {
        num0 += cl.w * cl.ybar0;
      }
    }
    const double w0 = wtot - w1;
    const double r1 = num1 / w1;
    const double r0 = num0 / w0;
    e_r1.add(r1);
    e_r0.add(r0);
    e_r1w.add(r1 * w1 / m1);
    e_r0w.add(r0 * w0 / m0);

    int i = m1 - 1;
    while (i >= 0 && combo[i] == m - m1 + i) --i;
    if (i < 0) break;
    ++combo[i];
    for (int j = i + 1; j < m1; ++j) combo[j] = combo[j - 1] + 1;
  }

  // E[w^t_b / m^t_b] = wbar_b exactly by inclusion symmetry.
  HartleyBias hb;
  hb.cov_treated = e_r1w.value() / n_subsets -
                   (e_r1.value() / n_subsets) * blk.wbar;
  hb.cov_control = e_r0w.value() / n_subsets -
                   (e_r0.value() / n_subsets) * blk.wbar;
  hb.total = -(m / wtot) * hb.cov_treated + (m / wtot) * hb.cov_control;
  return hb;
}

}  // namespace clusterate
