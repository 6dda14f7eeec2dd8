#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clusterate/population.hpp"

namespace clusterate {

// m_b^1 = round(p_b * m_b), ties to even. Throws InfeasibleError when the
// rounded count leaves an arm empty.
int treated_count_for(int m_b, double p_b, const std::string& block_id);

// Uniform draw of the blocked design; independent across blocks; identical
// (pop, proportions, seed) gives an identical assignment bit for bit.
Assignment draw_assignment(const Population& pop,
                           const std::vector<double>& proportions,
                           std::uint64_t seed);

// Number of assignments Prod_b C(m_b, m_b^1); throws InfeasibleError beyond
// `cap`.
double assignment_space_size(const Population& pop,
                             const std::vector<int>& treated_counts);

constexpr double kDefaultEnumerationCap = 1e7;

// Visits every assignment exactly once in lexicographic order (per-block
// combinations in lexicographic order, last block fastest). The visitor may
// return false to stop early.
void enumerate_assignments(const Population& pop,
                           const std::vector<int>& treated_counts,
                           const std::function<bool(const Assignment&)>& visit,
                           double cap = kDefaultEnumerationCap);

// Convenience: treated counts from per-block proportions.
std::vector<int> treated_counts(const Population& pop,
                                const std::vector<double>& proportions);

// CSV audit dump: block,cluster,T rows.
std::string assignment_to_csv(const Population& pop, const Assignment& asg);

}  // namespace clusterate
