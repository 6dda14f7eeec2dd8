#pragma once

#include <cstdint>
#include <string>

namespace clusterate {

// xoshiro256++ with splitmix64 stream derivation. All draws are produced by
// code in this file, so sequences are bit-identical across platforms and
// standard-library versions. Substreams are derived from (seed, s1, s2, s3),
// e.g. (seed, repeat, draw), so parallel and serial runs see the same
// deviates.
class Rng {
 public:
  static constexpr const char* kAlgorithmId = "xoshiro256++/splitmix64-streams";

  explicit Rng(std::uint64_t seed, std::uint64_t s1 = 0, std::uint64_t s2 = 0,
               std::uint64_t s3 = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform01();

  // Uniform integer on [0, n), n >= 1, by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n);

  // Standard normal deviate (Box-Muller, pair-cached).
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t splitmix64_next(std::uint64_t& state);

}  // namespace clusterate
