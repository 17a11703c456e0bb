#pragma once

// Shared oracles for the redundancy tests and the acceptance binary.

#include <random>
#include <vector>

#include "kp/cluster.hpp"
#include "kp/exchange.hpp"
#include "kp/harness.hpp"
#include "kp/redundancy.hpp"

namespace kp::testing {

inline std::vector<double> random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Non-owner nodes whose backup store holds (owner, s, stamp).
inline int holders(const ClusterSim& cl, int owner, int s, int stamp) {
  int count = 0;
  for (int k = 0; k < cl.nodes(); ++k)
    if (k != owner && cl.backups(k).find(owner, s, stamp)) ++count;
  return count;
}

/// One protected exchange that stores stamps 1 and 2 (v at 2, piggyback at 1).
inline void protected_exchange(ClusterSim& cl, const DistributedMatrix& dist, const RedundancyPlan& plan,
                               std::uint64_t seed) {
  const auto part = dist.partition_ptr();
  const auto v = DistributedVector::from_global(part, random_vector(dist.n(), seed), Role::c, 2);
  const auto pig = DistributedVector::from_global(part, random_vector(dist.n(), seed + 1), Role::c, 1);
  DistributedVector out(part, Role::d, 2);
  ExchangeOptions o;
  o.plan = &plan;
  o.piggyback = &pig;
  spmv_exchange(cl, dist, v, out, o);
}

/// First (owner, element, stamp) with fewer than n_redu non-owner copies, or
/// owner -1 when every element is covered.
struct Uncovered {
  int owner = -1;
  int s = -1;
  int stamp = -1;
};

inline Uncovered first_uncovered(const ClusterSim& cl, const BlockRowPartition& part, int n_redu) {
  for (int j = 0; j < part.nodes(); ++j)
    for (int s = part.range(j).begin; s < part.range(j).end; ++s)
      for (int stamp : {1, 2})
        if (holders(cl, j, s, stamp) < n_redu) return {j, s, stamp};
  return {};
}

/// Random SPD matrix for pattern number `idx` of the brute-force suites.
inline CsrMatrix pattern(int idx) {
  std::mt19937_64 rng(0x5eed0000u + static_cast<std::uint64_t>(idx));
  const int n = std::uniform_int_distribution<int>(16, 256)(rng);
  const int per_row = std::uniform_int_distribution<int>(1, 8)(rng);
  return random_spd(n, per_row, rng());
}

}  // namespace kp::testing
