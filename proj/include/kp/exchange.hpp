#pragma once

#include "kp/cluster.hpp"
#include "kp/distributed.hpp"
#include "kp/redundancy.hpp"

namespace kp {

struct ExchangeOptions {
  /// Piggyback redundant copies and fill the receivers' backup stores.
  const RedundancyPlan* plan = nullptr;
  /// Second vector whose copies travel in the same messages (the two-step
  /// method stores c at two stamps during one SpMV). Requires `plan`.
  const DistributedVector* piggyback = nullptr;
  MsgTag tag = MsgTag::halo;
};

/// out = A v on every live node: each node sends the halo its neighbours need
/// (plus redundant copies), then multiplies its row block.
void spmv_exchange(ClusterSim& cluster, const DistributedMatrix& a, const DistributedVector& v,
                   DistributedVector& out, const ExchangeOptions& opts = {});

/// Sends only; returns per-node extended input buffers [own | ghosts]. Used
/// by operators that apply a local matrix to the halo-extended vector.
std::vector<std::vector<double>> halo_exchange(ClusterSim& cluster, const DistributedMatrix& a,
                                               const DistributedVector& v, const ExchangeOptions& opts = {});

}  // namespace kp
