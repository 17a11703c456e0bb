#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kp/cluster.hpp"
#include "kp/solver.hpp"

namespace kp {

/// What a replacement node can see when it starts recovering iteration t.
/// `current` is the solver state at t and `previous` the state at t-1; in
/// both, the blocks of the failed ranks are already discarded.
struct RecoveryContext {
  const Problem& problem;
  ClusterSim& cluster;
  std::vector<int> failed;  // sorted; replacements already spawned
  int t = 0;
  const SolverState& current;
  const SolverState* previous = nullptr;
  int n_redu = 1;
};

/// Smallest iteration each method can rebuild; below it the solver restarts
/// from initialization.
int min_recoverable_iteration(Method m);

/// The reconstructions return `current` with the failed blocks filled in.
SolverState recover_pcg(const RecoveryContext& ctx, RecoveryReport& report);
SolverState recover_ppcg(const RecoveryContext& ctx, RecoveryReport& report);
SolverState recover_ppcr(const RecoveryContext& ctx, RecoveryReport& report);
SolverState recover_2ppcg(const RecoveryContext& ctx, RecoveryReport& report);
SolverState recover(Method m, const RecoveryContext& ctx, RecoveryReport& report);

/// Reduction results for (scalar, stamp), read from the first survivor that
/// still holds each one.
std::vector<double> retrieve_scalars(ClusterSim& cluster, int replacement, std::span<const int> failed,
                                     std::span<const std::pair<Scalar, int>> wanted);

/// Per-vector relative error ||v_r - v_r^pre|| / max(||v_r^pre||, 1e-300)
/// over the rows of the given ranks; scalars are reported as "#name".
std::map<std::string, double> compare_blocks(const SolverState& recovered, const SolverState& reference,
                                             std::span<const int> ranks);

}  // namespace kp
