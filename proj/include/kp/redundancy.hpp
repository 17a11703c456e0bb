#pragma once

#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "kp/cluster.hpp"
#include "kp/distributed.hpp"

namespace kp {

/// Pattern-driven SpMV sends. send[j][k] is S_jk, the sorted global indices
/// of node j's block that node k needs; multiplicity m_j(s) counts the nodes
/// each element is sent to.
struct SendSets {
  PartitionPtr part;
  std::vector<std::vector<std::vector<int>>> send;
  std::vector<std::vector<int>> multiplicity;  // [j][s - begin_j]

  int nodes() const noexcept { return static_cast<int>(send.size()); }
  std::span<const int> S(int j, int k) const { return send.at(j).at(k); }
  int m(int j, int s) const { return multiplicity.at(j).at(s - part->range(j).begin); }
  bool contains(int j, int k, int s) const;
};

SendSets compute_send_sets(const DistributedMatrix& a);

/// Rank receiving node j's k-th redundant copy (k = 1, 2, ...): alternately
/// the next and the previous ranks, cyclically. Requires 1 <= k < nn.
int backup_target(int j, int k, int nn);

/// How the per-target redundant sets are chosen.
///  - minimal: element s goes to the first max(0, n_redu - m_j(s)) targets
///    that do not already receive it by the pattern. Every element ends up on
///    n_redu non-owner nodes and no element can be dropped.
///  - threshold: s goes to target k when it is not sent there by the pattern
///    and m_j(s) - g_j(s) <= n_redu - k, where g_j(s) counts the targets that
///    already receive s. Identical to `minimal` for n_redu = 1; for larger
///    n_redu it ships elements that are already covered.
enum class RedundancyRule { minimal, threshold };
std::string_view to_string(RedundancyRule rule);
RedundancyRule parse_redundancy_rule(std::string_view name);

struct RedundancyPlan {
  int n_redu = 0;
  RedundancyRule rule = RedundancyRule::minimal;
  SendSets sets;
  std::vector<std::vector<int>> targets;                // [j][k-1]
  std::vector<std::vector<std::vector<int>>> redundant;  // [j][k-1], sorted global indices

  int nodes() const noexcept { return sets.nodes(); }
  int target(int j, int k) const { return targets.at(j).at(k - 1); }
  std::span<const int> R(int j, int k) const { return redundant.at(j).at(k - 1); }
  /// Redundant elements node j piggybacks on its message to node t (empty if
  /// t is not one of j's targets).
  std::span<const int> extra_to(int j, int t) const;
  /// Largest number of redundant elements any node sends per exchange.
  std::size_t max_redundant_per_node() const;
};

RedundancyPlan compute_redundant_sets(const SendSets& sets, int n_redu, RedundancyRule rule = RedundancyRule::minimal);

/// Reassembles the blocks of failed ranks from the backup stores of the
/// survivors. Holders are asked in backup-target order, then by rank, until
/// every element is found. Returns, per failed rank and stamp, the block in
/// row order. Missing elements raise UnrecoverableFailure.
using RetrievedBlocks = std::map<std::pair<int, int>, std::vector<double>>;  // (rank, stamp) -> block
RetrievedBlocks retrieve_backups(ClusterSim& cluster, int replacement, std::span<const int> failed,
                                 std::span<const int> stamps, const BlockRowPartition& part, int n_redu);

}  // namespace kp
