#include "kp/redundancy.hpp"

#include <algorithm>
#include <string>

#include "kp/error.hpp"

namespace kp {

bool SendSets::contains(int j, int k, int s) const {
  const auto& set = send.at(j).at(k);
  return std::binary_search(set.begin(), set.end(), s);
}

SendSets compute_send_sets(const DistributedMatrix& a) {
  SendSets out;
  out.part = a.partition_ptr();
  const int nn = a.nodes();
  out.send.assign(nn, std::vector<std::vector<int>>(nn));
  out.multiplicity.resize(nn);
  for (int j = 0; j < nn; ++j) {
    const auto range = a.partition().range(j);
    out.multiplicity[j].assign(range.size(), 0);
    for (int k = 0; k < nn; ++k) {
      if (k == j) continue;
      auto needs = a.needs(k, j);
      out.send[j][k].assign(needs.begin(), needs.end());
      for (int s : needs) out.multiplicity[j][s - range.begin]++;
    }
  }
  return out;
}

int backup_target(int j, int k, int nn) {
  if (nn < 2) throw InvalidArgument("backup_target: needs at least two nodes");
  if (j < 0 || j >= nn) throw InvalidArgument("backup_target: rank out of range");
  if (k < 1 || k >= nn) throw InvalidArgument("backup_target: k must lie in [1, nn)");
  const int t = (k % 2 == 1) ? j + (k + 1) / 2 : j - k / 2;
  return ((t % nn) + nn) % nn;
}

std::string_view to_string(RedundancyRule rule) {
  return rule == RedundancyRule::minimal ? "minimal" : "threshold";
}

RedundancyRule parse_redundancy_rule(std::string_view name) {
  if (name == "minimal") return RedundancyRule::minimal;
  if (name == "threshold") return RedundancyRule::threshold;
  throw InvalidArgument("unknown redundancy rule '" + std::string(name) + "'");
}

RedundancyPlan compute_redundant_sets(const SendSets& sets, int n_redu, RedundancyRule rule) {
  const int nn = sets.nodes();
  if (n_redu < 1) throw InvalidArgument("redundancy level must be at least 1");
  if (n_redu >= nn)
    throw InvalidArgument("redundancy level " + std::to_string(n_redu) + " needs more than " + std::to_string(nn) +
                          " nodes");
  RedundancyPlan plan;
  plan.n_redu = n_redu;
  plan.rule = rule;
  plan.sets = sets;
  plan.targets.assign(nn, std::vector<int>(n_redu));
  plan.redundant.assign(nn, std::vector<std::vector<int>>(n_redu));
  for (int j = 0; j < nn; ++j) {
    for (int k = 1; k <= n_redu; ++k) plan.targets[j][k - 1] = backup_target(j, k, nn);
    const auto range = sets.part->range(j);
    for (int s = range.begin; s < range.end; ++s) {
      const int m = sets.m(j, s);
      if (rule == RedundancyRule::minimal) {
        int assigned = 0;
        for (int k = 1; k <= n_redu && m + assigned < n_redu; ++k) {
          if (sets.contains(j, plan.targets[j][k - 1], s)) continue;
          plan.redundant[j][k - 1].push_back(s);
          ++assigned;
        }
      } else {
        int g = 0;
        for (int k = 1; k <= n_redu; ++k) g += sets.contains(j, plan.targets[j][k - 1], s) ? 1 : 0;
        for (int k = 1; k <= n_redu; ++k)
          if (!sets.contains(j, plan.targets[j][k - 1], s) && m - g <= n_redu - k) plan.redundant[j][k - 1].push_back(s);
      }
    }
  }
  return plan;
}

std::span<const int> RedundancyPlan::extra_to(int j, int t) const {
  const auto& tj = targets.at(j);
  for (std::size_t k = 0; k < tj.size(); ++k)
    if (tj[k] == t) return redundant[j][k];
  return {};
}

std::size_t RedundancyPlan::max_redundant_per_node() const {
  std::size_t best = 0;
  for (const auto& rj : redundant) {
    std::size_t total = 0;
    for (const auto& r : rj) total += r.size();
    best = std::max(best, total);
  }
  return best;
}

RetrievedBlocks retrieve_backups(ClusterSim& cluster, int replacement, std::span<const int> failed,
                                 std::span<const int> stamps, const BlockRowPartition& part, int n_redu) {
  const int nn = cluster.nodes();
  std::vector<int> lost(failed.begin(), failed.end());
  std::sort(lost.begin(), lost.end());
  auto is_lost = [&](int r) { return std::binary_search(lost.begin(), lost.end(), r); };
  if (static_cast<int>(lost.size()) >= nn) throw UnrecoverableFailure("retrieve_backups: no survivors");

  RetrievedBlocks out;
  for (int f : lost) {
    const auto range = part.range(f);
    // Holders in the order the exchange placed redundant copies, then the rest.
    std::vector<int> holders;
    for (int k = 1; k <= std::min(n_redu, nn - 1); ++k) {
      const int t = backup_target(f, k, nn);
      if (!is_lost(t)) holders.push_back(t);
    }
    for (int r = 0; r < nn; ++r)
      if (!is_lost(r) && std::find(holders.begin(), holders.end(), r) == holders.end()) holders.push_back(r);

    for (int stamp : stamps) {
      std::vector<double> block(range.size());
      std::vector<char> have(range.size(), 0);
      std::vector<int> missing(range.size());
      for (int i = 0; i < range.size(); ++i) missing[i] = range.begin + i;
      for (int h : holders) {
        if (missing.empty()) break;
        Message req;
        req.tag = MsgTag::backup_request;
        req.from = replacement;
        req.to = h;
        req.stamp = stamp;
        req.owner = f;
        req.indices = missing;
        if (h == replacement) {
          // Lead replacement is a survivor only in tests that call this directly.
          throw InternalError("retrieve_backups: replacement listed as holder");
        }
        cluster.send(std::move(req));
        Message got = cluster.recv(h, replacement);
        Message reply;
        reply.tag = MsgTag::backup_reply;
        reply.from = h;
        reply.to = replacement;
        reply.stamp = stamp;
        reply.owner = f;
        const auto& store = cluster.backups(h);
        for (int s : got.indices) {
          if (auto v = store.find(f, s, stamp)) {
            reply.indices.push_back(s);
            reply.values.push_back(*v);
          }
        }
        cluster.send(std::move(reply));
        Message ans = cluster.recv(replacement, h);
        for (std::size_t q = 0; q < ans.indices.size(); ++q) {
          const int li = ans.indices[q] - range.begin;
          block[li] = ans.values[q];
          have[li] = 1;
        }
        missing.erase(std::remove_if(missing.begin(), missing.end(), [&](int s) { return have[s - range.begin] != 0; }),
                      missing.end());
      }
      if (!missing.empty())
        throw UnrecoverableFailure("no surviving copy of " + std::to_string(missing.size()) + " element(s) of rank " +
                                   std::to_string(f) + " at stamp " + std::to_string(stamp) + " (first: row " +
                                   std::to_string(missing.front()) + "); more failures than the redundancy level covers");
      out.emplace(std::make_pair(f, stamp), std::move(block));
    }
  }
  return out;
}

}  // namespace kp
