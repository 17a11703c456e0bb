#include "kp/cluster.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "kp/error.hpp"
#include "kp/reduce.hpp"

namespace kp {

std::string_view to_string(MsgTag tag) {
  switch (tag) {
    case MsgTag::halo: return "halo";
    case MsgTag::precond_halo: return "precond_halo";
    case MsgTag::gather: return "gather";
    case MsgTag::backup_request: return "backup_request";
    case MsgTag::backup_reply: return "backup_reply";
    case MsgTag::scalar_request: return "scalar_request";
    case MsgTag::scalar_reply: return "scalar_reply";
    case MsgTag::replacement_exchange: return "replacement_exchange";
    case MsgTag::user: break;
  }
  return "user";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::send: return "send";
    case EventKind::recv: return "recv";
    case EventKind::reduction_start: return "reduction_start";
    case EventKind::reduction_complete: return "reduction_complete";
    case EventKind::reduction_failed: return "reduction_failed";
    case EventKind::precond_apply: return "precond_apply";
    case EventKind::spmv: return "spmv";
    case EventKind::failure: return "failure";
    case EventKind::spawn: return "spawn";
    case EventKind::recovery_begin: return "recovery_begin";
    case EventKind::recovery_end: return "recovery_end";
    case EventKind::residual_replacement: return "residual_replacement";
    case EventKind::local_solve: return "local_solve";
  }
  return "unknown";
}

ClusterSim::ClusterSim(int nodes) {
  if (nodes < 1) throw InvalidArgument("cluster needs at least one node");
  ctx_.resize(nodes);
  channels_.resize(static_cast<std::size_t>(nodes) * nodes);
  counters_.redundant_by_sender.assign(nodes, 0);
}

std::vector<int> ClusterSim::live_ranks() const {
  std::vector<int> out;
  for (int j = 0; j < nodes(); ++j)
    if (ctx_[j].alive) out.push_back(j);
  return out;
}

std::vector<int> ClusterSim::failed_ranks() const {
  std::vector<int> out;
  for (int j = 0; j < nodes(); ++j)
    if (!ctx_[j].alive) out.push_back(j);
  return out;
}

void ClusterSim::require_live(int node, const char* what) const {
  if (node < 0 || node >= nodes()) throw InvalidArgument(std::string(what) + ": rank " + std::to_string(node) + " out of range");
  if (!ctx_[node].alive) throw InternalError(std::string(what) + ": node " + std::to_string(node) + " has failed");
}

void ClusterSim::record(TraceEvent ev) {
  ev.seq = seq_++;
  if (ev.iteration < 0) ev.iteration = iteration_;
  if (trace_on_) trace_.push_back(ev);
}

void ClusterSim::note(EventKind kind, int node, std::uint64_t count, int peer, MsgTag tag) {
  record({0, kind, node, peer, tag, iteration_, count});
}

void ClusterSim::count_payload(const Message& msg) {
  counters_.messages++;
  const auto n = static_cast<std::uint64_t>(msg.values.size());
  counters_.per_tag[static_cast<int>(msg.tag)] += n;
  switch (msg.tag) {
    case MsgTag::precond_halo: counters_.precond_elements += n; break;
    case MsgTag::gather:
    case MsgTag::backup_request:
    case MsgTag::backup_reply:
    case MsgTag::scalar_request:
    case MsgTag::scalar_reply:
    case MsgTag::replacement_exchange: counters_.recovery_elements += n; break;
    default: break;  // halo volume is split into pattern/redundant by the exchange
  }
}

void ClusterSim::send(Message msg) {
  require_live(msg.from, "send");
  if (msg.to < 0 || msg.to >= nodes()) throw InvalidArgument("send: destination out of range");
  if (!ctx_[msg.to].alive) throw DeliveryFailure(msg.from, msg.to);
  count_payload(msg);
  record({0, EventKind::send, msg.from, msg.to, msg.tag, iteration_, msg.values.size()});
  channel(msg.from, msg.to).push_back(std::move(msg));
}

std::optional<Message> ClusterSim::try_recv(int at, int from) {
  require_live(at, "recv");
  if (from < 0 || from >= nodes()) throw InvalidArgument("recv: source out of range");
  auto& ch = channel(from, at);
  if (ch.empty()) return std::nullopt;
  Message msg = std::move(ch.front());
  ch.pop_front();
  record({0, EventKind::recv, at, from, msg.tag, iteration_, msg.values.size()});
  return msg;
}

Message ClusterSim::recv(int at, int from) {
  auto msg = try_recv(at, from);
  // The driver schedules every send before its matching receive, so an empty
  // channel here means the node would block forever.
  if (!msg) {
    if (!ctx_.at(from).alive) throw DeliveryFailure(from, at);
    throw InternalError("recv at node " + std::to_string(at) + " from " + std::to_string(from) + ": no message (deadlock)");
  }
  return std::move(*msg);
}

std::size_t ClusterSim::pending(int at, int from) const { return channel(from, at).size(); }

ReductionHandle ClusterSim::iallreduce_sum(int node, std::span<const double> values) {
  require_live(node, "iallreduce_sum");
  const std::uint64_t id = ctx_[node].next_reduction++;
  auto [it, created] = reductions_.try_emplace(id);
  PendingReduction& red = it->second;
  if (created) {
    red.participants = live_ranks();
    counters_.reductions++;
  }
  if (!std::binary_search(red.participants.begin(), red.participants.end(), node))
    throw InternalError("node " + std::to_string(node) + " joined reduction " + std::to_string(id) + " late");
  if (red.contributions.count(node)) throw InternalError("duplicate contribution to reduction");
  if (!red.contributions.empty() && red.contributions.begin()->second.size() != values.size())
    throw InvalidArgument("iallreduce_sum: contribution lengths differ");
  red.contributions.emplace(node, std::vector<double>(values.begin(), values.end()));
  record({0, EventKind::reduction_start, node, -1, MsgTag::user, iteration_, values.size()});
  return {id};
}

std::vector<double> ClusterSim::wait(const ReductionHandle& handle, int node) {
  require_live(node, "wait");
  auto it = reductions_.find(handle.id);
  if (it == reductions_.end()) throw InternalError("wait on unknown or retired reduction");
  PendingReduction& red = it->second;
  if (!red.result && !red.failed) {
    for (int p : red.participants) {
      if (!ctx_[p].alive) {
        red.failed = true;
        red.failed_ranks.push_back(p);
      }
    }
    if (!red.failed) {
      std::vector<std::vector<double>> parts;
      for (int p : red.participants) {
        auto c = red.contributions.find(p);
        if (c == red.contributions.end())
          throw InternalError("wait at node " + std::to_string(node) + ": rank " + std::to_string(p) +
                              " has not contributed (deadlock)");
        parts.push_back(c->second);
      }
      red.result = tree_sum(std::move(parts));
    }
  }
  if (red.failed) {
    record({0, EventKind::reduction_failed, node, -1, MsgTag::user, iteration_, 0});
    auto failed = red.failed_ranks;
    red.waited.push_back(node);
    bool all = true;
    for (int p : red.participants)
      if (ctx_[p].alive && std::find(red.waited.begin(), red.waited.end(), p) == red.waited.end()) all = false;
    if (all) reductions_.erase(it);
    throw ReductionFailure(std::move(failed));
  }
  record({0, EventKind::reduction_complete, node, -1, MsgTag::user, iteration_, red.result->size()});
  auto out = *red.result;
  red.waited.push_back(node);
  if (red.waited.size() == red.participants.size()) reductions_.erase(it);
  return out;
}

void ClusterSim::inject_failure(std::span<const int> victims) {
  std::vector<int> v(victims.begin(), victims.end());
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw InvalidArgument("inject_failure: duplicate victim");
  for (int f : v) require_live(f, "inject_failure");
  for (int f : v) {
    ctx_[f].alive = false;
    ctx_[f].backups.clear();
    ctx_[f].ledger.clear();
    for (int k = 0; k < nodes(); ++k) channel(k, f).clear();
    record({0, EventKind::failure, f, -1, MsgTag::user, iteration_, 0});
  }
  for (auto& [id, red] : reductions_) {
    if (red.result) continue;
    for (int f : v)
      if (std::binary_search(red.participants.begin(), red.participants.end(), f)) {
        red.failed = true;
        red.failed_ranks.push_back(f);
      }
  }
}

int ClusterSim::spawn_replacement(int rank) {
  if (rank < 0 || rank >= nodes()) throw InvalidArgument("spawn_replacement: rank out of range");
  if (ctx_[rank].alive) throw InvalidArgument("spawn_replacement: node " + std::to_string(rank) + " has not failed");
  NodeContext fresh;
  fresh.incarnation = ctx_[rank].incarnation + 1;
  for (int j = 0; j < nodes(); ++j)
    if (ctx_[j].alive) fresh.next_reduction = std::max(fresh.next_reduction, ctx_[j].next_reduction);
  ctx_[rank] = std::move(fresh);
  for (int k = 0; k < nodes(); ++k) channel(rank, k).clear();
  record({0, EventKind::spawn, rank, -1, MsgTag::user, iteration_, 0});
  return rank;
}

BackupStore& ClusterSim::backups(int node) {
  require_live(node, "backups");
  return ctx_[node].backups;
}
const BackupStore& ClusterSim::backups(int node) const {
  require_live(node, "backups");
  return ctx_[node].backups;
}
ScalarLedger& ClusterSim::ledger(int node) {
  require_live(node, "ledger");
  return ctx_[node].ledger;
}
const ScalarLedger& ClusterSim::ledger(int node) const {
  require_live(node, "ledger");
  return ctx_[node].ledger;
}

std::vector<std::vector<double>> ClusterSim::gather_from_survivors(int replacement, std::span<const int> failed,
                                                                   std::span<const GatherRequest> requests) {
  require_live(replacement, "gather_from_survivors");
  std::vector<int> lost(failed.begin(), failed.end());
  std::sort(lost.begin(), lost.end());
  std::vector<int> survivors;
  for (int j = 0; j < nodes(); ++j)
    if (!std::binary_search(lost.begin(), lost.end(), j)) survivors.push_back(j);
  if (survivors.empty()) throw UnrecoverableFailure("gather: no surviving node holds any state");
  for (int s : survivors) require_live(s, "gather_from_survivors");

  std::vector<std::vector<double>> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    if (!req.source) throw InvalidArgument("gather: null source vector");
    const auto& v = *req.source;
    if (v.role != req.role || v.stamp != req.stamp)
      throw InternalError("gather: survivors hold " + std::string(to_string(v.role)) + "@" + std::to_string(v.stamp) +
                          ", requested " + std::string(to_string(req.role)) + "@" + std::to_string(req.stamp));
    if (v.nodes() != nodes()) throw InvalidArgument("gather: vector partition does not match cluster");
    std::vector<double> global(v.size(), std::numeric_limits<double>::quiet_NaN());
    for (int s : survivors) {
      if (v.lost(s))
        throw InternalError("gather: survivor " + std::to_string(s) + " lacks block " + std::string(to_string(req.role)) +
                            "@" + std::to_string(req.stamp));
      auto blk = v.block(s);
      Message msg;
      msg.tag = MsgTag::gather;
      msg.from = s;
      msg.to = replacement;
      msg.stamp = req.stamp;
      msg.role = req.role;
      msg.owner = s;
      msg.values.assign(blk.begin(), blk.end());
      if (s == replacement) {
        // A survivor acting as lead replacement already holds its own block.
        std::copy(blk.begin(), blk.end(), global.begin() + v.partition().range(s).begin);
        continue;
      }
      send(std::move(msg));
    }
    for (int s : survivors) {
      if (s == replacement) continue;
      Message msg = recv(replacement, s);
      if (msg.tag != MsgTag::gather || msg.role != req.role || msg.stamp != req.stamp)
        throw InternalError("gather: out-of-order reply");
      std::copy(msg.values.begin(), msg.values.end(), global.begin() + v.partition().range(s).begin);
    }
    out.push_back(std::move(global));
  }
  return out;
}

void ClusterSim::reset_counters() {
  counters_ = VolumeCounters{};
  counters_.redundant_by_sender.assign(nodes(), 0);
}

}  // namespace kp
