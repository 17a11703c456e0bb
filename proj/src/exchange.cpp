#include "kp/exchange.hpp"

#include <algorithm>
#include <array>

#include "kp/error.hpp"
#include "kp/kernels.hpp"

namespace kp {

std::vector<std::vector<double>> halo_exchange(ClusterSim& cluster, const DistributedMatrix& a,
                                               const DistributedVector& v, const ExchangeOptions& opts) {
  const int nn = a.nodes();
  if (cluster.nodes() != nn || v.nodes() != nn) throw InvalidArgument("exchange: cluster/matrix/vector size mismatch");
  const RedundancyPlan* plan = opts.plan;
  const DistributedVector* pig = opts.piggyback;
  if (pig && !plan) throw InvalidArgument("exchange: piggyback vector needs a redundancy plan");
  auto& counters = cluster.counters();

  if (plan) {
    for (int k = 0; k < nn; ++k) {
      if (pig) {
        const std::array<int, 2> st{pig->stamp, v.stamp};
        cluster.backups(k).begin_exchange(st);
      } else {
        const std::array<int, 1> st{v.stamp};
        cluster.backups(k).begin_exchange(st);
      }
    }
  }

  // The piggyback block goes whole to the owner's backup targets and nowhere
  // else: exactly n_redu copies per element.
  auto pig_to = [&](int j, int k) {
    return pig && std::find(plan->targets[j].begin(), plan->targets[j].end(), k) != plan->targets[j].end();
  };

  // Send phase, rank order. Payload: [pattern | redundant] of v, then the
  // piggyback block when the receiver is a backup target.
  for (int j = 0; j < nn; ++j) {
    const auto range = a.partition().range(j);
    auto vj = v.block(j);
    for (int k = 0; k < nn; ++k) {
      if (k == j) continue;
      auto pattern = a.needs(k, j);
      auto extra = plan ? plan->extra_to(j, k) : std::span<const int>{};
      const bool with_pig = pig_to(j, k);
      if (pattern.empty() && extra.empty() && !with_pig) continue;
      Message msg;
      msg.tag = opts.tag;
      msg.from = j;
      msg.to = k;
      msg.stamp = v.stamp;
      msg.role = v.role;
      msg.owner = j;
      msg.indices.assign(pattern.begin(), pattern.end());
      msg.indices.insert(msg.indices.end(), extra.begin(), extra.end());
      msg.values.reserve(msg.indices.size() + (with_pig ? range.size() : 0));
      for (int s : msg.indices) msg.values.push_back(vj[s - range.begin]);
      if (with_pig) {
        auto pj = pig->block(j);
        msg.values.insert(msg.values.end(), pj.begin(), pj.end());
      }
      const auto redundant = static_cast<std::uint64_t>(msg.values.size() - pattern.size());
      counters.pattern_elements += pattern.size();
      counters.redundant_elements += redundant;
      counters.redundant_by_sender[j] += redundant;
      cluster.send(std::move(msg));
    }
  }

  // Receive phase: unpack halos, record backups.
  std::vector<std::vector<double>> ext(nn);
  for (int k = 0; k < nn; ++k) {
    const auto& loc = a.local(k);
    auto vk = v.block(k);
    ext[k].resize(loc.own() + loc.ghost_cols.size());
    std::copy(vk.begin(), vk.end(), ext[k].begin());
    for (int j = 0; j < nn; ++j) {
      if (j == k) continue;
      auto pattern = a.needs(k, j);
      auto extra = plan ? plan->extra_to(j, k) : std::span<const int>{};
      const bool with_pig = pig_to(j, k);
      if (pattern.empty() && extra.empty() && !with_pig) continue;
      Message msg = cluster.recv(k, j);
      if (msg.tag != opts.tag || msg.stamp != v.stamp) throw InternalError("exchange: unexpected message");
      const std::size_t cnt = msg.indices.size();
      std::copy(msg.values.begin(), msg.values.begin() + static_cast<std::ptrdiff_t>(pattern.size()),
                ext[k].begin() + loc.own() + loc.ghost_offset[j]);
      if (plan) {
        auto& store = cluster.backups(k);
        store.store(j, v.stamp, msg.indices, std::span<const double>(msg.values).first(cnt));
        if (with_pig) {
          const auto range = a.partition().range(j);
          std::vector<int> rows(static_cast<std::size_t>(range.size()));
          for (int i = 0; i < range.size(); ++i) rows[i] = range.begin + i;
          store.store(j, pig->stamp, rows, std::span<const double>(msg.values).subspan(cnt));
        }
      }
    }
  }
  return ext;
}

void spmv_exchange(ClusterSim& cluster, const DistributedMatrix& a, const DistributedVector& v,
                   DistributedVector& out, const ExchangeOptions& opts) {
  if (!out.same_layout(v)) throw InvalidArgument("spmv_exchange: output layout mismatch");
  auto ext = halo_exchange(cluster, a, v, opts);
  for (int k = 0; k < a.nodes(); ++k) {
    kernels::spmv(a.local(k).view(), ext[k], out.block(k));
    if (opts.tag == MsgTag::halo) cluster.note(EventKind::spmv, k, static_cast<std::uint64_t>(a.local(k).val.size()));
  }
}

}  // namespace kp
