#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kp/backup_store.hpp"
#include "kp/distributed.hpp"

namespace kp {

enum class MsgTag : std::uint8_t {
  halo,
  precond_halo,
  gather,
  backup_request,
  backup_reply,
  scalar_request,
  scalar_reply,
  replacement_exchange,
  user,
};
std::string_view to_string(MsgTag tag);
inline constexpr int kTagCount = 9;

struct Message {
  MsgTag tag = MsgTag::user;
  int from = -1;
  int to = -1;
  int stamp = 0;
  Role role = Role::other;
  int owner = -1;  // rank whose data the payload describes, when not `from`
  std::vector<int> indices;
  std::vector<double> values;
};

enum class EventKind : std::uint8_t {
  send,
  recv,
  reduction_start,
  reduction_complete,
  reduction_failed,
  precond_apply,
  spmv,
  failure,
  spawn,
  recovery_begin,
  recovery_end,
  residual_replacement,
  local_solve,
};
std::string_view to_string(EventKind kind);

struct TraceEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::send;
  int node = -1;
  int peer = -1;
  MsgTag tag = MsgTag::user;
  int iteration = -1;
  std::uint64_t count = 0;
};

struct VolumeCounters {
  std::uint64_t messages = 0;
  std::uint64_t pattern_elements = 0;    // halo payload required by the sparsity pattern
  std::uint64_t redundant_elements = 0;  // piggybacked backup copies
  std::uint64_t precond_elements = 0;
  std::uint64_t recovery_elements = 0;   // gathers, backup and scalar retrieval, replacement exchange
  std::uint64_t reductions = 0;
  std::vector<std::uint64_t> per_tag = std::vector<std::uint64_t>(kTagCount, 0);
  std::vector<std::uint64_t> redundant_by_sender;
};

struct ReductionHandle {
  std::uint64_t id = 0;
};

/// Deterministic stand-in for a message-passing runtime with failure
/// notification and replacement processes. All node activity is driven by a
/// single-threaded caller; a node's memory is its NodeContext plus the blocks
/// it owns in the solver's DistributedVectors.
class ClusterSim {
 public:
  explicit ClusterSim(int nodes);

  int nodes() const noexcept { return static_cast<int>(ctx_.size()); }
  bool alive(int node) const { return ctx_.at(node).alive; }
  std::vector<int> live_ranks() const;
  std::vector<int> failed_ranks() const;
  int incarnation(int node) const { return ctx_.at(node).incarnation; }

  /// Point-to-point, FIFO per ordered pair. Sending to a failed node throws
  /// DeliveryFailure at the sender.
  void send(Message msg);
  Message recv(int at, int from);
  std::optional<Message> try_recv(int at, int from);
  std::size_t pending(int at, int from) const;

  /// Non-blocking sum reduction. Every live node contributes once per
  /// reduction; handles are matched by per-node call order. wait() returns
  /// bitwise identical sums on every participant or throws ReductionFailure
  /// if a participant failed before the result was formed.
  ReductionHandle iallreduce_sum(int node, std::span<const double> values);
  std::vector<double> wait(const ReductionHandle& handle, int node);

  /// Marks victims failed: their node contexts and undelivered inbound
  /// messages are destroyed and pending reductions involving them fail.
  void inject_failure(std::span<const int> victims);
  int spawn_replacement(int rank);

  BackupStore& backups(int node);
  const BackupStore& backups(int node) const;
  ScalarLedger& ledger(int node);
  const ScalarLedger& ledger(int node) const;

  /// Survivors send their blocks of each requested vector to `replacement`.
  /// Returns one global-length buffer per request holding the complement
  /// blocks; rows of failed ranks are NaN. A survivor whose block is lost or
  /// whose vector carries another role or stamp is a hard error.
  struct GatherRequest {
    Role role;
    int stamp;
    const DistributedVector* source;
  };
  std::vector<std::vector<double>> gather_from_survivors(int replacement, std::span<const int> failed,
                                                         std::span<const GatherRequest> requests);

  void note(EventKind kind, int node, std::uint64_t count = 0, int peer = -1, MsgTag tag = MsgTag::user);
  void set_iteration(int iteration) noexcept { iteration_ = iteration; }
  int iteration() const noexcept { return iteration_; }
  void set_trace_enabled(bool on) noexcept { trace_on_ = on; }
  const std::vector<TraceEvent>& trace() const noexcept { return trace_; }
  void clear_trace() { trace_.clear(); }
  std::uint64_t step() const noexcept { return seq_; }

  const VolumeCounters& counters() const noexcept { return counters_; }
  VolumeCounters& counters() noexcept { return counters_; }
  void reset_counters();

 private:
  struct NodeContext {
    bool alive = true;
    int incarnation = 0;
    std::uint64_t next_reduction = 0;
    BackupStore backups;
    ScalarLedger ledger;
  };
  struct PendingReduction {
    std::vector<int> participants;
    std::map<int, std::vector<double>> contributions;
    std::optional<std::vector<double>> result;
    std::vector<int> waited;
    bool failed = false;
    std::vector<int> failed_ranks;
  };

  std::deque<Message>& channel(int from, int to) { return channels_[static_cast<std::size_t>(from) * nodes() + to]; }
  const std::deque<Message>& channel(int from, int to) const {
    return channels_[static_cast<std::size_t>(from) * nodes() + to];
  }
  void require_live(int node, const char* what) const;
  void record(TraceEvent ev);
  void count_payload(const Message& msg);

  std::vector<NodeContext> ctx_;
  std::vector<std::deque<Message>> channels_;
  std::map<std::uint64_t, PendingReduction> reductions_;
  std::vector<TraceEvent> trace_;
  VolumeCounters counters_;
  std::uint64_t seq_ = 0;
  int iteration_ = -1;
  bool trace_on_ = true;
};

}  // namespace kp
