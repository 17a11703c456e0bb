#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "kp/csr.hpp"
#include "kp/kernels.hpp"
#include "kp/partition.hpp"

namespace kp {

using PartitionPtr = std::shared_ptr<const BlockRowPartition>;

inline PartitionPtr make_partition(int n, int nodes) {
  return std::make_shared<const BlockRowPartition>(n, nodes);
}

/// Row block A_{j,*} of one node. Columns are renumbered into the node's
/// extended buffer: [0, own) addresses its own block, [own, own + ghosts)
/// the received halo values in ghost_cols order.
struct LocalRows {
  RowRange rows;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;
  std::vector<int> ghost_cols;    // global indices, grouped by owner, ascending
  std::vector<int> ghost_offset;  // per owner k: ghost_cols[ghost_offset[k], ghost_offset[k+1])

  kernels::CsrView view() const { return {row_ptr, col, val}; }
  int own() const noexcept { return rows.size(); }
  int global_col(int local) const { return local < own() ? rows.begin + local : ghost_cols[local - own()]; }
};

/// Block-row distributed sparse matrix with its exact column-communication map.
class DistributedMatrix {
 public:
  DistributedMatrix() = default;
  DistributedMatrix(const CsrMatrix& a, PartitionPtr part);

  int n() const noexcept { return part_ ? part_->rows() : 0; }
  int nodes() const noexcept { return part_ ? part_->nodes() : 0; }
  const BlockRowPartition& partition() const { return *part_; }
  const PartitionPtr& partition_ptr() const noexcept { return part_; }
  const LocalRows& local(int node) const { return blocks_.at(node); }

  /// Global indices owned by `owner` that node `node` needs for its rows,
  /// i.e. the elements `owner` sends to `node` in every SpMV.
  std::span<const int> needs(int node, int owner) const;

  /// Reassembles the global matrix (inverse of distribution).
  CsrMatrix gather() const;

 private:
  PartitionPtr part_;
  std::vector<LocalRows> blocks_;
};

inline DistributedMatrix distribute(const CsrMatrix& a, PartitionPtr part) { return {a, std::move(part)}; }

/// Names of the solver vectors; used to stamp blocks and key gathers.
enum class Role : std::uint8_t { x, r, u, w, m, n, s, p, q, z, c, d, g, h, b, other };
std::string_view to_string(Role role);

/// A global vector split into per-node contiguous blocks. Block j is the
/// memory of simulated node j: a node failure discards it and only recovery
/// may restore it. Reading a discarded block throws InternalError.
class DistributedVector {
 public:
  DistributedVector() = default;
  DistributedVector(PartitionPtr part, Role role, int stamp = 0, double fill = 0.0);
  static DistributedVector from_global(PartitionPtr part, std::span<const double> global, Role role = Role::other,
                                       int stamp = 0);

  const BlockRowPartition& partition() const { return *part_; }
  const PartitionPtr& partition_ptr() const noexcept { return part_; }
  int nodes() const noexcept { return static_cast<int>(blocks_.size()); }
  int size() const noexcept { return part_ ? part_->rows() : 0; }

  std::span<double> block(int node);
  std::span<const double> block(int node) const;
  bool lost(int node) const { return lost_.at(node) != 0; }
  bool any_lost() const;
  void discard(int node);
  void restore(int node, std::span<const double> values);

  std::vector<double> gather() const;
  bool same_layout(const DistributedVector& other) const;

  Role role = Role::other;
  int stamp = 0;

 private:
  PartitionPtr part_;
  std::vector<std::vector<double>> blocks_;
  std::vector<std::uint8_t> lost_;
};

/// Per-node partial dot products, in rank order.
std::vector<double> local_dots(const DistributedVector& v, const DistributedVector& w);
/// Global dot product summed over the fixed binary rank tree (no messaging).
double dot(const DistributedVector& v, const DistributedVector& w);
/// Returns w + alpha v.
DistributedVector axpy(double alpha, const DistributedVector& v, const DistributedVector& w);

/// In-place node-local helpers used by the solvers; all check layouts.
void axpy_inplace(double alpha, const DistributedVector& x, DistributedVector& y);
void xpay_inplace(const DistributedVector& x, double beta, DistributedVector& y);
void three_term_inplace(double zeta, double eta, double theta, const DistributedVector& x,
                        const DistributedVector& v, DistributedVector& y);
void copy_into(const DistributedVector& src, DistributedVector& dst);

}  // namespace kp
