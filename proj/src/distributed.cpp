#include "kp/distributed.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "kp/error.hpp"
#include "kp/reduce.hpp"

namespace kp {

DistributedMatrix::DistributedMatrix(const CsrMatrix& a, PartitionPtr part) : part_(std::move(part)) {
  if (!part_) throw InvalidArgument("distribute: null partition");
  if (part_->rows() != a.n) throw InvalidArgument("distribute: partition size does not match matrix");
  const int nn = part_->nodes();
  blocks_.resize(nn);
  for (int j = 0; j < nn; ++j) {
    LocalRows& blk = blocks_[j];
    blk.rows = part_->range(j);
    // Collect the remote column footprint of this row block.
    std::vector<int> ghosts;
    for (int i = blk.rows.begin; i < blk.rows.end; ++i)
      for (int c : a.row_cols(i))
        if (!blk.rows.contains(c)) ghosts.push_back(c);
    std::sort(ghosts.begin(), ghosts.end());
    ghosts.erase(std::unique(ghosts.begin(), ghosts.end()), ghosts.end());
    // Ascending global order is already grouped by owner for contiguous blocks.
    blk.ghost_cols = std::move(ghosts);
    blk.ghost_offset.assign(nn + 1, 0);
    for (int c : blk.ghost_cols) blk.ghost_offset[part_->owner(c) + 1]++;
    for (int k = 0; k < nn; ++k) blk.ghost_offset[k + 1] += blk.ghost_offset[k];

    blk.row_ptr.assign(1, 0);
    for (int i = blk.rows.begin; i < blk.rows.end; ++i) {
      auto cols = a.row_cols(i);
      auto vals = a.row_vals(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const int c = cols[k];
        int local;
        if (blk.rows.contains(c)) {
          local = c - blk.rows.begin;
        } else {
          auto it = std::lower_bound(blk.ghost_cols.begin(), blk.ghost_cols.end(), c);
          local = blk.own() + static_cast<int>(it - blk.ghost_cols.begin());
        }
        blk.col.push_back(local);
        blk.val.push_back(vals[k]);
      }
      blk.row_ptr.push_back(static_cast<std::int64_t>(blk.col.size()));
    }
  }
}

std::span<const int> DistributedMatrix::needs(int node, int owner) const {
  const auto& blk = blocks_.at(node);
  return std::span<const int>(blk.ghost_cols).subspan(blk.ghost_offset.at(owner),
                                                      blk.ghost_offset.at(owner + 1) - blk.ghost_offset.at(owner));
}

CsrMatrix DistributedMatrix::gather() const {
  CsrMatrix a;
  a.n = n();
  a.row_ptr.assign(1, 0);
  for (const auto& blk : blocks_) {
    for (int li = 0; li < blk.rows.size(); ++li) {
      std::vector<std::pair<int, double>> row;
      for (auto k = blk.row_ptr[li]; k < blk.row_ptr[li + 1]; ++k) row.emplace_back(blk.global_col(blk.col[k]), blk.val[k]);
      std::sort(row.begin(), row.end());
      for (auto& [c, v] : row) {
        a.col_idx.push_back(c);
        a.values.push_back(v);
      }
      a.row_ptr.push_back(static_cast<std::int64_t>(a.col_idx.size()));
    }
  }
  a.symmetric = a.is_symmetric();
  return a;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::x: return "x";
    case Role::r: return "r";
    case Role::u: return "u";
    case Role::w: return "w";
    case Role::m: return "m";
    case Role::n: return "n";
    case Role::s: return "s";
    case Role::p: return "p";
    case Role::q: return "q";
    case Role::z: return "z";
    case Role::c: return "c";
    case Role::d: return "d";
    case Role::g: return "g";
    case Role::h: return "h";
    case Role::b: return "b";
    case Role::other: break;
  }
  return "other";
}

DistributedVector::DistributedVector(PartitionPtr part, Role r, int st, double fill)
    : role(r), stamp(st), part_(std::move(part)) {
  if (!part_) throw InvalidArgument("DistributedVector: null partition");
  blocks_.resize(part_->nodes());
  lost_.assign(part_->nodes(), 0);
  for (int j = 0; j < part_->nodes(); ++j) blocks_[j].assign(part_->size(j), fill);
}

DistributedVector DistributedVector::from_global(PartitionPtr part, std::span<const double> global, Role r, int st) {
  DistributedVector v(std::move(part), r, st);
  if (static_cast<int>(global.size()) != v.size()) throw InvalidArgument("from_global: length mismatch");
  for (int j = 0; j < v.nodes(); ++j) {
    auto range = v.partition().range(j);
    std::copy(global.begin() + range.begin, global.begin() + range.end, v.blocks_[j].begin());
  }
  return v;
}

std::span<double> DistributedVector::block(int node) {
  if (lost_.at(node)) throw InternalError("read of discarded block " + std::string(to_string(role)) + "[" + std::to_string(node) + "]");
  return blocks_[node];
}

std::span<const double> DistributedVector::block(int node) const {
  if (lost_.at(node)) throw InternalError("read of discarded block " + std::string(to_string(role)) + "[" + std::to_string(node) + "]");
  return blocks_[node];
}

bool DistributedVector::any_lost() const {
  return std::any_of(lost_.begin(), lost_.end(), [](std::uint8_t l) { return l != 0; });
}

void DistributedVector::discard(int node) {
  if (node < 0 || node >= nodes()) return;
  blocks_[node].clear();
  blocks_[node].shrink_to_fit();
  lost_[node] = 1;
}

void DistributedVector::restore(int node, std::span<const double> values) {
  if (static_cast<int>(values.size()) != part_->size(node)) throw InvalidArgument("restore: block length mismatch");
  blocks_.at(node).assign(values.begin(), values.end());
  lost_[node] = 0;
}

std::vector<double> DistributedVector::gather() const {
  std::vector<double> out;
  out.reserve(size());
  for (int j = 0; j < nodes(); ++j) {
    auto b = block(j);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

bool DistributedVector::same_layout(const DistributedVector& other) const {
  if (!part_ || !other.part_) return false;
  return part_ == other.part_ || *part_ == *other.part_;
}

namespace {
void require_layout(const DistributedVector& a, const DistributedVector& b) {
  if (!a.same_layout(b)) throw InvalidArgument("distributed vectors have mismatched partitions");
}
}  // namespace

std::vector<double> local_dots(const DistributedVector& v, const DistributedVector& w) {
  require_layout(v, w);
  std::vector<double> out(v.nodes());
  for (int j = 0; j < v.nodes(); ++j) out[j] = kernels::dot(v.block(j), w.block(j));
  return out;
}

double dot(const DistributedVector& v, const DistributedVector& w) { return tree_sum_scalar(local_dots(v, w)); }

DistributedVector axpy(double alpha, const DistributedVector& v, const DistributedVector& w) {
  require_layout(v, w);
  DistributedVector out = w;
  axpy_inplace(alpha, v, out);
  return out;
}

void axpy_inplace(double alpha, const DistributedVector& x, DistributedVector& y) {
  require_layout(x, y);
  for (int j = 0; j < y.nodes(); ++j) kernels::axpy(alpha, x.block(j), y.block(j));
}

void xpay_inplace(const DistributedVector& x, double beta, DistributedVector& y) {
  require_layout(x, y);
  for (int j = 0; j < y.nodes(); ++j) kernels::xpay(x.block(j), beta, y.block(j));
}

void three_term_inplace(double zeta, double eta, double theta, const DistributedVector& x, const DistributedVector& v,
                        DistributedVector& y) {
  require_layout(x, y);
  require_layout(v, y);
  for (int j = 0; j < y.nodes(); ++j) kernels::three_term(zeta, eta, theta, x.block(j), v.block(j), y.block(j));
}

void copy_into(const DistributedVector& src, DistributedVector& dst) {
  require_layout(src, dst);
  for (int j = 0; j < dst.nodes(); ++j) {
    auto s = src.block(j);
    dst.restore(j, s);
  }
}

}  // namespace kp
