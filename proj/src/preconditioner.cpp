#include "kp/preconditioner.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <string>

#include "kp/error.hpp"
#include "kp/exchange.hpp"

namespace kp {

std::string_view to_string(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::identity: return "identity";
    case PrecondKind::jacobi: return "jacobi";
    case PrecondKind::block_jacobi: return "block-jacobi";
    case PrecondKind::explicit_sparse: return "explicit";
  }
  return "unknown";
}

PrecondKind parse_precond_kind(std::string_view name) {
  if (name == "identity" || name == "none") return PrecondKind::identity;
  if (name == "jacobi") return PrecondKind::jacobi;
  if (name == "block-jacobi" || name == "block_jacobi" || name == "bjacobi") return PrecondKind::block_jacobi;
  if (name == "explicit" || name == "neumann1") return PrecondKind::explicit_sparse;
  throw InvalidArgument("unknown preconditioner '" + std::string(name) + "'");
}

Eigen::MatrixXd Preconditioner::offdiag_apply(std::span<const int> rows, const Eigen::MatrixXd& y) const {
  Eigen::MatrixXd masked = y;
  for (int r : rows) masked.row(r).setZero();
  // Columns outside the support are never read, but NaN rows of other failed
  // blocks must not leak into the product.
  for (Eigen::Index i = 0; i < masked.rows(); ++i)
    if (!masked.row(i).allFinite()) masked.row(i).setZero();
  return apply_rows(rows, masked);
}

Eigen::MatrixXd Preconditioner::times_columns(const CsrMatrix& a, std::span<const int> rows) const {
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(a.n, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t q = 0; q < rows.size(); ++q) {
    // A is symmetric: column rows[q] equals row rows[q].
    auto c = a.row_cols(rows[q]);
    auto v = a.row_vals(rows[q]);
    for (std::size_t k = 0; k < c.size(); ++k) cols(c[k], static_cast<Eigen::Index>(q)) = v[k];
  }
  return apply_rows(rows, cols);
}

namespace {

void note_apply(ClusterSim& cluster, int nodes) {
  for (int j = 0; j < nodes; ++j)
    if (cluster.alive(j)) cluster.note(EventKind::precond_apply, j);
}

class IdentityPrecond final : public Preconditioner {
 public:
  PrecondKind kind() const noexcept override { return PrecondKind::identity; }
  void apply(ClusterSim& cluster, const DistributedVector& in, DistributedVector& out) const override {
    for (int j = 0; j < in.nodes(); ++j) {
      auto src = in.block(j);
      std::copy(src.begin(), src.end(), out.block(j).begin());
    }
    note_apply(cluster, in.nodes());
  }
  std::vector<int> row_support(std::span<const int> rows) const override { return {rows.begin(), rows.end()}; }
  Eigen::MatrixXd apply_rows(std::span<const int> rows, const Eigen::MatrixXd& y) const override {
    return take_rows(rows, y);
  }
  Eigen::MatrixXd solve_diag(std::span<const int>, const Eigen::MatrixXd& rhs, LocalSolveStats* stats) const override {
    if (stats) stats->solves++;
    return rhs;
  }
};

class JacobiPrecond final : public Preconditioner {
 public:
  explicit JacobiPrecond(const CsrMatrix& a) {
    auto d = a.diagonal();
    inv_.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0)) throw InvalidArgument("jacobi: non-positive diagonal at row " + std::to_string(i));
      inv_[i] = 1.0 / d[i];
    }
  }
  PrecondKind kind() const noexcept override { return PrecondKind::jacobi; }
  void apply(ClusterSim& cluster, const DistributedVector& in, DistributedVector& out) const override {
    for (int j = 0; j < in.nodes(); ++j) {
      const int base = in.partition().range(j).begin;
      auto src = in.block(j);
      auto dst = out.block(j);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = inv_[base + i] * src[i];
    }
    note_apply(cluster, in.nodes());
  }
  std::vector<int> row_support(std::span<const int> rows) const override { return {rows.begin(), rows.end()}; }
  Eigen::MatrixXd apply_rows(std::span<const int> rows, const Eigen::MatrixXd& y) const override {
    Eigen::MatrixXd out = take_rows(rows, y);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) *= inv_[rows[i]];
    return out;
  }
  Eigen::MatrixXd solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                             LocalSolveStats* stats) const override {
    Eigen::MatrixXd out = rhs;
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) /= inv_[rows[i]];
    if (stats) stats->solves++;
    return out;
  }

 private:
  std::vector<double> inv_;
};

class BlockJacobiPrecond final : public Preconditioner {
 public:
  BlockJacobiPrecond(const CsrMatrix& a, PartitionPtr part) : part_(std::move(part)) {
    const int nn = part_->nodes();
    blocks_.resize(nn);
    factors_.resize(nn);
    for (int j = 0; j < nn; ++j) {
      const auto range = part_->range(j);
      std::vector<int> rows(range.size());
      for (int i = 0; i < range.size(); ++i) rows[i] = range.begin + i;
      blocks_[j] = extract_block(a, rows);
      factors_[j] = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>(blocks_[j]);
      if (factors_[j]->info() != Eigen::Success)
        throw InvalidArgument("block-jacobi: diagonal block of node " + std::to_string(j) + " is not positive definite");
    }
  }
  PrecondKind kind() const noexcept override { return PrecondKind::block_jacobi; }
  void apply(ClusterSim& cluster, const DistributedVector& in, DistributedVector& out) const override {
    for (int j = 0; j < in.nodes(); ++j) {
      auto src = in.block(j);
      auto dst = out.block(j);
      Eigen::Map<const Eigen::VectorXd> x(src.data(), static_cast<Eigen::Index>(src.size()));
      Eigen::Map<Eigen::VectorXd> y(dst.data(), static_cast<Eigen::Index>(dst.size()));
      y = factors_[j]->solve(x);
    }
    note_apply(cluster, in.nodes());
  }
  std::vector<int> row_support(std::span<const int> rows) const override {
    std::vector<int> out;
    for (int j : blocks_of(rows)) {
      const auto range = part_->range(j);
      for (int i = range.begin; i < range.end; ++i) out.push_back(i);
    }
    return out;
  }
  Eigen::MatrixXd apply_rows(std::span<const int> rows, const Eigen::MatrixXd& y) const override {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), y.cols());
    std::size_t pos = 0;
    for (int j : blocks_of(rows)) {
      const auto range = part_->range(j);
      const Eigen::MatrixXd z = factors_[j]->solve(y.middleRows(range.begin, range.size()));
      for (; pos < rows.size() && rows[pos] < range.end; ++pos)
        out.row(static_cast<Eigen::Index>(pos)) = z.row(rows[pos] - range.begin);
    }
    return out;
  }
  // P_rr = blockdiag(A_jj)^{-1}, so solving with it is a multiplication.
  Eigen::MatrixXd solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                             LocalSolveStats* stats) const override {
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    Eigen::Index pos = 0;
    for (int j : blocks_of(rows, true)) {
      const int sz = part_->size(j);
      out.middleRows(pos, sz) = blocks_[j] * rhs.middleRows(pos, sz);
      pos += sz;
    }
    if (stats) stats->solves++;
    return out;
  }

 private:
  // Ranks whose blocks intersect `rows` (sorted). With `whole`, rows must be
  // a union of complete node blocks.
  std::vector<int> blocks_of(std::span<const int> rows, bool whole = false) const {
    if (!std::is_sorted(rows.begin(), rows.end())) throw InvalidArgument("block-jacobi: row set must be sorted");
    std::vector<int> out;
    for (int r : rows) {
      const int j = part_->owner(r);
      if (out.empty() || out.back() != j) out.push_back(j);
    }
    if (whole) {
      std::size_t total = 0;
      for (int j : out) total += part_->size(j);
      if (total != rows.size()) throw InvalidArgument("block-jacobi: row set is not a union of node blocks");
    }
    return out;
  }

  PartitionPtr part_;
  std::vector<Eigen::SparseMatrix<double>> blocks_;
  std::vector<std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>> factors_;
};

class ExplicitPrecond final : public Preconditioner {
 public:
  ExplicitPrecond(CsrMatrix p, PartitionPtr part) : p_(std::move(p)), dist_(p_, std::move(part)) {}
  PrecondKind kind() const noexcept override { return PrecondKind::explicit_sparse; }
  void apply(ClusterSim& cluster, const DistributedVector& in, DistributedVector& out) const override {
    auto ext = halo_exchange(cluster, dist_, in, {.plan = nullptr, .piggyback = nullptr, .tag = MsgTag::precond_halo});
    for (int j = 0; j < in.nodes(); ++j) kernels::spmv(dist_.local(j).view(), ext[j], out.block(j));
    note_apply(cluster, in.nodes());
  }
  std::vector<int> row_support(std::span<const int> rows) const override {
    std::vector<int> out;
    for (int r : rows)
      for (int c : p_.row_cols(r)) out.push_back(c);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  Eigen::MatrixXd apply_rows(std::span<const int> rows, const Eigen::MatrixXd& y) const override {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto c = p_.row_cols(rows[i]);
      auto v = p_.row_vals(rows[i]);
      for (std::size_t k = 0; k < c.size(); ++k) out.row(static_cast<Eigen::Index>(i)) += v[k] * y.row(c[k]);
    }
    return out;
  }
  Eigen::MatrixXd solve_diag(std::span<const int> rows, const Eigen::MatrixXd& rhs,
                             LocalSolveStats* stats) const override {
    return solve_spd(extract_block(p_, rows), rhs, stats);
  }

 private:
  CsrMatrix p_;
  DistributedMatrix dist_;
};

}  // namespace

PrecondPtr make_preconditioner(PrecondKind kind, const CsrMatrix& a, PartitionPtr part, const CsrMatrix* explicit_p) {
  if (!part || part->rows() != a.n) throw InvalidArgument("preconditioner: partition does not match matrix");
  switch (kind) {
    case PrecondKind::identity: return std::make_shared<IdentityPrecond>();
    case PrecondKind::jacobi: return std::make_shared<JacobiPrecond>(a);
    case PrecondKind::block_jacobi: return std::make_shared<BlockJacobiPrecond>(a, std::move(part));
    case PrecondKind::explicit_sparse: {
      if (explicit_p && explicit_p->n != a.n) throw InvalidArgument("explicit preconditioner has wrong size");
      return std::make_shared<ExplicitPrecond>(explicit_p ? *explicit_p : neumann1(a), std::move(part));
    }
  }
  throw InvalidArgument("unknown preconditioner kind");
}

CsrMatrix neumann1(const CsrMatrix& a) {
  auto d = a.diagonal();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nnz()));
  for (int i = 0; i < a.n; ++i) {
    if (!(d[i] > 0)) throw InvalidArgument("neumann1: non-positive diagonal at row " + std::to_string(i));
    auto cols = a.row_cols(i);
    auto vals = a.row_vals(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double v = -vals[k] / (d[i] * d[cols[k]]);
      if (cols[k] == i) v += 2.0 / d[i];
      t.push_back({i, cols[k], v});
    }
  }
  return csr_from_triplets(a.n, std::move(t));
}

}  // namespace kp
